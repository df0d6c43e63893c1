#include "fedpall/federation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "fedpall/errors.hpp"
#include "fedpall/prototypes.hpp"

namespace fedpall {

namespace {

constexpr std::uint32_t kUploadMagic = 0x46505531;  // "FPU1"
constexpr std::uint16_t kUploadVersion = 1;

// Stream ids are disjoint from the ones the data generator uses, so a run
// whose drift seed equals the run seed still draws from unrelated streams.
constexpr std::uint64_t kInitStream = 0x1217ULL;
constexpr std::uint64_t kServerStream = 0x5E47ULL;
constexpr std::uint64_t kClientStreamBase = 0xC11E0000ULL;

bool need_uploads(const RunConfig& c) { return c.enable_kl || c.enable_global_classifier; }
bool need_prototypes(const RunConfig& c) { return c.enable_infonce || need_uploads(c); }

void append_bytes(std::vector<std::uint8_t>& out, const void* src, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(src);
    out.insert(out.end(), p, p + n);
}

template <typename T>
T read_value(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    if (offset + sizeof(T) > bytes.size()) {
        throw ParseError("upload batch truncated");
    }
    T value;
    std::memcpy(&value, bytes.data() + offset, sizeof(T));
    offset += sizeof(T);
    return value;
}

std::vector<int> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    return idx;
}

std::vector<int> gather_labels(std::span<const int> labels, std::span<const int> indices) {
    std::vector<int> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out[i] = labels[static_cast<std::size_t>(indices[i])];
    }
    return out;
}

// One shuffled epoch of plain cross-entropy SGD on fixed inputs. Returns
// the mean batch loss.
double train_ce_epoch(MlpParams& model, const DenseMatrix& x, std::span<const int> labels,
                      std::size_t batch_size, double lr, Rng& rng) {
    const std::vector<int> order = shuffled_indices(x.rows, rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, order.size() - start);
        const std::span<const int> chunk(order.data() + start, len);
        const DenseMatrix xb = take_rows(x, chunk);
        const std::vector<int> yb = gather_labels(labels, chunk);
        ForwardCache cache;
        const DenseMatrix probs = forward_mlp(model, xb, &cache);
        const LossOutput ce = cross_entropy_loss(probs, yb);
        const BackwardResult back = backward_mlp(model, cache, ce.grad);
        model = sgd_step(model, back.gradients, lr);
        total += ce.value;
        ++batches;
    }
    return total / static_cast<double>(batches);
}

struct EvalResult {
    double top1 = 0.0;
    double ce = 0.0;
};

EvalResult evaluate_model(const MlpParams& extractor, const MlpParams& classifier,
                          const DenseMatrix& x, std::span<const int> labels) {
    const DenseMatrix feats = extract_features(extractor, x);
    const DenseMatrix probs = forward_mlp(classifier, feats);
    EvalResult out;
    out.top1 = top1_accuracy(probs, labels);
    out.ce = cross_entropy_loss(probs, labels).value;
    return out;
}

}  // namespace

MlpSpec extractor_spec(const RunConfig& config, std::size_t input_dim) {
    return MlpSpec{{input_dim, config.dims.extractor_hidden, config.dims.feature_dim},
                   OutputHead::linear};
}

MlpSpec classifier_spec(const RunConfig& config, std::size_t n_classes) {
    return MlpSpec{{config.dims.feature_dim, config.dims.classifier_hidden, n_classes},
                   OutputHead::softmax};
}

MlpSpec amplifier_spec(const RunConfig& config, std::size_t n_clients) {
    return MlpSpec{{config.dims.feature_dim, config.dims.amplifier_hidden, n_clients},
                   OutputHead::softmax};
}

std::vector<std::uint8_t> encode_uploads(const UploadBatch& batch) {
    std::vector<std::uint8_t> out;
    append_bytes(out, &kUploadMagic, sizeof(kUploadMagic));
    append_bytes(out, &kUploadVersion, sizeof(kUploadVersion));
    const std::uint16_t pad = 0;
    append_bytes(out, &pad, sizeof(pad));
    append_bytes(out, &batch.round, sizeof(batch.round));
    const std::uint32_t count = static_cast<std::uint32_t>(batch.records.size());
    append_bytes(out, &count, sizeof(count));
    for (const UploadRecord& rec : batch.records) {
        const std::uint32_t len =
            static_cast<std::uint32_t>(2 + 2 + 4 + rec.feature.size() * sizeof(double));
        append_bytes(out, &len, sizeof(len));
        append_bytes(out, &rec.client_id, sizeof(rec.client_id));
        append_bytes(out, &rec.label, sizeof(rec.label));
        const std::uint32_t dim = static_cast<std::uint32_t>(rec.feature.size());
        append_bytes(out, &dim, sizeof(dim));
        append_bytes(out, rec.feature.data(), rec.feature.size() * sizeof(double));
    }
    return out;
}

UploadBatch decode_uploads(std::span<const std::uint8_t> bytes) {
    std::size_t off = 0;
    if (read_value<std::uint32_t>(bytes, off) != kUploadMagic) {
        throw ParseError("upload batch: bad magic");
    }
    if (read_value<std::uint16_t>(bytes, off) != kUploadVersion) {
        throw ParseError("upload batch: unsupported version");
    }
    read_value<std::uint16_t>(bytes, off);  // pad
    UploadBatch batch;
    batch.round = read_value<std::uint32_t>(bytes, off);
    const std::uint32_t count = read_value<std::uint32_t>(bytes, off);
    batch.records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = read_value<std::uint32_t>(bytes, off);
        UploadRecord rec;
        rec.client_id = read_value<std::uint16_t>(bytes, off);
        rec.label = read_value<std::uint16_t>(bytes, off);
        const std::uint32_t dim = read_value<std::uint32_t>(bytes, off);
        if (len != 8 + dim * sizeof(double)) {
            throw ParseError("upload batch: record length mismatch");
        }
        rec.feature.resize(dim);
        for (std::uint32_t j = 0; j < dim; ++j) {
            rec.feature[j] = read_value<double>(bytes, off);
        }
        batch.records.push_back(std::move(rec));
    }
    if (off != bytes.size()) {
        throw ParseError("upload batch: trailing bytes");
    }
    return batch;
}

DenseMatrix extract_features(const MlpParams& extractor, const DenseMatrix& x) {
    return forward_mlp(extractor, x);
}

DenseMatrix compute_global_prototypes(std::span<const ClientState> clients,
                                      const FederatedDataset& data, std::size_t n_classes) {
    if (clients.size() != data.clients.size()) {
        throw ProtocolError("compute_global_prototypes: client count mismatch");
    }
    std::vector<LocalPrototypes> locals;
    locals.reserve(clients.size());
    for (std::size_t n = 0; n < clients.size(); ++n) {
        const DenseMatrix feats =
            extract_features(clients[n].extractor, data.clients[n].train_x);
        locals.push_back(
            compute_local_prototypes(feats, data.clients[n].train_y, n_classes));
    }
    return aggregate_prototypes(locals);
}

LocalTrainStats local_training_phase(ClientState& client, const ClientDataset& data,
                                     const GlobalBroadcast& broadcast, const RunConfig& config) {
    LocalLossWeights weights;
    weights.mu = config.mu;
    weights.delta = config.delta;
    weights.nce.tau = config.tau;
    weights.nce.include_positive_in_denominator = config.include_positive_in_denominator;
    if (weights.mu != 0.0 && !broadcast.has_amplifier) {
        throw UsageError("local training needs an amplifier when mu is nonzero");
    }
    if (weights.delta != 0.0 && !broadcast.has_prototypes) {
        throw UsageError("local training needs prototypes when delta is nonzero");
    }

    LocalTrainStats stats;
    std::size_t batches = 0;
    for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
        const std::vector<int> order = shuffled_indices(data.train_x.rows, client.rng);
        double epoch_total = 0.0;
        std::size_t epoch_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, order.size() - start);
            const std::span<const int> chunk(order.data() + start, len);
            const DenseMatrix xb = take_rows(data.train_x, chunk);
            const std::vector<int> yb = gather_labels(data.train_y, chunk);

            ForwardCache cache;
            const DenseMatrix feats = forward_mlp(client.extractor, xb, &cache);
            const LocalLossBreakdown loss = combined_local_loss(
                feats, yb, client.classifier, broadcast.amplifier, broadcast.prototypes, weights);
            if (!std::isfinite(loss.total)) {
                const char* term = "combined";
                if (!std::isfinite(loss.ce)) {
                    term = "cross-entropy";
                } else if (!std::isfinite(loss.kl)) {
                    term = "kl-uniform";
                } else if (!std::isfinite(loss.nce)) {
                    term = "info-nce";
                }
                throw TrainingDivergenceError(
                    "client " + std::to_string(client.client_id) + ": non-finite " + term +
                    " loss in round " + std::to_string(broadcast.round));
            }
            const BackwardResult ext_back =
                backward_mlp(client.extractor, cache, loss.feature_grad);
            client.extractor = sgd_step(client.extractor, ext_back.gradients, config.lr);
            client.classifier = sgd_step(client.classifier, loss.classifier_grad, config.lr);

            stats.ce += loss.ce;
            stats.kl += loss.kl;
            stats.nce += loss.nce;
            epoch_total += loss.total;
            ++batches;
            ++epoch_batches;
        }
        stats.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_batches));
    }
    const double inv = 1.0 / static_cast<double>(batches);
    stats.ce *= inv;
    stats.kl *= inv;
    stats.nce *= inv;
    return stats;
}

UploadBatch build_client_upload(ClientState& client, const ClientDataset& data,
                                const GlobalBroadcast& broadcast, const RunConfig& config) {
    if (!broadcast.has_prototypes) {
        throw UsageError("upload construction needs global prototypes");
    }
    const DenseMatrix feats = extract_features(client.extractor, data.train_x);
    const DenseMatrix mixed = mix_with_prototypes(feats, data.train_y, broadcast.prototypes,
                                                  config.u_f, config.u_r, client.rng);
    const DenseMatrix masked = apply_feature_mask(mixed, config.beta, client.rng);

    UploadBatch batch;
    batch.round = static_cast<std::uint32_t>(broadcast.round);
    batch.records.reserve(masked.rows);
    for (std::size_t i = 0; i < masked.rows; ++i) {
        UploadRecord rec;
        rec.client_id = static_cast<std::uint16_t>(client.client_id);
        rec.label = static_cast<std::uint16_t>(data.train_y[i]);
        rec.feature.assign(masked.row(i), masked.row(i) + masked.cols);
        batch.records.push_back(std::move(rec));
    }
    return batch;
}

void server_training_phase(ServerState& server, std::span<const UploadBatch> batches,
                           std::size_t expected_round, const RunConfig& config,
                           std::size_t n_clients, std::size_t n_classes) {
    std::size_t total = 0;
    for (const UploadBatch& b : batches) {
        if (b.round != expected_round) {
            throw ProtocolError("stale upload batch: round " + std::to_string(b.round) +
                                ", expected " + std::to_string(expected_round));
        }
        total += b.records.size();
    }
    if (total == 0) {
        throw ProtocolError("server received no upload records");
    }

    const std::size_t dim = config.dims.feature_dim;
    DenseMatrix x(total, dim);
    std::vector<int> labels(total);
    std::vector<int> client_ids(total);
    std::size_t row = 0;
    for (const UploadBatch& b : batches) {
        for (const UploadRecord& rec : b.records) {
            if (rec.feature.size() != dim) {
                throw ProtocolError("upload record has wrong feature dim");
            }
            if (rec.client_id >= n_clients || rec.label >= n_classes) {
                throw ProtocolError("upload record has out-of-range client id or label");
            }
            std::memcpy(x.row(row), rec.feature.data(), dim * sizeof(double));
            labels[row] = static_cast<int>(rec.label);
            client_ids[row] = static_cast<int>(rec.client_id);
            ++row;
        }
    }

    if (config.enable_kl) {
        for (std::size_t e = 0; e < config.server_epochs; ++e) {
            train_ce_epoch(server.amplifier, x, client_ids, config.batch_size, config.lr,
                           server.rng);
        }
    }
    if (config.enable_global_classifier) {
        for (std::size_t e = 0; e < config.server_epochs; ++e) {
            train_ce_epoch(server.global_classifier, x, labels, config.batch_size, config.lr,
                           server.rng);
        }
    }
}

void decentralize_phase(std::span<ClientState> clients, const MlpParams& global_classifier,
                        const FederatedDataset& data, const RunConfig& config) {
    for (std::size_t n = 0; n < clients.size(); ++n) {
        ClientState& client = clients[n];
        client.classifier = global_classifier;
        const DenseMatrix feats =
            extract_features(client.extractor, data.clients[n].train_x);
        for (std::size_t e = 0; e < config.finetune_epochs; ++e) {
            train_ce_epoch(client.classifier, feats, data.clients[n].train_y, config.batch_size,
                           config.lr, client.rng);
        }
    }
}

MlpParams average_params(std::span<const MlpParams> params, std::span<const double> weights) {
    if (params.empty() || params.size() != weights.size()) {
        throw ProtocolError("average_params: params/weights size mismatch");
    }
    for (const MlpParams& p : params) {
        if (p.spec != params[0].spec) {
            throw ProtocolError("average_params: mismatched specs");
        }
    }
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    if (!(total > 0.0)) {
        throw DomainError("average_params: weights must sum to a positive value");
    }
    std::vector<double> acc(flatten_params(params[0]).size(), 0.0);
    for (std::size_t n = 0; n < params.size(); ++n) {
        const double w = weights[n] / total;
        const std::vector<double> flat = flatten_params(params[n]);
        for (std::size_t i = 0; i < flat.size(); ++i) {
            acc[i] += w * flat[i];
        }
    }
    MlpParams out = params[0];
    unflatten_params(out, acc);
    return out;
}

RunResult run_federation(const RunConfig& config, std::span<const int> schedule) {
    FederatedDataset data;
    if (config.csv_paths.empty()) {
        data = generate_drifted_dataset(config.drift);
    } else {
        data.clients = load_csv_clients(config.csv_paths, config.csv_test_ratio);
        data.input_dim = data.clients[0].train_x.cols;
        int max_label = 0;
        for (const ClientDataset& c : data.clients) {
            for (int y : c.train_y) {
                max_label = std::max(max_label, y);
            }
        }
        data.n_classes = static_cast<std::size_t>(max_label) + 1;
    }
    const std::size_t n_clients = data.clients.size();
    const std::size_t n_classes = data.n_classes;
    if (n_clients < 2) {
        throw UsageError("federation needs at least 2 clients");
    }

    std::vector<int> order(n_clients);
    std::iota(order.begin(), order.end(), 0);
    if (!schedule.empty()) {
        std::vector<int> sorted(schedule.begin(), schedule.end());
        std::sort(sorted.begin(), sorted.end());
        if (sorted != order) {
            throw UsageError("schedule must be a permutation of the client ids");
        }
        order.assign(schedule.begin(), schedule.end());
    }

    Rng master(config.seed);
    Rng init_rng = master.derive(kInitStream);
    const MlpSpec ext_spec = extractor_spec(config, data.input_dim);
    const MlpSpec cls_spec = classifier_spec(config, n_classes);
    const MlpParams ext0 = init_params(ext_spec, init_rng);
    const MlpParams cls0 = init_params(cls_spec, init_rng);

    ServerState server{MlpParams{}, MlpParams{}, master.derive(kServerStream)};
    const bool fedpall_run = (config.method == Method::fedpall);
    if (fedpall_run) {
        server.amplifier = init_params(amplifier_spec(config, n_clients), init_rng);
        server.global_classifier = init_params(cls_spec, init_rng);
    }

    std::vector<ClientState> clients;
    clients.reserve(n_clients);
    for (std::size_t n = 0; n < n_clients; ++n) {
        clients.push_back(ClientState{static_cast<int>(n), ext0, cls0,
                                      master.derive(kClientStreamBase + n)});
    }

    RunResult result;
    result.config = config;
    const std::string method = method_name(config.method);

    for (std::size_t round = 0; round < config.global_rounds; ++round) {
        GlobalBroadcast bc;
        bc.round = round;
        if (fedpall_run && need_prototypes(config)) {
            bc.prototypes = compute_global_prototypes(clients, data, n_classes);
            bc.has_prototypes = true;
        }
        if (fedpall_run && config.enable_kl) {
            bc.amplifier = server.amplifier;
            bc.has_amplifier = true;
        }

        std::vector<LocalTrainStats> stats(n_clients);
        for (int id : order) {
            const auto n = static_cast<std::size_t>(id);
            stats[n] = local_training_phase(clients[n], data.clients[n], bc, config);
        }

        if (config.method == Method::fedavg) {
            std::vector<MlpParams> exts;
            std::vector<MlpParams> clss;
            std::vector<double> weights;
            for (const ClientState& c : clients) {
                exts.push_back(c.extractor);
                clss.push_back(c.classifier);
                weights.push_back(static_cast<double>(
                    data.clients[static_cast<std::size_t>(c.client_id)].train_x.rows));
            }
            const MlpParams ext_avg = average_params(exts, weights);
            const MlpParams cls_avg = average_params(clss, weights);
            for (ClientState& c : clients) {
                c.extractor = ext_avg;
                c.classifier = cls_avg;
            }
        }

        if (fedpall_run && need_uploads(config)) {
            std::vector<UploadBatch> batches;
            batches.reserve(n_clients);
            for (std::size_t n = 0; n < n_clients; ++n) {
                const std::vector<std::uint8_t> wire =
                    encode_uploads(build_client_upload(clients[n], data.clients[n], bc, config));
                batches.push_back(decode_uploads(wire));
            }
            server_training_phase(server, batches, round, config, n_clients, n_classes);
        }

        for (std::size_t n = 0; n < n_clients; ++n) {
            const EvalResult ev = evaluate_model(clients[n].extractor, clients[n].classifier,
                                                 data.clients[n].test_x, data.clients[n].test_y);
            result.metrics.add(MetricsRow{config.run_id, config.seed, method, round + 1, "train",
                                          static_cast<int>(n), "test", ev.top1, stats[n].ce,
                                          stats[n].kl, stats[n].nce});
        }
    }

    // Decentralization needs a global classifier that was trained at least
    // once, so a zero-round run keeps the random local classifiers and
    // reports chance level.
    if (fedpall_run && config.enable_global_classifier && config.global_rounds > 0) {
        decentralize_phase(clients, server.global_classifier, data, config);
    }

    double top1_sum = 0.0;
    for (std::size_t n = 0; n < n_clients; ++n) {
        const EvalResult test_ev = evaluate_model(clients[n].extractor, clients[n].classifier,
                                                  data.clients[n].test_x, data.clients[n].test_y);
        result.metrics.add(MetricsRow{config.run_id, config.seed, method, config.global_rounds,
                                      "final", static_cast<int>(n), "test", test_ev.top1,
                                      test_ev.ce, 0.0, 0.0});
        result.final_top1.push_back(test_ev.top1);
        top1_sum += test_ev.top1;
    }
    result.mean_final_top1 = top1_sum / static_cast<double>(n_clients);
    result.clients = std::move(clients);
    return result;
}

}  // namespace fedpall
