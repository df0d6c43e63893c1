#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedpall/config.hpp"
#include "fedpall/data.hpp"
#include "fedpall/losses.hpp"
#include "fedpall/metrics.hpp"
#include "fedpall/mlp.hpp"
#include "fedpall/rng.hpp"

namespace fedpall {

MlpSpec extractor_spec(const RunConfig& config, std::size_t input_dim);
MlpSpec classifier_spec(const RunConfig& config, std::size_t n_classes);
MlpSpec amplifier_spec(const RunConfig& config, std::size_t n_clients);

// One masked, prototype-mixed feature vector headed for the server.
struct UploadRecord {
    std::uint16_t client_id = 0;
    std::uint16_t label = 0;
    DenseVector feature;

    bool operator==(const UploadRecord&) const = default;
};

// The unit a client ships per round. The round tag lets the server reject
// stale uploads.
struct UploadBatch {
    std::uint32_t round = 0;
    std::vector<UploadRecord> records;

    bool operator==(const UploadBatch&) const = default;
};

// Binary wire form: a fixed header, then length-prefixed little-endian
// records. encode / decode round-trips bit-exactly; decode throws
// ParseError on malformed bytes.
std::vector<std::uint8_t> encode_uploads(const UploadBatch& batch);
UploadBatch decode_uploads(std::span<const std::uint8_t> bytes);

// What the server pushes down at the start of a round. Clients treat every
// field as read-only; in particular the amplifier stays frozen through
// local training.
struct GlobalBroadcast {
    std::size_t round = 0;
    bool has_prototypes = false;
    bool has_amplifier = false;
    DenseMatrix prototypes;  // n_classes x feature_dim
    MlpParams amplifier;
};

struct ClientState {
    int client_id = 0;
    MlpParams extractor;
    MlpParams classifier;
    Rng rng{0};
};

struct ServerState {
    MlpParams amplifier;
    MlpParams global_classifier;
    Rng rng{0};
};

struct LocalTrainStats {
    double ce = 0.0;   // means over the round's batches
    double kl = 0.0;
    double nce = 0.0;
    std::vector<double> epoch_loss;  // mean total loss per local epoch
};

// Feature pass through the extractor.
DenseMatrix extract_features(const MlpParams& extractor, const DenseMatrix& x);

// Round opening: every client averages its train features per class, the
// server count-weights them into global prototypes.
DenseMatrix compute_global_prototypes(std::span<const ClientState> clients,
                                      const FederatedDataset& data, std::size_t n_classes);

// Local SGD on cross-entropy plus the enabled auxiliary terms. Consumes one
// shuffle per epoch from the client stream and nothing else, so a run with
// both weights at zero replays the plain local trainer draw for draw.
LocalTrainStats local_training_phase(ClientState& client, const ClientDataset& data,
                                     const GlobalBroadcast& broadcast, const RunConfig& config);

// End-of-round upload: extract, mix with prototypes, mask, tag with the
// round. Draws from the client stream only.
UploadBatch build_client_upload(ClientState& client, const ClientDataset& data,
                                const GlobalBroadcast& broadcast, const RunConfig& config);

// Server side of the round: validates round tags and record contents
// (ProtocolError on violation), pools records in the given batch order,
// then fits the amplifier on client ids (when enable_kl) and the global
// classifier on labels (when enable_global_classifier).
void server_training_phase(ServerState& server, std::span<const UploadBatch> batches,
                           std::size_t expected_round, const RunConfig& config,
                           std::size_t n_clients, std::size_t n_classes);

// Post-training decentralization: each client adopts the global classifier
// and fine-tunes it on frozen local features.
void decentralize_phase(std::span<ClientState> clients, const MlpParams& global_classifier,
                        const FederatedDataset& data, const RunConfig& config);

// Sample-count-weighted parameter average, used by the fedavg baseline.
// Weights are normalized internally, so raw sample counts are fine.
// ProtocolError on mismatched counts or specs.
MlpParams average_params(std::span<const MlpParams> params, std::span<const double> weights);

struct RunResult {
    RunConfig config;
    MetricsLog metrics;
    std::vector<ClientState> clients;
    std::vector<double> final_top1;  // per client, on its test split
    double mean_final_top1 = 0.0;
};

// Full deterministic run of the configured method. `schedule`, when given,
// is the order clients are visited inside each round; it must be a
// permutation of the client ids and cannot change any output, since client
// streams are independent and every aggregate walks clients in id order.
RunResult run_federation(const RunConfig& config, std::span<const int> schedule = {});

}  // namespace fedpall
