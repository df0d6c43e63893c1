#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "fedpall/config.hpp"
#include "fedpall/data.hpp"
#include "fedpall/errors.hpp"
#include "fedpall/federation.hpp"
#include "fedpall/sweep.hpp"

namespace {

// Every config key, exposed as a kebab-case flag. Values stay text and are
// routed through apply_override so file/flag precedence and the finalize
// rules work the same both ways.
const std::pair<const char*, const char*> kConfigFlags[] = {
    {"--method", "method"},
    {"--seed", "seed"},
    {"--run-id", "run_id"},
    {"--out-path", "out_path"},
    {"--csv-paths", "csv_paths"},
    {"--csv-test-ratio", "csv_test_ratio"},
    {"--global-rounds", "global_rounds"},
    {"--local-epochs", "local_epochs"},
    {"--batch-size", "batch_size"},
    {"--server-epochs", "server_epochs"},
    {"--finetune-epochs", "finetune_epochs"},
    {"--lr", "lr"},
    {"--mu", "mu"},
    {"--delta", "delta"},
    {"--tau", "tau"},
    {"--u-f", "u_f"},
    {"--u-r", "u_r"},
    {"--beta", "beta"},
    {"--include-positive-in-denominator", "include_positive_in_denominator"},
    {"--enable-kl", "enable_kl"},
    {"--enable-infonce", "enable_infonce"},
    {"--enable-global-classifier", "enable_global_classifier"},
    {"--model-extractor-hidden", "model.extractor_hidden"},
    {"--model-feature-dim", "model.feature_dim"},
    {"--model-classifier-hidden", "model.classifier_hidden"},
    {"--model-amplifier-hidden", "model.amplifier_hidden"},
    {"--drift-n-clients", "drift.n_clients"},
    {"--drift-n-classes", "drift.n_classes"},
    {"--drift-input-dim", "drift.input_dim"},
    {"--drift-samples-per-class", "drift.samples_per_class"},
    {"--drift-center-stddev", "drift.center_stddev"},
    {"--drift-noise-stddev", "drift.noise_stddev"},
    {"--drift-rotation", "drift.rotation"},
    {"--drift-scale-min", "drift.scale_min"},
    {"--drift-scale-max", "drift.scale_max"},
    {"--drift-shift-stddev", "drift.shift_stddev"},
    {"--drift-test-ratio", "drift.test_ratio"},
    {"--drift-seed", "drift.seed"},
};

constexpr std::size_t kNumConfigFlags = std::size(kConfigFlags);

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    std::string flag_values[kNumConfigFlags];
    CLI::Option* flag_opts[kNumConfigFlags] = {};
};

void add_common(CLI::App* cmd, CommonOpts* opts) {
    cmd->add_option("-c,--config", opts->config_path, "Config file (INI-like key = value)");
    cmd->add_option("--set", opts->overrides, "Override one config key, as key=value")
        ->type_name("KEY=VALUE");
    for (std::size_t i = 0; i < kNumConfigFlags; ++i) {
        opts->flag_opts[i] = cmd->add_option(kConfigFlags[i].first, opts->flag_values[i],
                                             std::string("Sets ") + kConfigFlags[i].second);
    }
}

fedpall::ConfigDraft build_draft(const CommonOpts& opts) {
    fedpall::ConfigDraft draft;
    if (!opts.config_path.empty()) {
        draft = fedpall::parse_config_file(opts.config_path);
    }
    for (const std::string& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw fedpall::ConfigError("--set expects key=value, got '" + kv + "'");
        }
        fedpall::apply_override(draft, kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (std::size_t i = 0; i < kNumConfigFlags; ++i) {
        if (opts.flag_opts[i] != nullptr && opts.flag_opts[i]->count() > 0) {
            fedpall::apply_override(draft, kConfigFlags[i].second, opts.flag_values[i]);
        }
    }
    // Environment fallback for the output location; an explicit value wins.
    if (!draft.is_explicit("out_path")) {
        if (const char* env = std::getenv("FEDPALL_OUT_DIR"); env != nullptr && *env != '\0') {
            fedpall::apply_override(draft, "out_path", env);
        }
    }
    return draft;
}

std::filesystem::path ensure_out_dir(const fedpall::RunConfig& config) {
    std::filesystem::path dir(config.out_path);
    if (!dir.empty()) {
        std::filesystem::create_directories(dir);
    }
    return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw fedpall::UsageError("cannot open for writing: " + path.string());
    }
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

int cmd_run(const CommonOpts& opts) {
    const fedpall::RunConfig config = fedpall::finalize_config(build_draft(opts));
    const fedpall::RunResult result = fedpall::run_federation(config);
    const std::filesystem::path dir = ensure_out_dir(config);
    const std::filesystem::path metrics_path = dir / (config.run_id + "_metrics.csv");
    result.metrics.write_csv(metrics_path.string());
    write_text(dir / (config.run_id + "_config.ini"), fedpall::serialize_config(config));

    std::printf("run %s (%s, seed %llu): %zu rounds\n", config.run_id.c_str(),
                fedpall::method_name(config.method).c_str(),
                static_cast<unsigned long long>(config.seed), config.global_rounds);
    for (std::size_t n = 0; n < result.final_top1.size(); ++n) {
        std::printf("  client %zu final test top1: %.4f\n", n, result.final_top1[n]);
    }
    std::printf("  mean final test top1: %.4f\n", result.mean_final_top1);
    std::printf("  metrics: %s\n", metrics_path.string().c_str());
    return 0;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string tok = text.substr(start, comma == std::string::npos ? std::string::npos
                                                                              : comma - start);
        if (tok.empty()) {
            throw fedpall::ConfigError("empty entry in seed list '" + text + "'");
        }
        try {
            std::size_t pos = 0;
            seeds.push_back(std::stoull(tok, &pos));
            if (pos != tok.size()) {
                throw std::invalid_argument(tok);
            }
        } catch (const std::logic_error&) {
            throw fedpall::ConfigError("bad seed '" + tok + "'");
        }
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return seeds;
}

std::vector<double> parse_value_list(const std::string& text) {
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string tok = text.substr(start, comma == std::string::npos ? std::string::npos
                                                                              : comma - start);
        if (tok.empty()) {
            throw fedpall::ConfigError("empty entry in value list '" + text + "'");
        }
        try {
            std::size_t pos = 0;
            values.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) {
                throw std::invalid_argument(tok);
            }
        } catch (const std::logic_error&) {
            throw fedpall::ConfigError("bad value '" + tok + "'");
        }
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return values;
}

int cmd_sweep(const CommonOpts& opts, const std::string& mu_text, const std::string& delta_text,
              const std::string& seeds_text) {
    const fedpall::RunConfig base = fedpall::finalize_config(build_draft(opts));
    fedpall::SweepSpec spec;
    spec.mu_values = parse_value_list(mu_text);
    spec.delta_values = parse_value_list(delta_text);
    spec.seeds = parse_seed_list(seeds_text);

    const fedpall::SweepResult result = fedpall::run_sweep(base, spec);
    const std::filesystem::path dir = ensure_out_dir(base);
    const std::filesystem::path csv_path = dir / "sweep.csv";
    write_text(csv_path, fedpall::sweep_csv(result));

    for (const fedpall::SweepMean& m : fedpall::sweep_cell_means(result, spec)) {
        std::printf("mu=%-6g delta=%-6g mean avg_top1 %.4f\n", m.mu, m.delta, m.mean_top1);
    }
    std::printf("sweep csv: %s\n", csv_path.string().c_str());
    return 0;
}

int cmd_gen_data(const CommonOpts& opts) {
    const fedpall::RunConfig config = fedpall::finalize_config(build_draft(opts));
    const fedpall::FederatedDataset data = fedpall::generate_drifted_dataset(config.drift);
    const std::filesystem::path dir = ensure_out_dir(config);
    for (std::size_t n = 0; n < data.clients.size(); ++n) {
        const fedpall::ClientDataset& c = data.clients[n];
        const std::filesystem::path path = dir / ("client" + std::to_string(n) + ".csv");
        fedpall::write_client_csv(c, path.string());
        std::printf("client %zu: %zu train / %zu test samples -> %s\n", n, c.train_x.rows,
                    c.test_x.rows, path.string().c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic federated learning simulator with prototype-based "
                 "adversarial and collaborative training"};
    app.require_subcommand(1);

    CommonOpts run_opts;
    CLI::App* run = app.add_subcommand("run", "Run one federated training job");
    add_common(run, &run_opts);

    CommonOpts sweep_opts;
    std::string mu_text = "0.1,0.2,0.5,1.0";
    std::string delta_text = "0.1,0.2,0.5,1.0";
    std::string seeds_text = "1,2,3";
    CLI::App* sweep = app.add_subcommand("sweep", "Run a mu x delta sensitivity grid");
    add_common(sweep, &sweep_opts);
    sweep->add_option("--mu-values", mu_text, "Comma-separated mu grid")
        ->default_str("0.1,0.2,0.5,1.0");
    sweep->add_option("--delta-values", delta_text, "Comma-separated delta grid")
        ->default_str("0.1,0.2,0.5,1.0");
    sweep->add_option("--seeds", seeds_text, "Comma-separated seeds")->default_str("1,2,3");

    CommonOpts gen_opts;
    CLI::App* gen = app.add_subcommand("gen-data", "Write the synthetic dataset as CSV, one file per client");
    add_common(gen, &gen_opts);

    try {
        app.parse(argc, argv);
        if (run->parsed()) {
            return cmd_run(run_opts);
        }
        if (sweep->parsed()) {
            return cmd_sweep(sweep_opts, mu_text, delta_text, seeds_text);
        }
        return cmd_gen_data(gen_opts);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const fedpall::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
