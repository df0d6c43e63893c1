#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fedpall/data.hpp"

namespace fedpall {

enum class Method : std::uint8_t { fedpall = 0, fedavg = 1, local = 2 };

std::string method_name(Method m);
Method parse_method(const std::string& name);

struct ModelDims {
    std::size_t extractor_hidden = 64;
    std::size_t feature_dim = 32;
    std::size_t classifier_hidden = 32;
    std::size_t amplifier_hidden = 32;

    bool operator==(const ModelDims&) const = default;
};

struct RunConfig {
    Method method = Method::fedpall;
    std::uint64_t seed = 42;
    std::size_t global_rounds = 30;
    std::size_t local_epochs = 5;
    std::size_t batch_size = 64;
    std::size_t server_epochs = 1;
    std::size_t finetune_epochs = 5;
    double lr = 0.01;
    double mu = 0.1;    // uniformity loss weight
    double delta = 0.1; // contrastive loss weight
    double tau = 0.1;
    double u_f = 0.5;
    double u_r = 1.0;
    double beta = 0.8;
    bool include_positive_in_denominator = false;
    bool enable_kl = true;
    bool enable_infonce = true;
    bool enable_global_classifier = true;
    ModelDims dims;
    DriftSpec drift;
    // When nonempty, clients come from these CSV files instead of the
    // synthetic generator and explicit drift.* keys are rejected.
    std::vector<std::string> csv_paths;
    double csv_test_ratio = 0.2;
    std::string run_id;  // filled by finalize_config when empty
    std::string out_path = ".";

    bool operator==(const RunConfig&) const = default;
};

// A config under construction. finalize_config applies the cross-key rules,
// which need to know whether a value was set explicitly or is a default.
struct ConfigDraft {
    RunConfig config;
    std::set<std::string> explicit_keys;

    bool is_explicit(const std::string& key) const { return explicit_keys.count(key) != 0; }
};

// INI-like text: `key = value` lines, `#` comments, [drift] and [model]
// sections whose keys are addressed as drift.* / model.* elsewhere.
ConfigDraft parse_config_text(const std::string& text);
ConfigDraft parse_config_file(const std::string& path);

// Sets one key from its text form and records it as explicit. Section keys
// use the dotted form ("drift.n_clients"). Unknown key or a malformed value
// throws ConfigError.
void apply_override(ConfigDraft& draft, const std::string& key, const std::string& value);

// Harmonizes and validates a draft:
//   * baseline methods reject explicitly set fedpall-only keys,
//   * mu = 0 and enable_kl = false imply each other (likewise delta and
//     enable_infonce); explicitly contradicting pairs are errors,
//   * csv_paths and explicitly set drift.* keys are mutually exclusive,
//   * drift.seed defaults to the run seed unless set explicitly,
//   * run_id defaults to "<method>-s<seed>".
// Throws ConfigError on any violation.
RunConfig finalize_config(const ConfigDraft& draft);

// Emits the INI form. Keys that finalize_config would reject for the
// config's method are omitted, so serialize / parse / finalize round-trips.
std::string serialize_config(const RunConfig& config);

}  // namespace fedpall
