#include "fedpall/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fedpall/errors.hpp"

namespace fedpall {

namespace {

// Keys that only make sense under the full protocol. Baseline methods
// reject them when set explicitly, and serialize_config omits them.
const char* const kFedpallOnlyKeys[] = {
    "server_epochs",
    "finetune_epochs",
    "mu",
    "delta",
    "tau",
    "u_f",
    "u_r",
    "beta",
    "include_positive_in_denominator",
    "enable_kl",
    "enable_infonce",
    "enable_global_classifier",
};

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return "";
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw ConfigError("bad value '" + value + "' for key '" + key + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    if (value.empty() || value[0] == '-' || value[0] == '+') {
        bad_value(key, value);
    }
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) {
            bad_value(key, value);
        }
        return v;
    } catch (const std::logic_error&) {
        bad_value(key, value);
    }
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(parse_u64(key, value));
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size() || !std::isfinite(v)) {
            bad_value(key, value);
        }
        return v;
    } catch (const std::logic_error&) {
        bad_value(key, value);
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") {
        return true;
    }
    if (value == "false" || value == "0") {
        return false;
    }
    bad_value(key, value);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Comma-separated file list; a path containing a comma cannot be expressed.
std::vector<std::string> parse_path_list(const std::string& key, const std::string& value) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= value.size()) {
        const auto comma = value.find(',', start);
        const std::string part =
            value.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (part.empty()) {
            bad_value(key, value);
        }
        out.push_back(part);
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

std::string join_paths(const std::vector<std::string>& paths) {
    std::string out;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        if (i > 0) {
            out += ",";
        }
        out += paths[i];
    }
    return out;
}

void set_key(RunConfig& c, const std::string& key, const std::string& value) {
    if (key == "method") {
        c.method = parse_method(value);
    } else if (key == "seed") {
        c.seed = parse_u64(key, value);
    } else if (key == "run_id") {
        c.run_id = value;
    } else if (key == "out_path") {
        c.out_path = value;
    } else if (key == "csv_paths") {
        c.csv_paths = parse_path_list(key, value);
    } else if (key == "csv_test_ratio") {
        c.csv_test_ratio = parse_double(key, value);
    } else if (key == "global_rounds") {
        c.global_rounds = parse_size(key, value);
    } else if (key == "local_epochs") {
        c.local_epochs = parse_size(key, value);
    } else if (key == "batch_size") {
        c.batch_size = parse_size(key, value);
    } else if (key == "server_epochs") {
        c.server_epochs = parse_size(key, value);
    } else if (key == "finetune_epochs") {
        c.finetune_epochs = parse_size(key, value);
    } else if (key == "lr") {
        c.lr = parse_double(key, value);
    } else if (key == "mu") {
        c.mu = parse_double(key, value);
    } else if (key == "delta") {
        c.delta = parse_double(key, value);
    } else if (key == "tau") {
        c.tau = parse_double(key, value);
    } else if (key == "u_f") {
        c.u_f = parse_double(key, value);
    } else if (key == "u_r") {
        c.u_r = parse_double(key, value);
    } else if (key == "beta") {
        c.beta = parse_double(key, value);
    } else if (key == "include_positive_in_denominator") {
        c.include_positive_in_denominator = parse_bool(key, value);
    } else if (key == "enable_kl") {
        c.enable_kl = parse_bool(key, value);
    } else if (key == "enable_infonce") {
        c.enable_infonce = parse_bool(key, value);
    } else if (key == "enable_global_classifier") {
        c.enable_global_classifier = parse_bool(key, value);
    } else if (key == "model.extractor_hidden") {
        c.dims.extractor_hidden = parse_size(key, value);
    } else if (key == "model.feature_dim") {
        c.dims.feature_dim = parse_size(key, value);
    } else if (key == "model.classifier_hidden") {
        c.dims.classifier_hidden = parse_size(key, value);
    } else if (key == "model.amplifier_hidden") {
        c.dims.amplifier_hidden = parse_size(key, value);
    } else if (key == "drift.n_clients") {
        c.drift.n_clients = parse_size(key, value);
    } else if (key == "drift.n_classes") {
        c.drift.n_classes = parse_size(key, value);
    } else if (key == "drift.input_dim") {
        c.drift.input_dim = parse_size(key, value);
    } else if (key == "drift.samples_per_class") {
        c.drift.samples_per_class = parse_size(key, value);
    } else if (key == "drift.center_stddev") {
        c.drift.center_stddev = parse_double(key, value);
    } else if (key == "drift.noise_stddev") {
        c.drift.noise_stddev = parse_double(key, value);
    } else if (key == "drift.rotation") {
        c.drift.rotation = parse_bool(key, value);
    } else if (key == "drift.scale_min") {
        c.drift.scale_min = parse_double(key, value);
    } else if (key == "drift.scale_max") {
        c.drift.scale_max = parse_double(key, value);
    } else if (key == "drift.shift_stddev") {
        c.drift.shift_stddev = parse_double(key, value);
    } else if (key == "drift.test_ratio") {
        c.drift.test_ratio = parse_double(key, value);
    } else if (key == "drift.seed") {
        c.drift.seed = parse_u64(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

void check(bool ok, const std::string& message) {
    if (!ok) {
        throw ConfigError(message);
    }
}

}  // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::fedpall:
            return "fedpall";
        case Method::fedavg:
            return "fedavg";
        case Method::local:
            return "local";
    }
    throw DomainError("unknown method value");
}

Method parse_method(const std::string& name) {
    if (name == "fedpall") {
        return Method::fedpall;
    }
    if (name == "fedavg") {
        return Method::fedavg;
    }
    if (name == "local") {
        return Method::local;
    }
    throw ConfigError("unknown method '" + name + "' (expected fedpall, fedavg, or local)");
}

ConfigDraft parse_config_text(const std::string& text) {
    ConfigDraft draft;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section != "drift" && section != "model") {
                throw ConfigError("line " + std::to_string(line_no) + ": unknown section '" +
                                  section + "'");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        }
        const std::string full_key = section.empty() ? key : section + "." + key;
        apply_override(draft, full_key, value);
    }
    return draft;
}

ConfigDraft parse_config_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ConfigError("cannot open config file: " + path);
    }
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_config_text(buf.str());
}

void apply_override(ConfigDraft& draft, const std::string& key, const std::string& value) {
    set_key(draft.config, key, value);
    draft.explicit_keys.insert(key);
}

RunConfig finalize_config(const ConfigDraft& draft) {
    RunConfig c = draft.config;

    if (c.method != Method::fedpall) {
        for (const char* key : kFedpallOnlyKeys) {
            check(!draft.is_explicit(key), "key '" + std::string(key) + "' only applies to method " +
                                               method_name(Method::fedpall));
        }
        c.enable_kl = false;
        c.enable_infonce = false;
        c.enable_global_classifier = false;
        c.mu = 0.0;
        c.delta = 0.0;
    } else {
        check(!(draft.is_explicit("enable_kl") && !c.enable_kl && draft.is_explicit("mu") &&
                c.mu != 0.0),
              "enable_kl = false contradicts a nonzero mu");
        check(!(draft.is_explicit("enable_kl") && c.enable_kl && draft.is_explicit("mu") &&
                c.mu == 0.0),
              "enable_kl = true contradicts mu = 0");
        check(!(draft.is_explicit("enable_infonce") && !c.enable_infonce &&
                draft.is_explicit("delta") && c.delta != 0.0),
              "enable_infonce = false contradicts a nonzero delta");
        check(!(draft.is_explicit("enable_infonce") && c.enable_infonce &&
                draft.is_explicit("delta") && c.delta == 0.0),
              "enable_infonce = true contradicts delta = 0");
        if (!c.enable_kl) {
            c.mu = 0.0;
        } else if (c.mu == 0.0) {
            c.enable_kl = false;
        }
        if (!c.enable_infonce) {
            c.delta = 0.0;
        } else if (c.delta == 0.0) {
            c.enable_infonce = false;
        }
    }

    check(std::isfinite(c.lr) && c.lr > 0.0, "lr must be positive");
    check(c.batch_size >= 1, "batch_size must be >= 1");
    check(c.local_epochs >= 1, "local_epochs must be >= 1");
    check(c.server_epochs >= 1, "server_epochs must be >= 1");
    check(c.mu >= 0.0, "mu must be nonnegative");
    check(c.delta >= 0.0, "delta must be nonnegative");
    check(c.tau > 0.0, "tau must be positive");
    check(0.0 <= c.u_f && c.u_f <= c.u_r && c.u_r <= 1.0, "need 0 <= u_f <= u_r <= 1");
    check(0.0 <= c.beta && c.beta <= 1.0, "beta outside [0, 1]");
    check(c.dims.extractor_hidden >= 1 && c.dims.feature_dim >= 1 &&
              c.dims.classifier_hidden >= 1 && c.dims.amplifier_hidden >= 1,
          "model dims must be >= 1");

    if (!c.csv_paths.empty()) {
        for (const std::string& key : draft.explicit_keys) {
            check(key.rfind("drift.", 0) != 0,
                  "csv_paths replaces the synthetic generator; key '" + key + "' conflicts");
        }
        check(c.csv_paths.size() >= 2, "csv_paths needs at least 2 client files");
        check(c.csv_test_ratio >= 0.0 && c.csv_test_ratio < 1.0,
              "csv_test_ratio outside [0, 1)");
    } else {
        check(!draft.is_explicit("csv_test_ratio"),
              "csv_test_ratio only applies together with csv_paths");
    }

    if (!draft.is_explicit("drift.seed")) {
        c.drift.seed = c.seed;
    }
    try {
        validate_drift_spec(c.drift);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }

    if (c.run_id.empty()) {
        c.run_id = method_name(c.method) + "-s" + std::to_string(c.seed);
    }
    return c;
}

std::string serialize_config(const RunConfig& c) {
    std::string out;
    auto emit = [&out](const std::string& key, const std::string& value) {
        out += key;
        out += " = ";
        out += value;
        out += "\n";
    };
    auto emit_bool = [&emit](const std::string& key, bool v) { emit(key, v ? "true" : "false"); };

    const bool full = (c.method == Method::fedpall);
    emit("method", method_name(c.method));
    emit("seed", std::to_string(c.seed));
    emit("run_id", c.run_id);
    emit("out_path", c.out_path);
    if (!c.csv_paths.empty()) {
        emit("csv_paths", join_paths(c.csv_paths));
        emit("csv_test_ratio", format_double(c.csv_test_ratio));
    }
    emit("global_rounds", std::to_string(c.global_rounds));
    emit("local_epochs", std::to_string(c.local_epochs));
    emit("batch_size", std::to_string(c.batch_size));
    emit("lr", format_double(c.lr));
    if (full) {
        emit("server_epochs", std::to_string(c.server_epochs));
        emit("finetune_epochs", std::to_string(c.finetune_epochs));
        emit("mu", format_double(c.mu));
        emit("delta", format_double(c.delta));
        emit("tau", format_double(c.tau));
        emit("u_f", format_double(c.u_f));
        emit("u_r", format_double(c.u_r));
        emit("beta", format_double(c.beta));
        emit_bool("include_positive_in_denominator", c.include_positive_in_denominator);
        emit_bool("enable_kl", c.enable_kl);
        emit_bool("enable_infonce", c.enable_infonce);
        emit_bool("enable_global_classifier", c.enable_global_classifier);
    }
    out += "\n[model]\n";
    emit("extractor_hidden", std::to_string(c.dims.extractor_hidden));
    emit("feature_dim", std::to_string(c.dims.feature_dim));
    emit("classifier_hidden", std::to_string(c.dims.classifier_hidden));
    emit("amplifier_hidden", std::to_string(c.dims.amplifier_hidden));
    if (!c.csv_paths.empty()) {
        // Clients come from files; drift keys would be rejected on re-parse.
        return out;
    }
    out += "\n[drift]\n";
    emit("n_clients", std::to_string(c.drift.n_clients));
    emit("n_classes", std::to_string(c.drift.n_classes));
    emit("input_dim", std::to_string(c.drift.input_dim));
    emit("samples_per_class", std::to_string(c.drift.samples_per_class));
    emit("center_stddev", format_double(c.drift.center_stddev));
    emit("noise_stddev", format_double(c.drift.noise_stddev));
    emit_bool("rotation", c.drift.rotation);
    emit("scale_min", format_double(c.drift.scale_min));
    emit("scale_max", format_double(c.drift.scale_max));
    emit("shift_stddev", format_double(c.drift.shift_stddev));
    emit("test_ratio", format_double(c.drift.test_ratio));
    emit("seed", std::to_string(c.drift.seed));
    return out;
}

}  // namespace fedpall
