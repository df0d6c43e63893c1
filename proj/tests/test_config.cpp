#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "fedpall/config.hpp"
#include "fedpall/errors.hpp"

using namespace fedpall;

namespace {

// Finalizes a draft built from override pairs, expecting a ConfigError;
// returns the message for assertions on the offending key.
std::string finalize_failure(const std::vector<std::pair<std::string, std::string>>& overrides) {
    ConfigDraft draft;
    try {
        for (const auto& [key, value] : overrides) {
            apply_override(draft, key, value);
        }
        finalize_config(draft);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

RunConfig finalize_overrides(const std::vector<std::pair<std::string, std::string>>& overrides) {
    ConfigDraft draft;
    for (const auto& [key, value] : overrides) {
        apply_override(draft, key, value);
    }
    return finalize_config(draft);
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("empty text finalizes to the documented defaults") {
    const RunConfig c = finalize_config(parse_config_text(""));
    RunConfig want;
    want.run_id = "fedpall-s42";
    want.drift.seed = 42;
    CHECK(c == want);
    CHECK(c.method == Method::fedpall);
    CHECK(c.seed == 42);
    CHECK(c.global_rounds == 30);
    CHECK(c.local_epochs == 5);
    CHECK(c.batch_size == 64);
    CHECK(c.lr == 0.01);
    CHECK(c.mu == 0.1);
    CHECK(c.delta == 0.1);
    CHECK(c.tau == 0.1);
    CHECK(c.enable_kl);
    CHECK(c.enable_infonce);
    CHECK(c.enable_global_classifier);
    CHECK(c.out_path == ".");
    CHECK(c.csv_paths.empty());
}

TEST_CASE("ini text parses sections, comments, and whitespace") {
    const std::string text =
        "# run setup\n"
        "method = fedavg\n"
        "seed=7   # inline comment\n"
        "  lr =  0.5  \n"
        "\r\n"
        "[model]\n"
        "feature_dim = 16\n"
        "[drift]\n"
        "n_clients = 3\n"
        "noise_stddev = 1.25\n";
    const ConfigDraft draft = parse_config_text(text);
    CHECK(draft.is_explicit("method"));
    CHECK(draft.is_explicit("seed"));
    CHECK(draft.is_explicit("lr"));
    CHECK(draft.is_explicit("model.feature_dim"));
    CHECK(draft.is_explicit("drift.n_clients"));
    CHECK_FALSE(draft.is_explicit("batch_size"));
    const RunConfig c = finalize_config(draft);
    CHECK(c.method == Method::fedavg);
    CHECK(c.seed == 7);
    CHECK(c.lr == 0.5);
    CHECK(c.dims.feature_dim == 16);
    CHECK(c.drift.n_clients == 3);
    CHECK(c.drift.noise_stddev == 1.25);
}

TEST_CASE("ini parse errors cite the line") {
    try {
        parse_config_text("seed = 1\n[drift\nn_clients = 3\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(contains(e.what(), "line 2"));
        CHECK(contains(e.what(), "malformed section header"));
    }
    try {
        parse_config_text("[network]\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(contains(e.what(), "line 1"));
        CHECK(contains(e.what(), "unknown section 'network'"));
    }
    try {
        parse_config_text("seed = 1\nlr\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(contains(e.what(), "line 2"));
        CHECK(contains(e.what(), "expected 'key = value'"));
    }
    try {
        parse_config_text("= 5\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(contains(e.what(), "empty key"));
    }
}

TEST_CASE("missing config file") {
    CHECK_THROWS_AS(parse_config_file("/nonexistent/fedpall.ini"), ConfigError);
}

TEST_CASE("overrides reject unknown keys and malformed values") {
    ConfigDraft draft;
    CHECK_THROWS_AS(apply_override(draft, "learning_rate", "0.1"), ConfigError);
    CHECK_THROWS_AS(apply_override(draft, "seed", "-1"), ConfigError);
    CHECK_THROWS_AS(apply_override(draft, "seed", "abc"), ConfigError);
    CHECK_THROWS_AS(apply_override(draft, "global_rounds", "1.5"), ConfigError);
    CHECK_THROWS_AS(apply_override(draft, "lr", "fast"), ConfigError);
    CHECK_THROWS_AS(apply_override(draft, "lr", "inf"), ConfigError);
    CHECK_THROWS_AS(apply_override(draft, "lr", "nan"), ConfigError);
    CHECK_THROWS_AS(apply_override(draft, "enable_kl", "maybe"), ConfigError);
    CHECK_THROWS_AS(apply_override(draft, "method", "sgd"), ConfigError);
    CHECK_THROWS_AS(apply_override(draft, "csv_paths", "a,,b"), ConfigError);

    apply_override(draft, "enable_kl", "0");
    CHECK_FALSE(draft.config.enable_kl);
    apply_override(draft, "enable_kl", "true");
    CHECK(draft.config.enable_kl);
    apply_override(draft, "csv_paths", "a.csv,b.csv");
    CHECK(draft.config.csv_paths == std::vector<std::string>{"a.csv", "b.csv"});
}

TEST_CASE("method names round trip and reject strangers") {
    CHECK(method_name(Method::fedpall) == "fedpall");
    CHECK(method_name(Method::fedavg) == "fedavg");
    CHECK(method_name(Method::local) == "local");
    CHECK(parse_method("fedpall") == Method::fedpall);
    CHECK(parse_method("fedavg") == Method::fedavg);
    CHECK(parse_method("local") == Method::local);
    CHECK_THROWS_AS(parse_method("FedPall"), ConfigError);
}

TEST_CASE("baselines reject explicitly set protocol keys") {
    const char* const keys[] = {
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
    const char* const values[] = {"2", "2", "0.5", "0.5", "0.5", "0.5",
                                  "1",  "0.5", "true", "true", "true", "true"};
    for (const std::string method : {"fedavg", "local"}) {
        for (std::size_t i = 0; i < std::size(keys); ++i) {
            const std::string msg = finalize_failure({{"method", method}, {keys[i], values[i]}});
            CHECK(contains(msg, std::string("'") + keys[i] + "'"));
            CHECK(contains(msg, "only applies to method fedpall"));
        }
    }
}

TEST_CASE("baselines run with all protocol pieces disabled") {
    const RunConfig c = finalize_overrides({{"method", "fedavg"}});
    CHECK_FALSE(c.enable_kl);
    CHECK_FALSE(c.enable_infonce);
    CHECK_FALSE(c.enable_global_classifier);
    CHECK(c.mu == 0.0);
    CHECK(c.delta == 0.0);
    CHECK(c.run_id == "fedavg-s42");
}

TEST_CASE("loss weights and enable flags imply each other") {
    SUBCASE("mu = 0 disables the uniformity term") {
        const RunConfig c = finalize_overrides({{"mu", "0"}});
        CHECK_FALSE(c.enable_kl);
        CHECK(c.mu == 0.0);
        CHECK(c.enable_infonce);
    }
    SUBCASE("enable_kl = false zeroes mu") {
        const RunConfig c = finalize_overrides({{"enable_kl", "false"}});
        CHECK(c.mu == 0.0);
        CHECK_FALSE(c.enable_kl);
    }
    SUBCASE("delta = 0 disables the contrastive term") {
        const RunConfig c = finalize_overrides({{"delta", "0"}});
        CHECK_FALSE(c.enable_infonce);
        CHECK(c.enable_kl);
    }
    SUBCASE("enable_infonce = false zeroes delta") {
        const RunConfig c = finalize_overrides({{"enable_infonce", "false"}});
        CHECK(c.delta == 0.0);
    }
    SUBCASE("contradictions are errors in both directions") {
        CHECK(contains(finalize_failure({{"enable_kl", "false"}, {"mu", "0.3"}}),
                       "contradicts a nonzero mu"));
        CHECK(contains(finalize_failure({{"enable_kl", "true"}, {"mu", "0"}}),
                       "contradicts mu = 0"));
        CHECK(contains(finalize_failure({{"enable_infonce", "false"}, {"delta", "0.3"}}),
                       "contradicts a nonzero delta"));
        CHECK(contains(finalize_failure({{"enable_infonce", "true"}, {"delta", "0"}}),
                       "contradicts delta = 0"));
    }
}

TEST_CASE("finalize range checks") {
    CHECK(contains(finalize_failure({{"lr", "0"}}), "lr must be positive"));
    CHECK(contains(finalize_failure({{"batch_size", "0"}}), "batch_size"));
    CHECK(contains(finalize_failure({{"local_epochs", "0"}}), "local_epochs"));
    CHECK(contains(finalize_failure({{"server_epochs", "0"}}), "server_epochs"));
    CHECK(contains(finalize_failure({{"mu", "-0.1"}}), "mu must be nonnegative"));
    CHECK(contains(finalize_failure({{"delta", "-1"}}), "delta must be nonnegative"));
    CHECK(contains(finalize_failure({{"tau", "0"}}), "tau must be positive"));
    CHECK(contains(finalize_failure({{"u_f", "0.8"}, {"u_r", "0.5"}}), "u_f"));
    CHECK(contains(finalize_failure({{"u_r", "1.5"}}), "u_f"));
    CHECK(contains(finalize_failure({{"beta", "1.1"}}), "beta"));
    CHECK(contains(finalize_failure({{"beta", "-0.1"}}), "beta"));
    CHECK(contains(finalize_failure({{"model.feature_dim", "0"}}), "model dims"));
    // Drift validation surfaces as a config error too.
    CHECK(contains(finalize_failure({{"drift.scale_min", "0"}}), "scale_min"));
    CHECK(contains(finalize_failure({{"drift.n_clients", "1"}}), "two clients"));
}

TEST_CASE("csv_paths and the synthetic generator are mutually exclusive") {
    CHECK(contains(finalize_failure({{"csv_paths", "a.csv"}}), "at least 2 client files"));
    CHECK(contains(
        finalize_failure({{"csv_paths", "a.csv,b.csv"}, {"drift.n_clients", "2"}}),
        "key 'drift.n_clients' conflicts"));
    CHECK(contains(finalize_failure({{"csv_test_ratio", "0.3"}}),
                   "only applies together with csv_paths"));
    CHECK(contains(
        finalize_failure({{"csv_paths", "a.csv,b.csv"}, {"csv_test_ratio", "1.0"}}),
        "csv_test_ratio"));
    const RunConfig c = finalize_overrides(
        {{"csv_paths", "a.csv,b.csv"}, {"csv_test_ratio", "0.25"}});
    CHECK(c.csv_paths.size() == 2);
    CHECK(c.csv_test_ratio == 0.25);
}

TEST_CASE("drift seed follows the run seed unless pinned") {
    const RunConfig follows = finalize_overrides({{"seed", "7"}});
    CHECK(follows.drift.seed == 7);
    const RunConfig pinned = finalize_overrides({{"seed", "7"}, {"drift.seed", "99"}});
    CHECK(pinned.drift.seed == 99);
}

TEST_CASE("run_id defaults to method and seed") {
    CHECK(finalize_overrides({{"seed", "3"}}).run_id == "fedpall-s3");
    CHECK(finalize_overrides({{"method", "local"}, {"seed", "8"}}).run_id == "local-s8");
    CHECK(finalize_overrides({{"run_id", "exp42"}}).run_id == "exp42");
}

TEST_CASE("serialize, parse, finalize round-trips") {
    SUBCASE("full protocol with custom model and drift") {
        const RunConfig c = finalize_overrides({{"seed", "11"},
                                                {"global_rounds", "12"},
                                                {"mu", "0.7"},
                                                {"tau", "0.25"},
                                                {"include_positive_in_denominator", "true"},
                                                {"model.extractor_hidden", "48"},
                                                {"drift.n_clients", "6"},
                                                {"drift.rotation", "false"},
                                                {"drift.seed", "5"},
                                                {"out_path", "/tmp/runs"}});
        const RunConfig back = finalize_config(parse_config_text(serialize_config(c)));
        CHECK(back == c);
    }
    SUBCASE("baseline omits protocol keys") {
        const RunConfig c = finalize_overrides({{"method", "fedavg"}, {"seed", "2"}});
        const std::string text = serialize_config(c);
        CHECK_FALSE(contains(text, "mu"));
        CHECK_FALSE(contains(text, "enable_kl"));
        CHECK_FALSE(contains(text, "beta"));
        const RunConfig back = finalize_config(parse_config_text(text));
        CHECK(back == c);
    }
    SUBCASE("harmonized zero weight stays consistent") {
        const RunConfig c = finalize_overrides({{"mu", "0"}});
        const RunConfig back = finalize_config(parse_config_text(serialize_config(c)));
        CHECK(back == c);
    }
    SUBCASE("csv-sourced config omits drift keys") {
        const RunConfig c = finalize_overrides(
            {{"csv_paths", "x.csv,y.csv"}, {"csv_test_ratio", "0.1"}, {"seed", "4"}});
        const std::string text = serialize_config(c);
        CHECK_FALSE(contains(text, "[drift]"));
        const RunConfig back = finalize_config(parse_config_text(text));
        CHECK(back == c);
    }
}
