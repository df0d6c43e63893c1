#include "fedpall/sweep.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "fedpall/errors.hpp"

namespace fedpall {

namespace {

const char* const kAblationNames[] = {"full",  "ce_only", "ce_kl", "ce_infonce",
                                      "no_global_classifier", "fedavg", "local"};

// Base and per-seed variant share the data exactly when the base config
// couples drift.seed to the run seed.
RunConfig with_seed(RunConfig config, std::uint64_t seed) {
    const bool coupled = (config.drift.seed == config.seed);
    config.seed = seed;
    if (coupled) {
        config.drift.seed = seed;
    }
    return config;
}

SweepPoint run_point(const RunConfig& base, const std::string& name,
                     std::span<const std::uint64_t> seeds) {
    SweepPoint point;
    point.name = name;
    double total = 0.0;
    for (std::uint64_t seed : seeds) {
        RunConfig config = with_seed(base, seed);
        config.run_id = name + "-s" + std::to_string(seed);
        const RunResult result = run_federation(config);
        point.seeds.push_back(seed);
        point.per_seed.push_back(result.mean_final_top1);
        total += result.mean_final_top1;
    }
    point.mean = seeds.empty() ? 0.0 : total / static_cast<double>(seeds.size());
    return point;
}

std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

SweepResult run_sweep(const RunConfig& base, const SweepSpec& spec) {
    if (base.method != Method::fedpall) {
        throw UsageError("run_sweep: base config must use the full protocol");
    }
    if (spec.mu_values.empty() || spec.delta_values.empty() || spec.seeds.empty()) {
        throw UsageError("run_sweep: mu values, delta values, and seeds must be nonempty");
    }
    for (double v : spec.mu_values) {
        if (!(v >= 0.0)) {
            throw UsageError("run_sweep: mu values must be nonnegative");
        }
    }
    for (double v : spec.delta_values) {
        if (!(v >= 0.0)) {
            throw UsageError("run_sweep: delta values must be nonnegative");
        }
    }

    SweepResult result;
    result.cells.reserve(spec.mu_values.size() * spec.delta_values.size() * spec.seeds.size());
    for (double mu : spec.mu_values) {
        for (double delta : spec.delta_values) {
            for (std::uint64_t seed : spec.seeds) {
                SweepCell cell;
                cell.mu = mu;
                cell.delta = delta;
                cell.seed = seed;
                RunConfig config = with_seed(base, seed);
                config.mu = mu;
                config.enable_kl = (mu != 0.0);
                config.delta = delta;
                config.enable_infonce = (delta != 0.0);
                config.run_id = "sweep-mu" + format_value(mu) + "-delta" + format_value(delta) +
                                "-s" + std::to_string(seed);
                try {
                    cell.avg_top1 = run_federation(config).mean_final_top1;
                } catch (const std::exception& e) {
                    cell.avg_top1 = std::numeric_limits<double>::quiet_NaN();
                    cell.error = e.what();
                }
                result.cells.push_back(std::move(cell));
            }
        }
    }
    return result;
}

std::string sweep_csv(const SweepResult& result) {
    std::string out = "mu,delta,seed,avg_top1,error\n";
    char buf[128];
    for (const SweepCell& cell : result.cells) {
        std::snprintf(buf, sizeof(buf), "%g,%g,%llu,%.6f,", cell.mu, cell.delta,
                      static_cast<unsigned long long>(cell.seed), cell.avg_top1);
        out += buf;
        std::string error = cell.error;
        for (char& ch : error) {
            if (ch == ',' || ch == '\n') {
                ch = ';';
            }
        }
        out += error;
        out += "\n";
    }
    return out;
}

std::vector<SweepMean> sweep_cell_means(const SweepResult& result, const SweepSpec& spec) {
    const std::size_t n_seeds = spec.seeds.size();
    if (result.cells.size() != spec.mu_values.size() * spec.delta_values.size() * n_seeds) {
        throw DimensionError("sweep_cell_means: result does not match the spec's grid");
    }
    std::vector<SweepMean> means;
    std::size_t i = 0;
    for (double mu : spec.mu_values) {
        for (double delta : spec.delta_values) {
            double total = 0.0;
            for (std::size_t s = 0; s < n_seeds; ++s) {
                total += result.cells[i++].avg_top1;
            }
            means.push_back(SweepMean{mu, delta, total / static_cast<double>(n_seeds)});
        }
    }
    return means;
}

RunConfig ablation_variant(const RunConfig& base, const std::string& name) {
    if (base.method != Method::fedpall) {
        throw UsageError("ablation_variant: base config must use the full protocol");
    }
    RunConfig c = base;
    if (name == "full") {
        return c;
    }
    if (name == "ce_only") {
        c.enable_kl = false;
        c.enable_infonce = false;
        c.mu = 0.0;
        c.delta = 0.0;
        return c;
    }
    if (name == "ce_kl") {
        c.enable_infonce = false;
        c.delta = 0.0;
        return c;
    }
    if (name == "ce_infonce") {
        c.enable_kl = false;
        c.mu = 0.0;
        return c;
    }
    if (name == "no_global_classifier") {
        c.enable_global_classifier = false;
        return c;
    }
    if (name == "fedavg" || name == "local") {
        c.method = (name == "fedavg") ? Method::fedavg : Method::local;
        c.enable_kl = false;
        c.enable_infonce = false;
        c.enable_global_classifier = false;
        c.mu = 0.0;
        c.delta = 0.0;
        return c;
    }
    throw UsageError("unknown ablation variant '" + name + "'");
}

std::vector<SweepPoint> run_ablation_sweep(const RunConfig& base,
                                           std::span<const std::uint64_t> seeds) {
    std::vector<SweepPoint> points;
    for (const char* name : kAblationNames) {
        points.push_back(run_point(ablation_variant(base, name), name, seeds));
    }
    return points;
}

std::string ablation_csv(std::span<const SweepPoint> points) {
    std::string out = "variant,seed,mean_final_top1\n";
    char buf[128];
    for (const SweepPoint& p : points) {
        for (std::size_t i = 0; i < p.seeds.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%s,%llu,%.6f\n", p.name.c_str(),
                          static_cast<unsigned long long>(p.seeds[i]), p.per_seed[i]);
            out += buf;
        }
        std::snprintf(buf, sizeof(buf), "%s,mean,%.6f\n", p.name.c_str(), p.mean);
        out += buf;
    }
    return out;
}

}  // namespace fedpall
