#pragma once

#include <span>
#include <string>
#include <vector>

#include "fedpall/federation.hpp"

namespace fedpall {

// A mu x delta grid evaluated on a list of seeds. Cells are enumerated in a
// fixed order: mu outermost, then delta, then seed.
struct SweepSpec {
    std::vector<double> mu_values;
    std::vector<double> delta_values;
    std::vector<std::uint64_t> seeds;
};

struct SweepCell {
    double mu = 0.0;
    double delta = 0.0;
    std::uint64_t seed = 0;
    double avg_top1 = 0.0;  // NaN when the run failed
    std::string error;      // empty on success
};

struct SweepResult {
    std::vector<SweepCell> cells;  // exactly |mu| * |delta| * |seeds| entries
};

// Runs the full protocol once per (mu, delta, seed), syncing the enable
// flags to zero weights. A failing cell is recorded with NaN and the error
// message; the sweep continues. Seeds replace both the run seed and, when
// the base config couples them, the drift seed.
SweepResult run_sweep(const RunConfig& base, const SweepSpec& spec);

// CSV with header `mu,delta,seed,avg_top1,error`, one row per cell in
// enumeration order. Commas inside error messages become semicolons.
std::string sweep_csv(const SweepResult& result);

// Per-cell means over seeds in (mu, delta) enumeration order; a cell with
// any failed seed reports NaN.
struct SweepMean {
    double mu = 0.0;
    double delta = 0.0;
    double mean_top1 = 0.0;
};
std::vector<SweepMean> sweep_cell_means(const SweepResult& result, const SweepSpec& spec);

struct SweepPoint {
    std::string name;
    std::vector<std::uint64_t> seeds;
    std::vector<double> per_seed;  // mean final test top1 for each seed
    double mean = 0.0;
};

// Derives one protocol variant from a finalized fedpall config, keeping the
// loss weights consistent with the enable flags. Names: full, ce_only,
// ce_kl, ce_infonce, no_global_classifier, fedavg, local.
RunConfig ablation_variant(const RunConfig& base, const std::string& name);

// Runs every ablation variant on every seed.
std::vector<SweepPoint> run_ablation_sweep(const RunConfig& base,
                                           std::span<const std::uint64_t> seeds);

// One row per (variant, seed) plus a mean row per variant.
std::string ablation_csv(std::span<const SweepPoint> points);

}  // namespace fedpall
