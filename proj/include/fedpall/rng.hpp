#pragma once

#include <cstdint>
#include <vector>

namespace fedpall {

/// Deterministic pseudo-random generator built on the splitmix64 sequence.
///
/// The standard <random> distributions are implementation-defined, so every
/// transform (uniform, normal, shuffle) is implemented here by hand: identical
/// seed plus identical call sequence yields an identical stream on every
/// platform and compiler.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform();

    /// Uniform in [lo, hi). Degenerate lo == hi returns lo exactly.
    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller. Two uniforms are consumed per draw and
    /// the spare value is discarded so the stream position never depends on
    /// call history.
    double normal();
    double normal(double mean, double stddev);

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);

    /// In-place Fisher-Yates shuffle.
    void shuffle(std::vector<int>& values);

    /// Independent stream keyed by (this seed, stream_id). Used to hand each
    /// client its own stream so processing order cannot change any result.
    Rng derive(std::uint64_t stream_id) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

}  // namespace fedpall
