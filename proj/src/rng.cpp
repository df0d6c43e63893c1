#include "fedpall/rng.hpp"

#include <cmath>
#include <numbers>

#include "fedpall/errors.hpp"

namespace fedpall {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
    state_ += kGolden;
    return mix64(state_);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    // u1 in (0, 1] keeps the log finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal(double mean, double stddev) {
    return mean + stddev * normal();
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    if (n == 0) {
        throw DomainError("uniform_index: n must be positive");
    }
    return next_u64() % n;
}

void Rng::shuffle(std::vector<int>& values) {
    if (values.size() < 2) {
        return;
    }
    for (std::size_t i = values.size() - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_index(i + 1));
        std::swap(values[i], values[j]);
    }
}

Rng Rng::derive(std::uint64_t stream_id) const {
    return Rng(mix64(seed_ + kGolden * (stream_id + 1)));
}

}  // namespace fedpall
