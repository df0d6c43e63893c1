#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedpall/matrix.hpp"
#include "fedpall/rng.hpp"

namespace fedpall {

// Synthetic feature-drift benchmark. All clients share one set of class
// centers; each client then sees those samples through its own fixed affine
// map (rotation, per-axis scaling, shift), so the label concept is shared
// while the feature space drifts per client. Class priors are uniform.
// Defaults are calibrated so that on the stock benchmark a single shared
// model degrades visibly under drift while per-client training stays
// learnable: class centers sit close together relative to the noise, and
// the per-client maps are strong enough to make clusters from different
// clients collide in input space.
struct DriftSpec {
    std::size_t n_clients = 4;
    std::size_t n_classes = 5;
    std::size_t input_dim = 20;
    std::size_t samples_per_class = 250;  // per client, before the split
    double center_stddev = 1.0;
    double noise_stddev = 2.0;
    bool rotation = true;
    double scale_min = 0.5;
    double scale_max = 2.0;
    double shift_stddev = 1.0;
    double test_ratio = 0.2;
    std::uint64_t seed = 42;

    bool operator==(const DriftSpec&) const = default;
};

// Same centers and noise process, identity client maps: every client draws
// from the same distribution.
DriftSpec drift_free(DriftSpec spec);

struct ClientDataset {
    DenseMatrix train_x;
    std::vector<int> train_y;
    DenseMatrix test_x;
    std::vector<int> test_y;
};

struct FederatedDataset {
    std::vector<ClientDataset> clients;
    std::size_t n_classes = 0;
    std::size_t input_dim = 0;
};

// Throws DomainError on out-of-range fields.
void validate_drift_spec(const DriftSpec& spec);

// Uniformly random rotation matrix: QR of a Gaussian draw with the diagonal
// sign pinned positive, so Q^T Q = I to tight tolerance.
DenseMatrix random_rotation(std::size_t dim, Rng& rng);

// Deterministic in spec alone. Rows are grouped by class; training order is
// the caller's concern. The per-class split reserves
// floor(samples_per_class * test_ratio + 0.5) samples for test, keeping at
// least one training sample.
FederatedDataset generate_drifted_dataset(const DriftSpec& spec);

// CSV form of one client's samples: header `label,f1,...,fd`, one row per
// sample, train rows before test rows. Feature values use 17 significant
// digits, so a write / load round trip is bit-exact.
std::string client_csv(const ClientDataset& client);
void write_client_csv(const ClientDataset& client, const std::string& path);

// Loads one CSV file per client and splits each class at test_ratio with
// the same rule the generator uses (first rows per class go to train).
// Labels must be nonnegative integers covering 0..K-1 in every file.
// Malformed input throws ParseError naming the file and line.
std::vector<ClientDataset> load_csv_clients(std::span<const std::string> paths,
                                            double test_ratio);

}  // namespace fedpall
