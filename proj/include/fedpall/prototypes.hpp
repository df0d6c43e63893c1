#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedpall/matrix.hpp"
#include "fedpall/rng.hpp"

namespace fedpall {

// Per-class mean feature vectors for one client, plus the sample counts
// that weighted them. Classes absent from the batch get a zero row and
// a zero count.
struct LocalPrototypes {
    DenseMatrix prototypes;           // n_classes x feature_dim
    std::vector<std::size_t> counts;  // per-class sample counts

    bool operator==(const LocalPrototypes&) const = default;
};

LocalPrototypes compute_local_prototypes(const DenseMatrix& features, std::span<const int> labels,
                                         std::size_t n_classes);

// Count-weighted average of local prototypes. Equals the prototype of the
// pooled samples. A class with zero total count stays a zero row.
DenseMatrix aggregate_prototypes(std::span<const LocalPrototypes> locals);

// r_i = alpha_i * z_i + (1 - alpha_i) * prototype[y_i], alpha_i ~ U(u_f, u_r),
// one draw per sample.
DenseMatrix mix_with_prototypes(const DenseMatrix& features, std::span<const int> labels,
                                const DenseMatrix& prototypes, double u_f, double u_r, Rng& rng);

// Per-sample Bernoulli mask with keep probability beta. Exactly one uniform
// draw per coordinate regardless of outcome, so the stream position is
// a function of the input shape alone.
DenseMatrix apply_feature_mask(const DenseMatrix& features, double beta, Rng& rng);

}  // namespace fedpall
