#pragma once

#include <span>

#include "fedpall/matrix.hpp"
#include "fedpall/mlp.hpp"

namespace fedpall {

// Probabilities below this floor are clamped in loss values and treated as
// flat (zero gradient) in loss gradients.
inline constexpr double kProbFloor = 1e-12;

struct LossOutput {
    double value = 0.0;
    DenseMatrix grad;  // w.r.t. the loss's direct matrix input
};

// Mean over the batch of -log p[i, labels[i]]. grad is w.r.t. the
// probability matrix; composing through a softmax head recovers the usual
// (p - onehot) / batch logit gradient.
LossOutput cross_entropy_loss(const DenseMatrix& probs, std::span<const int> labels);

// Mean over the batch of KL(p_i || uniform) = sum_j p_ij * log(n * p_ij),
// with 0 * log 0 := 0. Zero exactly when every row is uniform; at most
// log(n) (one-hot rows).
LossOutput kl_uniform_loss(const DenseMatrix& probs);

struct InfoNceOptions {
    double tau = 0.1;
    // When false, the denominator ranges over the negatives only (the
    // positive term is excluded), so the value can be negative. When true,
    // the positive is included and the value is nonnegative.
    bool include_positive_in_denominator = false;
};

// Prototype-contrastive loss: per sample, -log of exp(cos(z, proto[y])/tau)
// over the sum of exp(cos(z, proto[k])/tau) across the denominator set,
// averaged over the batch. grad is w.r.t. the feature matrix; prototypes
// are treated as constants.
LossOutput info_nce_loss(const DenseMatrix& features, std::span<const int> labels,
                         const DenseMatrix& prototypes, const InfoNceOptions& options);

struct LocalLossWeights {
    double mu = 0.1;     // uniformity weight; 0 skips the term entirely
    double delta = 0.1;  // contrastive weight; 0 skips the term entirely
    InfoNceOptions nce;
};

struct LocalLossBreakdown {
    double total = 0.0;  // ce + mu * kl + delta * nce
    double ce = 0.0;
    double kl = 0.0;
    double nce = 0.0;
    DenseMatrix feature_grad;  // d total / d features
    MlpParams classifier_grad;
};

// Local objective on a batch of extracted features: cross-entropy through
// the classifier, plus mu times the uniformity loss through the frozen
// amplifier, plus delta times the contrastive loss against the global
// prototypes. Amplifier parameter gradients are discarded. Terms with a
// zero weight are skipped, leaving the remaining arguments unread, so the
// mu = delta = 0 case never touches amplifier or prototypes.
LocalLossBreakdown combined_local_loss(const DenseMatrix& features, std::span<const int> labels,
                                       const MlpParams& classifier, const MlpParams& amplifier,
                                       const DenseMatrix& prototypes,
                                       const LocalLossWeights& weights);

}  // namespace fedpall
