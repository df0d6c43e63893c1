#include "fedpall/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fedpall/errors.hpp"

namespace fedpall {

namespace {

void check_prob_batch(const DenseMatrix& probs, std::span<const int> labels) {
    if (probs.rows == 0 || probs.cols == 0) {
        throw DomainError("loss input is empty");
    }
    if (labels.size() != probs.rows) {
        throw DimensionError("labels length does not match batch size");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols) {
            throw DomainError("label " + std::to_string(y) + " outside [0, " +
                              std::to_string(probs.cols) + ")");
        }
    }
}

}  // namespace

LossOutput cross_entropy_loss(const DenseMatrix& probs, std::span<const int> labels) {
    check_prob_batch(probs, labels);
    const double batch = static_cast<double>(probs.rows);
    LossOutput out;
    out.grad = DenseMatrix(probs.rows, probs.cols, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        const double p = probs(i, y);
        total -= std::log(std::max(p, kProbFloor));
        if (p >= kProbFloor) {
            out.grad(i, y) = -1.0 / (batch * p);
        }
    }
    out.value = total / batch;
    return out;
}

LossOutput kl_uniform_loss(const DenseMatrix& probs) {
    if (probs.rows == 0) {
        throw DomainError("loss input is empty");
    }
    if (probs.cols < 2) {
        // Pushing features toward uniform over one client is a no-op.
        throw DomainError("kl_uniform_loss: need at least two clients");
    }
    const double batch = static_cast<double>(probs.rows);
    const double n = static_cast<double>(probs.cols);
    LossOutput out;
    out.grad = DenseMatrix(probs.rows, probs.cols, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        for (std::size_t j = 0; j < probs.cols; ++j) {
            const double p = probs(i, j);
            if (p > 0.0) {
                total += p * std::log(n * p);
            }
            if (p >= kProbFloor) {
                out.grad(i, j) = (std::log(n * p) + 1.0) / batch;
            }
        }
    }
    out.value = total / batch;
    return out;
}

LossOutput info_nce_loss(const DenseMatrix& features, std::span<const int> labels,
                         const DenseMatrix& prototypes, const InfoNceOptions& options) {
    if (!(options.tau > 0.0)) {
        throw DomainError("info_nce_loss: tau must be positive");
    }
    if (features.rows == 0) {
        throw DomainError("info_nce_loss: empty batch");
    }
    if (prototypes.cols != features.cols) {
        throw DimensionError("info_nce_loss: prototype dim mismatch");
    }
    const std::size_t n_classes = prototypes.rows;
    if (!options.include_positive_in_denominator && n_classes < 2) {
        throw DomainError("info_nce_loss: need at least two classes without the positive term");
    }
    if (labels.size() != features.rows) {
        throw DimensionError("labels length does not match batch size");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
            throw DomainError("label outside prototype range");
        }
    }

    const std::size_t dim = features.cols;
    const double batch = static_cast<double>(features.rows);
    std::vector<double> proto_norm(n_classes);
    for (std::size_t k = 0; k < n_classes; ++k) {
        proto_norm[k] = norm2(prototypes.row_span(k));
    }

    LossOutput out;
    out.grad = DenseMatrix(features.rows, dim, 0.0);
    std::vector<double> logits(n_classes);
    std::vector<double> cosines(n_classes);
    double total = 0.0;
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        const std::span<const double> z = features.row_span(i);
        const double z_norm = norm2(z);
        for (std::size_t k = 0; k < n_classes; ++k) {
            double c = 0.0;
            if (z_norm >= kCosineNormFloor && proto_norm[k] >= kCosineNormFloor) {
                c = std::clamp(dot(z, prototypes.row_span(k)) / (z_norm * proto_norm[k]), -1.0, 1.0);
            }
            cosines[k] = c;
            logits[k] = c / options.tau;
        }

        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n_classes; ++k) {
            if (k == y && !options.include_positive_in_denominator) {
                continue;
            }
            max_logit = std::max(max_logit, logits[k]);
        }
        double sum_exp = 0.0;
        for (std::size_t k = 0; k < n_classes; ++k) {
            if (k == y && !options.include_positive_in_denominator) {
                continue;
            }
            sum_exp += std::exp(logits[k] - max_logit);
        }
        const double lse = max_logit + std::log(sum_exp);
        total += lse - logits[y];

        // d total_i / d logit_k: softmax weight over the denominator set,
        // minus one on the positive.
        double* g = out.grad.row(i);
        for (std::size_t k = 0; k < n_classes; ++k) {
            double coeff = (k == y) ? -1.0 : 0.0;
            if (!(k == y && !options.include_positive_in_denominator)) {
                coeff += std::exp(logits[k] - lse);
            }
            if (coeff == 0.0 || z_norm < kCosineNormFloor || proto_norm[k] < kCosineNormFloor) {
                continue;
            }
            const double* pk = prototypes.row(k);
            const double scale = coeff / (options.tau * batch);
            const double inv_zp = 1.0 / (z_norm * proto_norm[k]);
            const double self_term = cosines[k] / (z_norm * z_norm);
            for (std::size_t j = 0; j < dim; ++j) {
                g[j] += scale * (pk[j] * inv_zp - self_term * z[j]);
            }
        }
    }
    out.value = total / batch;
    return out;
}

LocalLossBreakdown combined_local_loss(const DenseMatrix& features, std::span<const int> labels,
                                       const MlpParams& classifier, const MlpParams& amplifier,
                                       const DenseMatrix& prototypes,
                                       const LocalLossWeights& weights) {
    LocalLossBreakdown out;

    ForwardCache cls_cache;
    const DenseMatrix probs = forward_mlp(classifier, features, &cls_cache);
    const LossOutput ce = cross_entropy_loss(probs, labels);
    BackwardResult cls_back = backward_mlp(classifier, cls_cache, ce.grad);
    out.ce = ce.value;
    out.classifier_grad = std::move(cls_back.gradients);
    out.feature_grad = std::move(cls_back.input_gradient);

    if (weights.mu != 0.0) {
        ForwardCache amp_cache;
        const DenseMatrix amp_probs = forward_mlp(amplifier, features, &amp_cache);
        const LossOutput kl = kl_uniform_loss(amp_probs);
        const BackwardResult amp_back = backward_mlp(amplifier, amp_cache, kl.grad);
        out.kl = kl.value;
        add_scaled(out.feature_grad, amp_back.input_gradient, weights.mu);
    }

    if (weights.delta != 0.0) {
        const LossOutput nce = info_nce_loss(features, labels, prototypes, weights.nce);
        out.nce = nce.value;
        add_scaled(out.feature_grad, nce.grad, weights.delta);
    }

    out.total = out.ce + weights.mu * out.kl + weights.delta * out.nce;
    return out;
}

}  // namespace fedpall
