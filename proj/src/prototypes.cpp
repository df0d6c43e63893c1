#include "fedpall/prototypes.hpp"

#include <string>

#include "fedpall/errors.hpp"

namespace fedpall {

namespace {

void check_labels(std::span<const int> labels, std::size_t batch, std::size_t n_classes) {
    if (labels.size() != batch) {
        throw DimensionError("labels length does not match batch size");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
            throw DomainError("label " + std::to_string(y) + " outside [0, " +
                              std::to_string(n_classes) + ")");
        }
    }
}

}  // namespace

LocalPrototypes compute_local_prototypes(const DenseMatrix& features, std::span<const int> labels,
                                         std::size_t n_classes) {
    if (n_classes == 0) {
        throw DomainError("compute_local_prototypes: n_classes must be positive");
    }
    check_labels(labels, features.rows, n_classes);
    LocalPrototypes out;
    out.prototypes = DenseMatrix(n_classes, features.cols, 0.0);
    out.counts.assign(n_classes, 0);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto k = static_cast<std::size_t>(labels[i]);
        const double* src = features.row(i);
        double* dst = out.prototypes.row(k);
        for (std::size_t j = 0; j < features.cols; ++j) {
            dst[j] += src[j];
        }
        out.counts[k] += 1;
    }
    for (std::size_t k = 0; k < n_classes; ++k) {
        if (out.counts[k] == 0) {
            continue;
        }
        const double inv = 1.0 / static_cast<double>(out.counts[k]);
        double* row = out.prototypes.row(k);
        for (std::size_t j = 0; j < features.cols; ++j) {
            row[j] *= inv;
        }
    }
    return out;
}

DenseMatrix aggregate_prototypes(std::span<const LocalPrototypes> locals) {
    if (locals.empty()) {
        throw DomainError("aggregate_prototypes: no local prototypes");
    }
    const std::size_t n_classes = locals[0].prototypes.rows;
    const std::size_t dim = locals[0].prototypes.cols;
    for (const LocalPrototypes& lp : locals) {
        if (lp.prototypes.rows != n_classes || lp.prototypes.cols != dim ||
            lp.counts.size() != n_classes) {
            throw DimensionError("aggregate_prototypes: shape mismatch across clients");
        }
    }
    DenseMatrix global(n_classes, dim, 0.0);
    for (std::size_t k = 0; k < n_classes; ++k) {
        std::size_t total = 0;
        for (const LocalPrototypes& lp : locals) {
            total += lp.counts[k];
        }
        if (total == 0) {
            continue;
        }
        double* dst = global.row(k);
        for (const LocalPrototypes& lp : locals) {
            if (lp.counts[k] == 0) {
                continue;
            }
            const double w = static_cast<double>(lp.counts[k]) / static_cast<double>(total);
            const double* src = lp.prototypes.row(k);
            for (std::size_t j = 0; j < dim; ++j) {
                dst[j] += w * src[j];
            }
        }
    }
    return global;
}

DenseMatrix mix_with_prototypes(const DenseMatrix& features, std::span<const int> labels,
                                const DenseMatrix& prototypes, double u_f, double u_r, Rng& rng) {
    if (!(0.0 <= u_f && u_f <= u_r && u_r <= 1.0)) {
        throw DomainError("mix_with_prototypes: need 0 <= u_f <= u_r <= 1");
    }
    if (prototypes.cols != features.cols) {
        throw DimensionError("mix_with_prototypes: prototype dim mismatch");
    }
    check_labels(labels, features.rows, prototypes.rows);
    DenseMatrix out(features.rows, features.cols);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const double alpha = rng.uniform(u_f, u_r);
        const double* z = features.row(i);
        const double* g = prototypes.row(static_cast<std::size_t>(labels[i]));
        double* r = out.row(i);
        for (std::size_t j = 0; j < features.cols; ++j) {
            r[j] = alpha * z[j] + (1.0 - alpha) * g[j];
        }
    }
    return out;
}

DenseMatrix apply_feature_mask(const DenseMatrix& features, double beta, Rng& rng) {
    if (!(0.0 <= beta && beta <= 1.0)) {
        throw DomainError("apply_feature_mask: beta outside [0, 1]");
    }
    DenseMatrix out(features.rows, features.cols);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const double* src = features.row(i);
        double* dst = out.row(i);
        for (std::size_t j = 0; j < features.cols; ++j) {
            const double u = rng.uniform();
            dst[j] = (u < beta) ? src[j] : 0.0;
        }
    }
    return out;
}

}  // namespace fedpall
