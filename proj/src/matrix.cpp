#include "fedpall/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedpall/errors.hpp"

namespace fedpall {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw DimensionError(what);
    }
}

}  // namespace

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ (" +
                                  std::to_string(a.cols) + " vs " + std::to_string(b.rows) + ")");
    DenseMatrix c(a.rows, b.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) {
                continue;
            }
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

DenseMatrix matmul_transpose_a(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.rows == b.rows, "matmul_transpose_a: row counts differ");
    DenseMatrix c(a.cols, b.cols, 0.0);
    for (std::size_t m = 0; m < a.rows; ++m) {
        const double* arow = a.row(m);
        const double* brow = b.row(m);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            if (av == 0.0) {
                continue;
            }
            double* crow = c.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

DenseMatrix matmul_transpose_b(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols == b.cols, "matmul_transpose_b: column counts differ");
    DenseMatrix c(a.rows, b.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            crow[j] = dot({arow, a.cols}, b.row_span(j));
        }
    }
    return c;
}

void add_bias_rows(DenseMatrix& m, const DenseVector& bias) {
    require(m.cols == bias.size(), "add_bias_rows: bias length mismatch");
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* row = m.row(i);
        for (std::size_t j = 0; j < m.cols; ++j) {
            row[j] += bias[j];
        }
    }
}

DenseMatrix relu(const DenseMatrix& m) {
    DenseMatrix out = m;
    for (double& v : out.data) {
        v = v > 0.0 ? v : 0.0;
    }
    return out;
}

void relu_backward_inplace(DenseMatrix& grad, const DenseMatrix& pre) {
    require(grad.same_shape(pre), "relu_backward: shape mismatch");
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
        if (pre.data[i] <= 0.0) {
            grad.data[i] = 0.0;
        }
    }
}

DenseVector softmax(std::span<const double> logits) {
    DenseVector out(logits.size());
    double mx = logits[0];
    for (double v : logits) {
        mx = std::max(mx, v);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        out[j] = std::exp(logits[j] - mx);
        sum += out[j];
    }
    for (double& v : out) {
        v /= sum;
    }
    return out;
}

DenseMatrix softmax_rows(const DenseMatrix& logits) {
    DenseMatrix out(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const DenseVector row = softmax(logits.row_span(i));
        std::copy(row.begin(), row.end(), out.row(i));
    }
    return out;
}

DenseVector column_sums(const DenseMatrix& m) {
    DenseVector sums(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.row(i);
        for (std::size_t j = 0; j < m.cols; ++j) {
            sums[j] += row[j];
        }
    }
    return sums;
}

void add_scaled(DenseMatrix& a, const DenseMatrix& b, double s) {
    require(a.same_shape(b), "add_scaled: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        a.data[i] += s * b.data[i];
    }
}

DenseMatrix take_rows(const DenseMatrix& m, std::span<const int> indices) {
    DenseMatrix out(indices.size(), m.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = m.row(static_cast<std::size_t>(indices[i]));
        std::copy(src, src + m.cols, out.row(i));
    }
    return out;
}

bool all_finite(const DenseMatrix& m) {
    return all_finite(std::span<const double>(m.data));
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm2(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("cosine_similarity: length mismatch");
    }
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na < kCosineNormFloor || nb < kCosineNormFloor) {
        return 0.0;
    }
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

}  // namespace fedpall
