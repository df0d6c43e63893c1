#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fedpall {

using DenseVector = std::vector<double>;

/// Row-major dense matrix of doubles. The universal numeric carrier for
/// feature batches, weights and prototype tables.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows * cols entries, row-major

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }
    std::span<double> row_span(std::size_t i) { return {row(i), cols}; }

    bool same_shape(const DenseMatrix& other) const {
        return rows == other.rows && cols == other.cols;
    }

    bool operator==(const DenseMatrix&) const = default;
};

// C = A * B
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// C = A^T * B (A: m x r, B: m x c -> r x c). Used for weight gradients.
DenseMatrix matmul_transpose_a(const DenseMatrix& a, const DenseMatrix& b);

// C = A * B^T (A: m x k, B: n x k -> m x n). Used to push gradients back
// through a layer.
DenseMatrix matmul_transpose_b(const DenseMatrix& a, const DenseMatrix& b);

// Adds the bias vector to every row.
void add_bias_rows(DenseMatrix& m, const DenseVector& bias);

DenseMatrix relu(const DenseMatrix& m);

// grad *= 1[pre > 0], elementwise.
void relu_backward_inplace(DenseMatrix& grad, const DenseMatrix& pre);

// Row-wise numerically stabilized softmax (max subtraction per row).
DenseMatrix softmax_rows(const DenseMatrix& logits);

/// Stabilized softmax of a single vector; output is nonnegative and sums to
/// one for any finite input.
DenseVector softmax(std::span<const double> logits);

DenseVector column_sums(const DenseMatrix& m);

// a += s * b, shapes must match.
void add_scaled(DenseMatrix& a, const DenseMatrix& b, double s);

DenseMatrix take_rows(const DenseMatrix& m, std::span<const int> indices);

bool all_finite(const DenseMatrix& m);
bool all_finite(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Cosine similarity in [-1, 1]. A vector with norm below 1e-12 is treated as
/// direction-free and the similarity is defined as 0.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Norm threshold below which cosine similarity degrades to 0.
inline constexpr double kCosineNormFloor = 1e-12;

}  // namespace fedpall
