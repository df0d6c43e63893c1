#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedpall/matrix.hpp"
#include "fedpall/rng.hpp"

namespace fedpall {

enum class OutputHead : std::uint8_t { linear = 0, softmax = 1 };

/// Architecture of a multilayer perceptron. Hidden layers use ReLU; the
/// output layer is either linear (feature extractors) or a row-wise softmax
/// (classifiers, amplifiers).
struct MlpSpec {
    std::vector<std::size_t> layer_dims;  // input, hidden..., output
    OutputHead head = OutputHead::linear;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t n_layers() const { return layer_dims.size() - 1; }

    bool operator==(const MlpSpec&) const = default;
};

/// Layered weights and biases conforming to an MlpSpec. weights[l] has shape
/// dims[l] x dims[l+1]; biases[l] has length dims[l+1]. Also reused as the
/// carrier for parameter gradients, which have exactly these shapes.
struct MlpParams {
    MlpSpec spec;
    std::vector<DenseMatrix> weights;
    std::vector<DenseVector> biases;

    bool operator==(const MlpParams&) const = default;
};

/// Per-layer intermediate values captured by a forward pass, required for the
/// exact backward pass.
struct ForwardCache {
    DenseMatrix input;
    std::vector<DenseMatrix> pre;   // pre-activation per layer
    std::vector<DenseMatrix> post;  // post-activation per layer; back() is the output

    bool empty() const { return pre.empty(); }
};

struct BackwardResult {
    MlpParams gradients;
    DenseMatrix input_gradient;
};

void validate_spec(const MlpSpec& spec);

/// Zero-valued parameters for a spec (also the shape template for gradients).
MlpParams zero_params(const MlpSpec& spec);

/// Uniform initialization in +-sqrt(6 / (fan_in + fan_out)); biases zero.
MlpParams init_params(const MlpSpec& spec, Rng& rng);

/// Forward pass over a batch (rows = samples). With a softmax head every
/// output row is a probability vector. Pass a cache to enable backward_mlp.
DenseMatrix forward_mlp(const MlpParams& params, const DenseMatrix& input,
                        ForwardCache* cache = nullptr);

/// Exact analytic backpropagation. output_gradient is the loss gradient with
/// respect to the forward output (after the softmax head, if any).
BackwardResult backward_mlp(const MlpParams& params, const ForwardCache& cache,
                            const DenseMatrix& output_gradient);

/// p' = p - lr * g for every parameter.
MlpParams sgd_step(const MlpParams& params, const MlpParams& gradients, double lr);

/// Flat, versioned binary record: header, layer dims, then row-major weights
/// and biases as raw little-endian doubles. Round-trips bit-exactly.
std::vector<std::uint8_t> serialize_params(const MlpParams& params);
MlpParams deserialize_params(std::span<const std::uint8_t> bytes);

// Flat views used by parameter averaging and finite-difference harnesses.
std::vector<double> flatten_params(const MlpParams& params);
void unflatten_params(MlpParams& params, std::span<const double> flat);

}  // namespace fedpall
