#include "fedpall/mlp.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "fedpall/errors.hpp"

namespace fedpall {

namespace {

constexpr std::uint32_t kMagic = 0x46504D31;  // "FPM1"
constexpr std::uint16_t kVersion = 1;

void append_bytes(std::vector<std::uint8_t>& out, const void* src, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(src);
    out.insert(out.end(), p, p + n);
}

template <typename T>
T read_value(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    if (offset + sizeof(T) > bytes.size()) {
        throw ParseError("mlp record truncated");
    }
    T value;
    std::memcpy(&value, bytes.data() + offset, sizeof(T));
    offset += sizeof(T);
    return value;
}

// dL/dz for a row-wise softmax output p given dL/dp.
DenseMatrix softmax_backward(const DenseMatrix& probs, const DenseMatrix& grad) {
    DenseMatrix out(probs.rows, probs.cols);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const double* p = probs.row(i);
        const double* g = grad.row(i);
        double inner = 0.0;
        for (std::size_t j = 0; j < probs.cols; ++j) {
            inner += g[j] * p[j];
        }
        double* o = out.row(i);
        for (std::size_t j = 0; j < probs.cols; ++j) {
            o[j] = p[j] * (g[j] - inner);
        }
    }
    return out;
}

}  // namespace

void validate_spec(const MlpSpec& spec) {
    if (spec.layer_dims.size() < 2) {
        throw DomainError("MlpSpec needs at least input and output dims");
    }
    for (std::size_t d : spec.layer_dims) {
        if (d < 1) {
            throw DomainError("MlpSpec layer dims must be >= 1");
        }
    }
}

MlpParams zero_params(const MlpSpec& spec) {
    validate_spec(spec);
    MlpParams p;
    p.spec = spec;
    for (std::size_t l = 0; l < spec.n_layers(); ++l) {
        p.weights.emplace_back(spec.layer_dims[l], spec.layer_dims[l + 1], 0.0);
        p.biases.emplace_back(spec.layer_dims[l + 1], 0.0);
    }
    return p;
}

MlpParams init_params(const MlpSpec& spec, Rng& rng) {
    MlpParams p = zero_params(spec);
    for (std::size_t l = 0; l < spec.n_layers(); ++l) {
        const double fan_in = static_cast<double>(spec.layer_dims[l]);
        const double fan_out = static_cast<double>(spec.layer_dims[l + 1]);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& w : p.weights[l].data) {
            w = rng.uniform(-bound, bound);
        }
    }
    return p;
}

DenseMatrix forward_mlp(const MlpParams& params, const DenseMatrix& input, ForwardCache* cache) {
    validate_spec(params.spec);
    if (input.cols != params.spec.input_dim()) {
        throw DimensionError("forward_mlp: input has " + std::to_string(input.cols) +
                             " columns, spec expects " + std::to_string(params.spec.input_dim()));
    }
    if (cache != nullptr) {
        *cache = ForwardCache{};
        cache->input = input;
    }
    const std::size_t n_layers = params.spec.n_layers();
    DenseMatrix act = input;
    for (std::size_t l = 0; l < n_layers; ++l) {
        DenseMatrix pre = matmul(act, params.weights[l]);
        add_bias_rows(pre, params.biases[l]);
        const bool last = (l + 1 == n_layers);
        DenseMatrix post;
        if (!last) {
            post = relu(pre);
        } else if (params.spec.head == OutputHead::softmax) {
            post = softmax_rows(pre);
        } else {
            post = pre;
        }
        if (cache != nullptr) {
            cache->pre.push_back(std::move(pre));
            cache->post.push_back(post);
        }
        act = std::move(post);
    }
    return act;
}

BackwardResult backward_mlp(const MlpParams& params, const ForwardCache& cache,
                            const DenseMatrix& output_gradient) {
    if (cache.empty()) {
        throw UsageError("backward_mlp: cache missing; run forward_mlp with a cache first");
    }
    const std::size_t n_layers = params.spec.n_layers();
    if (cache.pre.size() != n_layers || cache.input.cols != params.spec.input_dim()) {
        throw UsageError("backward_mlp: cache does not match params");
    }
    if (!output_gradient.same_shape(cache.post.back())) {
        throw DimensionError("backward_mlp: output gradient shape mismatch");
    }

    BackwardResult result;
    result.gradients = zero_params(params.spec);

    DenseMatrix g = output_gradient;
    if (params.spec.head == OutputHead::softmax) {
        g = softmax_backward(cache.post.back(), g);
    }
    for (std::size_t l = n_layers; l-- > 0;) {
        const DenseMatrix& layer_input = (l == 0) ? cache.input : cache.post[l - 1];
        result.gradients.weights[l] = matmul_transpose_a(layer_input, g);
        result.gradients.biases[l] = column_sums(g);
        DenseMatrix prev = matmul_transpose_b(g, params.weights[l]);
        if (l == 0) {
            result.input_gradient = std::move(prev);
        } else {
            relu_backward_inplace(prev, cache.pre[l - 1]);
            g = std::move(prev);
        }
    }
    return result;
}

MlpParams sgd_step(const MlpParams& params, const MlpParams& gradients, double lr) {
    if (params.spec != gradients.spec) {
        throw DimensionError("sgd_step: gradient shapes do not match params");
    }
    MlpParams out = params;
    for (std::size_t l = 0; l < out.weights.size(); ++l) {
        for (std::size_t i = 0; i < out.weights[l].data.size(); ++i) {
            out.weights[l].data[i] -= lr * gradients.weights[l].data[i];
        }
        for (std::size_t i = 0; i < out.biases[l].size(); ++i) {
            out.biases[l][i] -= lr * gradients.biases[l][i];
        }
    }
    return out;
}

std::vector<std::uint8_t> serialize_params(const MlpParams& params) {
    std::vector<std::uint8_t> out;
    append_bytes(out, &kMagic, sizeof(kMagic));
    append_bytes(out, &kVersion, sizeof(kVersion));
    const std::uint8_t head = static_cast<std::uint8_t>(params.spec.head);
    const std::uint8_t pad = 0;
    append_bytes(out, &head, 1);
    append_bytes(out, &pad, 1);
    const std::uint32_t n_dims = static_cast<std::uint32_t>(params.spec.layer_dims.size());
    append_bytes(out, &n_dims, sizeof(n_dims));
    for (std::size_t d : params.spec.layer_dims) {
        const std::uint32_t d32 = static_cast<std::uint32_t>(d);
        append_bytes(out, &d32, sizeof(d32));
    }
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        append_bytes(out, params.weights[l].data.data(),
                     params.weights[l].data.size() * sizeof(double));
        append_bytes(out, params.biases[l].data(), params.biases[l].size() * sizeof(double));
    }
    return out;
}

MlpParams deserialize_params(std::span<const std::uint8_t> bytes) {
    std::size_t off = 0;
    if (read_value<std::uint32_t>(bytes, off) != kMagic) {
        throw ParseError("mlp record: bad magic");
    }
    if (read_value<std::uint16_t>(bytes, off) != kVersion) {
        throw ParseError("mlp record: unsupported version");
    }
    const std::uint8_t head = read_value<std::uint8_t>(bytes, off);
    if (head > 1) {
        throw ParseError("mlp record: bad output head");
    }
    read_value<std::uint8_t>(bytes, off);  // pad
    const std::uint32_t n_dims = read_value<std::uint32_t>(bytes, off);
    if (n_dims < 2) {
        throw ParseError("mlp record: too few layer dims");
    }
    MlpSpec spec;
    spec.head = static_cast<OutputHead>(head);
    for (std::uint32_t i = 0; i < n_dims; ++i) {
        spec.layer_dims.push_back(read_value<std::uint32_t>(bytes, off));
    }
    MlpParams params = zero_params(spec);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        for (double& w : params.weights[l].data) {
            w = read_value<double>(bytes, off);
        }
        for (double& b : params.biases[l]) {
            b = read_value<double>(bytes, off);
        }
    }
    if (off != bytes.size()) {
        throw ParseError("mlp record: trailing bytes");
    }
    return params;
}

std::vector<double> flatten_params(const MlpParams& params) {
    std::vector<double> flat;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        flat.insert(flat.end(), params.weights[l].data.begin(), params.weights[l].data.end());
        flat.insert(flat.end(), params.biases[l].begin(), params.biases[l].end());
    }
    return flat;
}

void unflatten_params(MlpParams& params, std::span<const double> flat) {
    std::size_t off = 0;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        for (double& w : params.weights[l].data) {
            w = flat[off++];
        }
        for (double& b : params.biases[l]) {
            b = flat[off++];
        }
    }
    if (off != flat.size()) {
        throw DimensionError("unflatten_params: length mismatch");
    }
}

}  // namespace fedpall
