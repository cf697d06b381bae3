#pragma once

#include "matxfer/autodiff/ops.hpp"
#include "matxfer/core/hash.hpp"
#include "matxfer/core/rng.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace matxfer::ad {

enum class Activation { Identity, Sigmoid, Softplus, Relu };

inline std::string weight_name(std::string_view prefix, std::size_t layer) {
    return std::string(prefix) + ".w" + std::to_string(layer);
}
inline std::string bias_name(std::string_view prefix, std::size_t layer) {
    return std::string(prefix) + ".b" + std::to_string(layer);
}

/// Adds `<prefix>.w<i>` (fan_in x fan_out) and `<prefix>.b<i>` (1 x fan_out)
/// blocks. Weights are U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases are zero.
template <typename Scalar>
void mlp_init(ParamStore<Scalar>& store, std::string_view prefix, std::span<const int> dims, std::uint64_t seed) {
    if (dims.size() < 2) throw ConfigError("an MLP needs at least an input and an output dimension");
    for (int d : dims)
        if (d < 1) throw ConfigError("MLP layer dimensions must be >= 1");
    Rng rng(seed, fnv1a(prefix));
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        MatX<Scalar> w(dims[l], dims[l + 1]);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
        store.add(weight_name(prefix, l), std::move(w));
        store.add(bias_name(prefix, l), MatX<Scalar>::Zero(1, dims[l + 1]));
    }
}

template <typename Scalar>
void mlp_init(ParamStore<Scalar>& store, std::string_view prefix, std::initializer_list<int> dims, std::uint64_t seed) {
    std::vector<int> v(dims);
    mlp_init(store, prefix, std::span<const int>(v), seed);
}

template <typename Scalar>
std::size_t mlp_layer_count(const ParamStore<Scalar>& store, std::string_view prefix) {
    std::size_t n = 0;
    while (store.contains(weight_name(prefix, n))) ++n;
    return n;
}

template <typename Scalar>
Var<Scalar> apply_activation(Var<Scalar> x, Activation act) {
    switch (act) {
        case Activation::Sigmoid: return sigmoid(x);
        case Activation::Softplus: return softplus(x);
        case Activation::Relu: return relu(x);
        case Activation::Identity: break;
    }
    return x;
}

/// Evaluates the MLP on the concatenation of `inputs` without materializing
/// it: each part multiplies its own row slice of the first weight matrix.
/// Parts with a single row are broadcast over the batch. Hidden layers use ReLU.
template <typename Scalar>
Var<Scalar> mlp_forward(Tape<Scalar>& tape, const ParamStore<Scalar>& store, std::string_view prefix,
                        std::span<const Var<Scalar>> inputs, Activation output) {
    const std::size_t layers = mlp_layer_count(store, prefix);
    if (layers == 0) throw ConfigError("no MLP with prefix '" + std::string(prefix) + "'");
    Var<Scalar> w0 = tape.param(store, weight_name(prefix, 0));
    Eigen::Index width = 0;
    for (const auto& in : inputs) width += in.cols();
    if (width != w0.rows())
        throw ShapeError("MLP '" + std::string(prefix) + "' expects input width " + std::to_string(w0.rows()) +
                         ", got " + std::to_string(width));
    Var<Scalar> h;
    Eigen::Index offset = 0;
    for (const auto& in : inputs) {
        if (in.cols() == 0) continue;
        Var<Scalar> part = matmul(in, w0, offset);
        h = h.valid() ? add(h, part) : part;
        offset += in.cols();
    }
    h = add(h, tape.param(store, bias_name(prefix, 0)));
    for (std::size_t l = 1; l < layers; ++l) {
        h = relu(h);
        h = add(matmul(h, tape.param(store, weight_name(prefix, l))), tape.param(store, bias_name(prefix, l)));
    }
    return apply_activation(h, output);
}

template <typename Scalar>
Var<Scalar> mlp_forward(Tape<Scalar>& tape, const ParamStore<Scalar>& store, std::string_view prefix,
                        std::initializer_list<Var<Scalar>> inputs, Activation output) {
    std::vector<Var<Scalar>> v(inputs);
    return mlp_forward(tape, store, prefix, std::span<const Var<Scalar>>(v), output);
}

}  // namespace matxfer::ad
