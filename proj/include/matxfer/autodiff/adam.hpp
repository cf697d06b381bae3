#pragma once

#include "matxfer/autodiff/param_store.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace matxfer::ad {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // First matching prefix wins; unmatched blocks use `lr`.
    std::vector<std::pair<std::string, double>> lr_by_prefix;
    // Global multiplier, e.g. for a decay schedule.
    double lr_scale = 1.0;

    double lr_for(const std::string& block) const {
        for (const auto& [prefix, value] : lr_by_prefix)
            if (block.rfind(prefix, 0) == 0) return value * lr_scale;
        return lr * lr_scale;
    }
};

template <typename Scalar>
struct AdamState {
    std::vector<MatX<Scalar>> m;
    std::vector<MatX<Scalar>> v;
    std::uint64_t step = 0;

    static AdamState zeros_like(const ParamStore<Scalar>& store) {
        AdamState s;
        for (std::size_t i = 0; i < store.size(); ++i) {
            s.m.push_back(MatX<Scalar>::Zero(store.block(i).rows(), store.block(i).cols()));
            s.v.push_back(MatX<Scalar>::Zero(store.block(i).rows(), store.block(i).cols()));
        }
        return s;
    }
};

/// Bias-corrected Adam. Blocks named in `frozen` are left untouched.
template <typename Scalar>
void adam_step(ParamStore<Scalar>& params, const Gradients<Scalar>& grads, AdamState<Scalar>& state,
               const AdamHyper& hyper, const std::vector<std::string>& frozen = {}) {
    if (grads.blocks.size() != params.size() || state.m.size() != params.size())
        throw ShapeError("adam_step: gradients, state and parameters are not block-aligned");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!grads.blocks[i].allFinite())
            throw NumericError("non-finite gradient in block '" + params.name(i) + "' at step " +
                               std::to_string(state.step + 1));
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(hyper.beta1, t);
    const double bc2 = 1.0 - std::pow(hyper.beta2, t);
    const Scalar b1 = static_cast<Scalar>(hyper.beta1), b2 = static_cast<Scalar>(hyper.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        bool skip = false;
        for (const auto& f : frozen) skip = skip || params.name(i).rfind(f, 0) == 0;
        if (skip) continue;
        const auto& g = grads.blocks[i].array();
        auto m = state.m[i].array();
        auto v = state.v[i].array();
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g.square();
        const Scalar step = static_cast<Scalar>(hyper.lr_for(params.name(i)) / bc1);
        const Scalar inv_bc2 = static_cast<Scalar>(1.0 / bc2);
        const Scalar eps = static_cast<Scalar>(hyper.eps);
        params.mutable_block(i).array() -= step * m / ((v * inv_bc2).sqrt() + eps);
    }
}

}  // namespace matxfer::ad
