#pragma once

#include "matxfer/autodiff/mlp.hpp"
#include "matxfer/brdf.hpp"

#include <cstdint>

namespace matxfer {

namespace transform_blocks {
inline constexpr const char* kPrefix = "F";
}

/// F: beta (4) -> hidden -> beta' (4), sigmoid output.
template <typename Scalar>
void init_transform(ad::ParamStore<Scalar>& store, std::uint64_t seed, int hidden = 256) {
    ad::mlp_init(store, transform_blocks::kPrefix, {4, hidden, 4}, seed);
}

template <typename Scalar>
bool has_transform(const ad::ParamStore<Scalar>& store) {
    return store.contains(ad::weight_name(transform_blocks::kPrefix, 0));
}

namespace ad {

/// F(beta) over a batch (N x 4).
template <typename Scalar>
Var<Scalar> transform_eval(Tape<Scalar>& tape, const ParamStore<Scalar>& store, Var<Scalar> beta) {
    return mlp_forward(tape, store, transform_blocks::kPrefix, {beta}, Activation::Sigmoid);
}

/// beta_0 [alpha = 0] + F(beta_0) [alpha = 1]. F is not evaluated for alpha = 0.
template <typename Scalar>
Var<Scalar> select_material(Tape<Scalar>& tape, const ParamStore<Scalar>& store, Var<Scalar> beta0, int alpha) {
    if (alpha == 0) return beta0;
    if (alpha != 1) throw ContractError("select_material expects alpha in {0, 1}");
    return transform_eval(tape, store, beta0);
}

/// (1 - alpha) beta_0 + alpha F(beta_0); endpoints reduce to select_material.
template <typename Scalar>
Var<Scalar> interpolate_material(Tape<Scalar>& tape, const ParamStore<Scalar>& store, Var<Scalar> beta0,
                                 double alpha) {
    if (!(alpha >= 0 && alpha <= 1)) throw ContractError("interpolation alpha must lie in [0, 1]");
    if (alpha == 0) return select_material(tape, store, beta0, 0);
    if (alpha == 1) return select_material(tape, store, beta0, 1);
    Var<Scalar> f = transform_eval(tape, store, beta0);
    return add(scale(beta0, static_cast<Scalar>(1 - alpha)), scale(f, static_cast<Scalar>(alpha)));
}

}  // namespace ad

/// Pointwise F for a single material.
template <typename Scalar>
MaterialSample transform_eval(const ad::ParamStore<Scalar>& store, const MaterialSample& beta) {
    ad::Tape<Scalar> tape;
    MatX<Scalar> in(1, 4);
    in << static_cast<Scalar>(beta.albedo.x()), static_cast<Scalar>(beta.albedo.y()),
        static_cast<Scalar>(beta.albedo.z()), static_cast<Scalar>(beta.roughness);
    const auto& out = ad::transform_eval(tape, store, tape.constant(in)).value();
    MaterialSample r;
    r.albedo = Vec3(out(0, 0), out(0, 1), out(0, 2));
    r.roughness = out(0, 3);
    return r;
}

/// Batch F without a tape: rows of (albedo rgb, roughness).
template <typename Scalar>
MatX<Scalar> transform_eval_batch(const ad::ParamStore<Scalar>& store, const MatX<Scalar>& beta) {
    ad::Tape<Scalar> tape;
    return ad::transform_eval(tape, store, tape.constant(beta)).value();
}

}  // namespace matxfer
