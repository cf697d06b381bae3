#pragma once

#include "matxfer/autodiff/mlp.hpp"
#include "matxfer/brdf.hpp"
#include "matxfer/encodings.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace matxfer {

struct LightConfig {
    int hidden = 128;
    int layers = 3;
    int embed_dim = 72;  // per light network; 0 disables embeddings
    int l_max = 4;
    int pos_freq = 4;    // positional frequencies of x fed to g_indir
    double reduce_grad = 1e-2;
};

namespace light_blocks {
inline constexpr const char* kDirect = "g_dir";
inline constexpr const char* kIndirect = "g_indir";
inline std::string direct_embedding(int alpha) { return "embed.dir." + std::to_string(alpha); }
inline std::string indirect_embedding(int alpha) { return "embed.indir." + std::to_string(alpha); }
}  // namespace light_blocks

template <typename Scalar>
void init_light(ad::ParamStore<Scalar>& store, const LightConfig& cfg, std::uint64_t seed) {
    const int ide = sh_count(cfg.l_max);
    std::vector<int> dir_dims{ide + cfg.embed_dim};
    std::vector<int> indir_dims{ide + positional_width(3, cfg.pos_freq) + cfg.embed_dim};
    for (int l = 0; l < cfg.layers; ++l) {
        dir_dims.push_back(cfg.hidden);
        indir_dims.push_back(cfg.hidden);
    }
    dir_dims.push_back(3);
    indir_dims.push_back(3);
    ad::mlp_init(store, light_blocks::kDirect, std::span<const int>(dir_dims), seed);
    ad::mlp_init(store, light_blocks::kIndirect, std::span<const int>(indir_dims), seed);
    if (cfg.embed_dim > 0) {
        for (int a = 0; a < 2; ++a) {
            Rng rng(seed, 0x11 + a);
            MatX<Scalar> ed(1, cfg.embed_dim), ei(1, cfg.embed_dim);
            for (Eigen::Index i = 0; i < ed.size(); ++i) ed.data()[i] = static_cast<Scalar>(rng.uniform(-0.1, 0.1));
            for (Eigen::Index i = 0; i < ei.size(); ++i) ei.data()[i] = static_cast<Scalar>(rng.uniform(-0.1, 0.1));
            store.add(light_blocks::direct_embedding(a), std::move(ed));
            store.add(light_blocks::indirect_embedding(a), std::move(ei));
        }
    }
}

namespace ad {

namespace detail {
template <typename Scalar>
Var<Scalar> damp_direction(Var<Scalar> dirs, double factor) {
    return factor == 1.0 ? dirs : grad_scale(dirs, static_cast<Scalar>(factor));
}
}  // namespace detail

/// l_diff = g_dir(IDE(n, 1), e_dir). N x 3, non-negative.
template <typename Scalar>
Var<Scalar> light_diffuse(Tape<Scalar>& tape, const ParamStore<Scalar>& store, const LightConfig& cfg,
                          Var<Scalar> normals, int alpha) {
    Var<Scalar> one = tape.constant(MatX<Scalar>::Ones(1, 1));
    Var<Scalar> ide = integrated_dir_encode(detail::damp_direction(normals, cfg.reduce_grad), one, cfg.l_max);
    if (cfg.embed_dim > 0)
        return mlp_forward(tape, store, light_blocks::kDirect,
                           {ide, tape.param(store, light_blocks::direct_embedding(alpha))}, Activation::Softplus);
    return mlp_forward(tape, store, light_blocks::kDirect, {ide}, Activation::Softplus);
}

/// l_spec = v g_dir(IDE(t, r), e_dir) + (1 - v) g_indir(IDE(t, r), PE(x), e_indir).
/// `visibility` is N x 1 and treated as a constant.
template <typename Scalar>
Var<Scalar> light_specular(Tape<Scalar>& tape, const ParamStore<Scalar>& store, const LightConfig& cfg,
                           Var<Scalar> points, Var<Scalar> reflected, Var<Scalar> roughness,
                           const MatX<Scalar>& visibility, int alpha) {
    Var<Scalar> ide = integrated_dir_encode(detail::damp_direction(reflected, cfg.reduce_grad), roughness, cfg.l_max);
    Var<Scalar> pe = positional_encode(points, cfg.pos_freq);
    Var<Scalar> direct, indirect;
    if (cfg.embed_dim > 0) {
        direct = mlp_forward(tape, store, light_blocks::kDirect,
                             {ide, tape.param(store, light_blocks::direct_embedding(alpha))}, Activation::Softplus);
        indirect = mlp_forward(tape, store, light_blocks::kIndirect,
                               {ide, pe, tape.param(store, light_blocks::indirect_embedding(alpha))},
                               Activation::Softplus);
    } else {
        direct = mlp_forward(tape, store, light_blocks::kDirect, {ide}, Activation::Softplus);
        indirect = mlp_forward(tape, store, light_blocks::kIndirect, {ide, pe}, Activation::Softplus);
    }
    Var<Scalar> v = tape.constant(visibility);
    Var<Scalar> vbar = tape.constant((MatX<Scalar>::Ones(visibility.rows(), 1) - visibility).eval());
    return add(mul(direct, v), mul(indirect, vbar));
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Parametric lobe light used by the "without neural light" ablation:
// L(w) = ambient + sum_j I_j exp(lambda (w . mu_j - 1)) over fixed mu_j, with
// shading by a fixed stratified quadrature of the rendering integral.
// ---------------------------------------------------------------------------

struct LobeLightConfig {
    int lobes = 16;
    double sharpness = 8.0;
    int quadrature = 64;
};

namespace lobe_blocks {
inline std::string ambient(int alpha) { return "sg.ambient." + std::to_string(alpha); }
inline std::string intensities(int alpha) { return "sg.lobes." + std::to_string(alpha); }
}  // namespace lobe_blocks

template <typename Scalar>
void init_lobe_light(ad::ParamStore<Scalar>& store, const LobeLightConfig& cfg) {
    for (int a = 0; a < 2; ++a) {
        store.add(lobe_blocks::ambient(a), MatX<Scalar>::Constant(1, 3, Scalar(0.5)));
        store.add(lobe_blocks::intensities(a), MatX<Scalar>::Constant(cfg.lobes, 3, Scalar(0.1)));
    }
}

namespace ad {

/// Radiance of a Cook-Torrance surface lit by the lobe light, integrated over
/// `cfg.quadrature` fixed directions. normals, albedo: N x 3; roughness N x 1;
/// view: N x 3 constant unit vectors towards the camera.
template <typename Scalar>
Var<Scalar> shade_lobe_light(Tape<Scalar>& tape, const ParamStore<Scalar>& store, const LobeLightConfig& cfg,
                             Var<Scalar> normals, Var<Scalar> albedo, Var<Scalar> roughness,
                             const MatX<double>& view, int alpha) {
    const Eigen::Index n = normals.rows();
    const int k = cfg.quadrature;
    const std::vector<Vec3> dirs = fibonacci_sphere(k);
    const std::vector<Vec3> mus = fibonacci_sphere(cfg.lobes);
    MatX<Scalar> basis(k, cfg.lobes);
    for (int q = 0; q < k; ++q)
        for (int j = 0; j < cfg.lobes; ++j)
            basis(q, j) = static_cast<Scalar>(std::exp(cfg.sharpness * (dirs[q].dot(mus[j]) - 1)));
    Var<Scalar> radiance = add(matmul(tape.constant(basis), tape.param(store, lobe_blocks::intensities(alpha))),
                               tape.param(store, lobe_blocks::ambient(alpha)));  // k x 3
    radiance = tile_rows(radiance, n);                                            // (n k) x 3

    MatX<Scalar> wdir(n * k, 3), half(n * k, 3), fres(n * k, 1), nov_rows(n, 1);
    for (Eigen::Index r = 0; r < n; ++r) {
        const Vec3 v = view.row(r).transpose();
        for (int q = 0; q < k; ++q) {
            const Vec3 h = (v + dirs[q]).normalized();
            wdir.row(r * k + q) = dirs[q].transpose().template cast<Scalar>();
            half.row(r * k + q) = h.transpose().template cast<Scalar>();
            fres(r * k + q, 0) =
                static_cast<Scalar>(kDielectricF0 + (1 - kDielectricF0) * schlick_weight(dirs[q].dot(h)));
        }
    }
    Var<Scalar> nrep = repeat_rows(normals, k);
    Var<Scalar> nol = clamp_min(dot_rows(nrep, tape.constant(wdir)), Scalar(0));
    Var<Scalar> noh = clamp_min(dot_rows(nrep, tape.constant(half)), Scalar(0));
    Var<Scalar> viewv = tape.constant(view.template cast<Scalar>().eval());
    Var<Scalar> nov = repeat_rows(clamp_min(dot_rows(normals, viewv), static_cast<Scalar>(kMinCosine)), k);

    Var<Scalar> a = repeat_rows(clamp_min(square(roughness), static_cast<Scalar>(kMinAlpha)), k);
    Var<Scalar> a2 = square(a);
    // D = a^2 / (pi ((n.h)^2 (a^2 - 1) + 1)^2)
    Var<Scalar> denom = add_scalar(mul(square(noh), add_scalar(a2, Scalar(-1))), Scalar(1));
    Var<Scalar> d = div(a2, scale(square(denom), static_cast<Scalar>(kPi)));
    // Height-correlated visibility V = 0.5 / (NoL sqrt(NoV^2 (1 - a^2) + a^2) + NoV sqrt(NoL^2 (1 - a^2) + a^2))
    Var<Scalar> one_m_a2 = Scalar(1) - a2;
    Var<Scalar> lv = mul(nol, sqrt(add(mul(square(nov), one_m_a2), a2)));
    Var<Scalar> ll = mul(nov, sqrt(add(mul(square(nol), one_m_a2), a2)));
    Var<Scalar> vis = div(tape.constant(MatX<Scalar>::Constant(1, 1, Scalar(0.5))), add_scalar(add(lv, ll), Scalar(1e-7)));
    Var<Scalar> spec = mul(mul(d, vis), tape.constant(fres));  // (n k) x 1
    Var<Scalar> diffuse = scale(repeat_rows(albedo, k), static_cast<Scalar>(1 / kPi));
    Var<Scalar> brdf = add(diffuse, spec);
    Var<Scalar> contrib = mul(mul(brdf, radiance), nol);
    Var<Scalar> ones = tape.constant(MatX<Scalar>::Constant(n, k, static_cast<Scalar>(4 * kPi / k)));
    return weighted_sum(ones, contrib);
}

}  // namespace ad

}  // namespace matxfer
