#pragma once

#include "matxfer/autodiff/mlp.hpp"
#include "matxfer/core/rng.hpp"
#include "matxfer/encodings.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace matxfer {

struct FieldConfig {
    int grid_res = 48;         // vertices per axis
    int app_channels = 24;
    int embed_dim = 72;        // appearance light embedding; 0 disables embeddings
    int fuse_hidden = 64;
    int decoder_hidden = 64;
    int view_freq = 2;         // positional frequencies of the view direction for D_c
    double half_extent = 1.0;  // scene box is [-h, h]^3
    double density_shift = -10.0;
    double density_scale = 25.0;
};

// ---------------------------------------------------------------------------
// Trilinear lookup on a vertex-aligned D^3 grid spanning the scene box.
// ---------------------------------------------------------------------------

struct GridCorners {
    std::array<int, 8> index{};
    std::array<double, 8> weight{};
    // d(weight)/d(x, y, z) in world units.
    std::array<std::array<double, 3>, 8> dweight{};
    bool inside = false;
};

inline GridCorners grid_corners(const Vec3& x, int res, double half_extent) {
    GridCorners c;
    const double to_grid = (res - 1) / (2 * half_extent);
    double u[3];
    for (int a = 0; a < 3; ++a) {
        u[a] = (x[a] + half_extent) * to_grid;
        if (!(u[a] >= 0 && u[a] <= res - 1)) return c;
    }
    c.inside = true;
    int i0[3];
    double t[3];
    for (int a = 0; a < 3; ++a) {
        i0[a] = std::min(static_cast<int>(u[a]), res - 2);
        t[a] = u[a] - i0[a];
    }
    for (int k = 0; k < 8; ++k) {
        const int bx = k & 1, by = (k >> 1) & 1, bz = (k >> 2) & 1;
        const double wx = bx ? t[0] : 1 - t[0];
        const double wy = by ? t[1] : 1 - t[1];
        const double wz = bz ? t[2] : 1 - t[2];
        c.index[k] = ((i0[2] + bz) * res + (i0[1] + by)) * res + (i0[0] + bx);
        c.weight[k] = wx * wy * wz;
        const double sx = bx ? 1.0 : -1.0, sy = by ? 1.0 : -1.0, sz = bz ? 1.0 : -1.0;
        c.dweight[k] = {sx * wy * wz * to_grid, wx * sy * wz * to_grid, wx * wy * sz * to_grid};
    }
    return c;
}

/// Ray / box slab test. Returns false when the ray misses.
inline bool intersect_box(const Vec3& o, const Vec3& d, double half_extent, double& t0, double& t1) {
    t0 = 0;
    t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (o[a] < -half_extent || o[a] > half_extent) return false;
            continue;
        }
        double ta = (-half_extent - o[a]) / d[a];
        double tb = (half_extent - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t1 > t0;
}

namespace ad {

/// Trilinear sample of grid rows at constant positions (N x 3). Points outside
/// the box read zero. Returns N x channels.
template <typename Scalar>
Var<Scalar> grid_sample(Var<Scalar> grid, const MatX<double>& positions, int res, double half_extent) {
    const Eigen::Index n = positions.rows(), ch = grid.cols();
    if (grid.rows() != static_cast<Eigen::Index>(res) * res * res) throw ShapeError("grid block size mismatch");
    const auto& gv = grid.value();
    MatX<Scalar> y = MatX<Scalar>::Zero(n, ch);
    std::vector<int> idx(static_cast<std::size_t>(n) * 8, -1);
    std::vector<Scalar> wts(static_cast<std::size_t>(n) * 8, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const GridCorners c = grid_corners(positions.row(i).transpose(), res, half_extent);
        if (!c.inside) continue;
        for (int k = 0; k < 8; ++k) {
            const Scalar w = static_cast<Scalar>(c.weight[k]);
            idx[i * 8 + k] = c.index[k];
            wts[i * 8 + k] = w;
            y.row(i) += w * gv.row(c.index[k]);
        }
    }
    const int gi = grid.id;
    return grid.tape->record(std::move(y), {gi}, [gi, idx = std::move(idx), wts = std::move(wts)](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        auto& gg = t.grad(gi);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            if (idx[i * 8] < 0) continue;
            for (int k = 0; k < 8; ++k) gg.row(idx[i * 8 + k]) += wts[i * 8 + k] * g.row(i);
        }
    });
}

/// Spatial gradient of the trilinear interpolant of a single-channel grid.
/// Returns N x 3; zero outside the box.
template <typename Scalar>
Var<Scalar> grid_spatial_grad(Var<Scalar> grid, const MatX<double>& positions, int res, double half_extent) {
    if (grid.cols() != 1) throw ShapeError("grid_spatial_grad expects a single-channel grid");
    const Eigen::Index n = positions.rows();
    const auto& gv = grid.value();
    MatX<Scalar> y = MatX<Scalar>::Zero(n, 3);
    std::vector<int> idx(static_cast<std::size_t>(n) * 8, -1);
    std::vector<Scalar> dw(static_cast<std::size_t>(n) * 24, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const GridCorners c = grid_corners(positions.row(i).transpose(), res, half_extent);
        if (!c.inside) continue;
        for (int k = 0; k < 8; ++k) {
            idx[i * 8 + k] = c.index[k];
            for (int a = 0; a < 3; ++a) {
                const Scalar w = static_cast<Scalar>(c.dweight[k][a]);
                dw[i * 24 + k * 3 + a] = w;
                y(i, a) += w * gv(c.index[k], 0);
            }
        }
    }
    const int gi = grid.id;
    return grid.tape->record(std::move(y), {gi}, [gi, idx = std::move(idx), dw = std::move(dw)](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        auto& gg = t.grad(gi);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            if (idx[i * 8] < 0) continue;
            for (int k = 0; k < 8; ++k)
                for (int a = 0; a < 3; ++a) gg(idx[i * 8 + k], 0) += dw[i * 24 + k * 3 + a] * g(i, a);
        }
    });
}

/// Volume rendering quadrature. sigma, delta: N x S. Returns N x (S + 1):
/// weights w_i = T_i (1 - exp(-sigma_i delta_i)) followed by the final
/// transmittance in the last column.
template <typename Scalar>
Var<Scalar> volume_weights(Var<Scalar> sigma, const MatX<Scalar>& delta) {
    const Eigen::Index n = sigma.rows(), s = sigma.cols();
    if (delta.rows() != n || delta.cols() != s) throw ShapeError("volume_weights delta shape mismatch");
    const auto& sv = sigma.value();
    MatX<Scalar> y(n, s + 1);
    for (Eigen::Index r = 0; r < n; ++r) {
        Scalar trans = 1;
        for (Eigen::Index k = 0; k < s; ++k) {
            const Scalar e = std::exp(-sv(r, k) * delta(r, k));
            y(r, k) = trans * (1 - e);
            trans *= e;
        }
        y(r, s) = trans;
    }
    const int si = sigma.id;
    return sigma.tape->record(std::move(y), {si}, [si, delta](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        const auto& y = t.value(self);
        const Eigen::Index n = delta.rows(), s = delta.cols();
        MatX<Scalar> gs(n, s);
        for (Eigen::Index r = 0; r < n; ++r) {
            const Scalar t_end = y(r, s);
            // suffix = sum_{i > k} g_i w_i
            Scalar suffix = 0;
            Scalar trans_next = t_end;  // T_{k+1}
            for (Eigen::Index k = s - 1; k >= 0; --k) {
                const Scalar dtau = g(r, k) * trans_next - suffix - g(r, s) * t_end;
                gs(r, k) = dtau * delta(r, k);
                suffix += g(r, k) * y(r, k);
                trans_next += y(r, k);  // T_k = T_{k+1} + w_k
            }
        }
        t.accumulate(si, gs);
    });
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Field model: blocks, pointwise queries, decoders.
// ---------------------------------------------------------------------------

namespace field_blocks {
inline constexpr const char* kDensity = "grid.density";
inline constexpr const char* kAppearance = "grid.app";
inline constexpr const char* kFuse = "fuse";
inline constexpr const char* kNormal = "dec_n";
inline constexpr const char* kMaterial = "dec_beta";
inline constexpr const char* kColor = "dec_c";
inline std::string embedding(int alpha) { return "embed.app." + std::to_string(alpha); }
}  // namespace field_blocks

template <typename Scalar>
void init_field(ad::ParamStore<Scalar>& store, const FieldConfig& cfg, std::uint64_t seed) {
    using namespace field_blocks;
    const int d = cfg.grid_res;
    if (d < 2) throw ConfigError("grid_res must be >= 2");
    const Eigen::Index cells = static_cast<Eigen::Index>(d) * d * d;
    store.add(kDensity, MatX<Scalar>::Zero(cells, 1));
    MatX<Scalar> app(cells, cfg.app_channels);
    Rng rng(seed, 0xa99);
    for (Eigen::Index i = 0; i < app.size(); ++i) app.data()[i] = static_cast<Scalar>(rng.uniform(-0.1, 0.1));
    store.add(kAppearance, std::move(app));
    const int c = cfg.app_channels;
    ad::mlp_init(store, kFuse, {c + cfg.embed_dim, cfg.fuse_hidden, c}, seed);
    ad::mlp_init(store, kNormal, {c, cfg.decoder_hidden, 3}, seed);
    ad::mlp_init(store, kMaterial, {c, cfg.decoder_hidden, 4}, seed);
    ad::mlp_init(store, kColor, {c + positional_width(3, cfg.view_freq), cfg.decoder_hidden, cfg.decoder_hidden, 3},
                 seed);
    if (cfg.embed_dim > 0) {
        for (int a = 0; a < 2; ++a) {
            MatX<Scalar> e(1, cfg.embed_dim);
            Rng er(seed, 0xe0 + a);
            for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = static_cast<Scalar>(er.uniform(-0.1, 0.1));
            store.add(embedding(a), std::move(e));
        }
    }
}

/// Decoded density at a point; zero outside the scene box.
template <typename Scalar>
double sample_sigma(const ad::ParamStore<Scalar>& store, const FieldConfig& cfg, const Vec3& x) {
    const GridCorners c = grid_corners(x, cfg.grid_res, cfg.half_extent);
    if (!c.inside) return 0.0;
    const auto& g = store[field_blocks::kDensity];
    double raw = 0;
    for (int k = 0; k < 8; ++k) raw += c.weight[k] * static_cast<double>(g(c.index[k], 0));
    return cfg.density_scale * ad::softplus_scalar(raw + cfg.density_shift);
}

namespace ad {

/// sigma = scale * softplus(raw + shift) at constant positions; N x 1.
template <typename Scalar>
Var<Scalar> sample_sigma(Tape<Scalar>& tape, const ParamStore<Scalar>& store, const FieldConfig& cfg,
                         const MatX<double>& positions) {
    Var<Scalar> raw = grid_sample(tape.param(store, field_blocks::kDensity), positions, cfg.grid_res, cfg.half_extent);
    return scale(softplus(raw, static_cast<Scalar>(cfg.density_shift)), static_cast<Scalar>(cfg.density_scale));
}

/// a_alpha from grid features (N x C). Without embeddings the condition is ignored.
template <typename Scalar>
Var<Scalar> appearance_features(Tape<Scalar>& tape, const ParamStore<Scalar>& store, const FieldConfig& cfg,
                                Var<Scalar> grid_features, int alpha) {
    if (cfg.embed_dim > 0) {
        Var<Scalar> e = tape.param(store, field_blocks::embedding(alpha));
        return mlp_forward(tape, store, field_blocks::kFuse, {grid_features, e}, Activation::Identity);
    }
    return mlp_forward(tape, store, field_blocks::kFuse, {grid_features}, Activation::Identity);
}

/// Mean of a_0 and a_1 (or a itself without embeddings).
template <typename Scalar>
Var<Scalar> mean_appearance(Tape<Scalar>& tape, const ParamStore<Scalar>& store, const FieldConfig& cfg,
                            Var<Scalar> grid_features) {
    if (cfg.embed_dim == 0) return appearance_features(tape, store, cfg, grid_features, 0);
    Var<Scalar> a0 = appearance_features(tape, store, cfg, grid_features, 0);
    Var<Scalar> a1 = appearance_features(tape, store, cfg, grid_features, 1);
    return scale(add(a0, a1), Scalar(0.5));
}

template <typename Scalar>
struct DecodedHeads {
    Var<Scalar> normal;    // N x 3, unit rows
    Var<Scalar> material;  // N x 4 in (0, 1): albedo rgb, roughness
    Var<Scalar> color;     // N x 3 in (0, 1)
};

/// n = normalize(D_n(a_bar)), beta = sigmoid(D_beta(a_bar)), c = sigmoid(D_c(a_alpha, PE(d))).
template <typename Scalar>
DecodedHeads<Scalar> decode_heads(Tape<Scalar>& tape, const ParamStore<Scalar>& store, const FieldConfig& cfg,
                                  Var<Scalar> mean_features, Var<Scalar> features, Var<Scalar> view_dirs,
                                  bool with_color = true) {
    DecodedHeads<Scalar> out;
    out.normal = normalize_rows(mlp_forward(tape, store, field_blocks::kNormal, {mean_features}, Activation::Identity),
                                Scalar(1e-6));
    out.material = mlp_forward(tape, store, field_blocks::kMaterial, {mean_features}, Activation::Sigmoid);
    if (with_color) {
        Var<Scalar> pe = positional_encode(view_dirs, cfg.view_freq);
        out.color = mlp_forward(tape, store, field_blocks::kColor, {features, pe}, Activation::Sigmoid);
    }
    return out;
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Ray marching and secondary visibility.
// ---------------------------------------------------------------------------

struct MarchConfig {
    int n_samples = 64;
    double near = 0.0;
    double far = 1e9;
    double half_extent = 1.0;
    bool jitter = true;
    std::uint64_t jitter_seed = 0;
};

/// Stratified samples for a batch of rays inside the scene box.
struct RaySampleBatch {
    MatX<double> positions;  // (N * S) x 3
    MatX<double> t_mid;      // N x S
    MatX<double> delta;      // N x S, zero for rays that miss the box
    MatX<double> t_far;      // N x 1 (exit distance, or near for misses)
    int n_samples = 0;
};

RaySampleBatch march_rays(const MatX<double>& origins, const MatX<double>& dirs, const MarchConfig& cfg,
                          std::uint64_t first_ray_index = 0);

/// Transmittance along t from x + eps t to the box exit, using `steps`
/// fixed-length segments. Not differentiated.
template <typename Scalar>
double trace_visibility(const ad::ParamStore<Scalar>& store, const FieldConfig& cfg, const Vec3& x, const Vec3& t,
                        int steps = 32, double eps = 0.08) {
    const Vec3 start = x + eps * t;
    double t0, t1;
    if (!intersect_box(start, t, cfg.half_extent, t0, t1)) return 1.0;
    const double step = (t1 - t0) / steps;
    double tau = 0;
    for (int k = 0; k < steps; ++k) tau += sample_sigma(store, cfg, start + (t0 + (k + 0.5) * step) * t) * step;
    return std::exp(-tau);
}

}  // namespace matxfer
