#pragma once

#include "matxfer/brdf.hpp"
#include "matxfer/field.hpp"
#include "matxfer/light.hpp"
#include "matxfer/transform.hpp"

#include <cstdint>
#include <string>

namespace matxfer {

enum class LightKind { Neural, Lobes };

struct ModelConfig {
    FieldConfig field;
    LightConfig light;
    LobeLightConfig lobes;
    LightKind light_kind = LightKind::Neural;
    bool embeddings = true;  // two-condition model; single-scene models have none
    bool transform = true;   // carries the material transform F
    int transform_hidden = 256;
    int visibility_steps = 32;
    double visibility_eps = 0.08;

    /// Zeroes embedding widths when embeddings are disabled.
    ModelConfig resolved() const {
        ModelConfig c = *this;
        if (!c.embeddings) {
            c.field.embed_dim = 0;
            c.light.embed_dim = 0;
        }
        return c;
    }
};

template <typename Scalar>
struct Model {
    ModelConfig config;
    ad::ParamStore<Scalar> params;
    const MspecLut* lut = &default_mspec_lut();

    static Model create(const ModelConfig& cfg, std::uint64_t seed) {
        Model m;
        m.config = cfg.resolved();
        init_field(m.params, m.config.field, seed);
        if (m.config.light_kind == LightKind::Neural) init_light(m.params, m.config.light, seed);
        else init_lobe_light(m.params, m.config.lobes);
        if (m.config.transform) init_transform(m.params, seed, m.config.transform_hidden);
        return m;
    }
};

struct RayBatch {
    MatX<double> origins;  // N x 3
    MatX<double> dirs;     // N x 3, unit
    Eigen::Index size() const { return origins.rows(); }
};

struct RenderOptions {
    MarchConfig march;
    int condition = 0;            // which embeddings to use (joint models)
    double material_alpha = 0.0;  // 0: beta_0, 1: F(beta_0), in between: interpolated
    bool transform_identity = false;  // treat F as the identity map
    bool want_rf = true;
    bool want_pbr = true;
    bool want_normal_grad = false;
    const MatX<double>* visibility = nullptr;  // optional frozen v_t (N x 1)
    std::uint64_t first_ray_index = 0;
};

template <typename Scalar>
struct RenderOutput {
    ad::Var<Scalar> rf;           // N x 3
    ad::Var<Scalar> pbr;          // N x 3
    ad::Var<Scalar> opacity;      // N x 1, sum of weights
    ad::Var<Scalar> depth;        // N x 1
    ad::Var<Scalar> normal;       // N x 3, decoded
    ad::Var<Scalar> normal_grad;  // N x 3, from the density gradient
    ad::Var<Scalar> base_material;  // N x 4, beta_0
    ad::Var<Scalar> material;       // N x 4 after selection / interpolation
    ad::Var<Scalar> l_diff;
    ad::Var<Scalar> l_spec;
    ad::Var<Scalar> mspec;
    MatX<double> visibility;  // N x 1
    MatX<double> surface;     // N x 3 expected surface points
};

namespace ad {

/// Renders a batch of rays. Decoders read per-ray features: grid features are
/// accumulated with the volume-rendering weights and normalized by opacity
/// before the fusion network and heads; the colors are then composited over a
/// black background by multiplying with the opacity.
template <typename Scalar>
RenderOutput<Scalar> render_rays(Tape<Scalar>& tape, const Model<Scalar>& model, const RayBatch& rays,
                                 const RenderOptions& opt) {
    const ModelConfig& cfg = model.config;
    const FieldConfig& fc = cfg.field;
    const ParamStore<Scalar>& P = model.params;
    const Eigen::Index n = rays.size();
    MarchConfig mc = opt.march;
    mc.half_extent = fc.half_extent;
    const RaySampleBatch samples = march_rays(rays.origins, rays.dirs, mc, opt.first_ray_index);
    const int s = samples.n_samples;

    RenderOutput<Scalar> out;
    Var<Scalar> sigma = reshape(sample_sigma(tape, P, fc, samples.positions), n, s);
    Var<Scalar> wt = volume_weights(sigma, samples.delta.template cast<Scalar>().eval());
    Var<Scalar> w = slice_cols(wt, 0, s);
    Var<Scalar> t_end = slice_cols(wt, s, 1);
    out.opacity = row_sum(w);

    Var<Scalar> tmid = tape.constant(samples.t_mid.template cast<Scalar>().eval());
    out.depth = add(row_sum(mul(w, tmid)), mul(t_end, tape.constant(samples.t_far.template cast<Scalar>().eval())));
    Var<Scalar> origins = tape.constant(rays.origins.template cast<Scalar>().eval());
    Var<Scalar> dirs = tape.constant(rays.dirs.template cast<Scalar>().eval());
    Var<Scalar> surface = add(origins, mul(dirs, out.depth));
    out.surface = surface.value().template cast<double>();

    Var<Scalar> grid_feat = grid_sample(tape.param(P, field_blocks::kAppearance), samples.positions, fc.grid_res,
                                        fc.half_extent);
    Var<Scalar> feat = div(weighted_sum(w, grid_feat), add_scalar(out.opacity, Scalar(1e-4)));

    Var<Scalar> a_bar = mean_appearance(tape, P, fc, feat);
    Var<Scalar> a_alpha = fc.embed_dim > 0 ? appearance_features(tape, P, fc, feat, opt.condition) : a_bar;
    DecodedHeads<Scalar> heads = decode_heads(tape, P, fc, a_bar, a_alpha, dirs, opt.want_rf);
    out.normal = heads.normal;
    out.base_material = heads.material;
    if (opt.want_rf) out.rf = mul(heads.color, out.opacity);

    if (opt.want_normal_grad) {
        Var<Scalar> g = grid_spatial_grad(tape.param(P, field_blocks::kDensity), samples.positions, fc.grid_res,
                                          fc.half_extent);
        Var<Scalar> per_sample = normalize_rows(neg(g), Scalar(1e-6));
        out.normal_grad = normalize_rows(weighted_sum(w, per_sample), Scalar(1e-6));
    }

    if (opt.material_alpha != 0 && !has_transform(P) && !opt.transform_identity)
        throw ContractError("rendering a transformed material requires an attached transform");
    if (opt.transform_identity) out.material = out.base_material;
    else if (opt.material_alpha == 0 || opt.material_alpha == 1)
        out.material = select_material(tape, P, out.base_material, static_cast<int>(opt.material_alpha));
    else out.material = interpolate_material(tape, P, out.base_material, opt.material_alpha);

    if (!opt.want_pbr) return out;
    Var<Scalar> albedo = slice_cols(out.material, 0, 3);
    Var<Scalar> rough = slice_cols(out.material, 3, 1);
    Var<Scalar> view = neg(dirs);
    Var<Scalar> shade;
    if (cfg.light_kind == LightKind::Neural) {
        Var<Scalar> n_dot_v = dot_rows(out.normal, view);
        Var<Scalar> reflected = sub(mul(out.normal, scale(n_dot_v, Scalar(2))), view);
        reflected = normalize_rows(reflected, Scalar(1e-6));
        if (opt.visibility) {
            if (opt.visibility->rows() != n) throw ShapeError("visibility override row mismatch");
            out.visibility = *opt.visibility;
        } else {
            out.visibility.resize(n, 1);
            const auto& tv = reflected.value();
            for (Eigen::Index r = 0; r < n; ++r)
                out.visibility(r, 0) = trace_visibility(P, fc, out.surface.row(r).transpose(),
                                                        tv.row(r).transpose().template cast<double>(),
                                                        cfg.visibility_steps, cfg.visibility_eps);
        }
        out.l_diff = light_diffuse(tape, P, cfg.light, out.normal, opt.condition);
        out.l_spec = light_specular(tape, P, cfg.light, surface, reflected, rough,
                                    out.visibility.template cast<Scalar>().eval(), opt.condition);
        out.mspec = mspec_lookup(*model.lut, clamp_min(n_dot_v, static_cast<Scalar>(kMinCosine)), rough);
        shade = add(mul(albedo, out.l_diff), mul(out.mspec, out.l_spec));
    } else {
        out.visibility = MatX<double>::Ones(n, 1);
        shade = shade_lobe_light(tape, P, cfg.lobes, out.normal, albedo, rough, (-rays.dirs).eval(), opt.condition);
    }
    out.pbr = mul(shade, out.opacity);
    return out;
}

}  // namespace ad

}  // namespace matxfer
