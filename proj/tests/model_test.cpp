#include "matxfer/autodiff/gradcheck.hpp"
#include "matxfer/core/rng.hpp"
#include "matxfer/render.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace matxfer;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.field.grid_res = 8;
    c.field.app_channels = 4;
    c.field.embed_dim = 6;
    c.field.fuse_hidden = 8;
    c.field.decoder_hidden = 8;
    c.light.hidden = 8;
    c.light.layers = 2;
    c.light.embed_dim = 6;
    c.light.l_max = 2;
    c.light.pos_freq = 2;
    c.transform_hidden = 8;
    c.visibility_steps = 8;
    return c;
}

template <typename S>
void randomize_density(Model<S>& m, double lo, double hi, std::uint64_t seed) {
    Rng rng(seed);
    auto& g = m.params.mutable_block(m.params.index_of(field_blocks::kDensity));
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = static_cast<S>(rng.uniform(lo, hi));
}

RayBatch random_rays(int n, std::uint64_t seed) {
    Rng rng(seed);
    RayBatch b;
    b.origins.resize(n, 3);
    b.dirs.resize(n, 3);
    for (int i = 0; i < n; ++i) {
        Vec3 o(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        o = o.normalized() * 2.5;
        Vec3 target(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
        b.origins.row(i) = o.transpose();
        b.dirs.row(i) = (target - o).normalized().transpose();
    }
    return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// Field
// ---------------------------------------------------------------------------

TEST(Field, SigmaIsZeroOutsideTheBox) {
    auto m = Model<double>::create(small_config(), 0);
    randomize_density(m, 5, 20, 1);
    EXPECT_EQ(sample_sigma(m.params, m.config.field, Vec3(1.2, 0, 0)), 0.0);
    EXPECT_EQ(sample_sigma(m.params, m.config.field, Vec3(0, -3, 0.5)), 0.0);
    EXPECT_GT(sample_sigma(m.params, m.config.field, Vec3(0.1, 0, 0)), 0.0);
}

TEST(Field, EmptyGridDecodesNearZero) {
    auto m = Model<double>::create(small_config(), 0);
    const double s = sample_sigma(m.params, m.config.field, Vec3(0.2, 0.1, -0.3));
    EXPECT_NEAR(s, 25.0 * std::log1p(std::exp(-10.0)), 1e-12);
    EXPECT_LT(s, 2e-3);
}

TEST(Field, WeightsAndFinalTransmittanceSumToOne) {
    auto m = Model<double>::create(small_config(), 0);
    randomize_density(m, -5, 15, 2);
    const RayBatch rays = random_rays(10000, 3);
    MarchConfig mc;
    mc.n_samples = 32;
    mc.jitter_seed = 4;
    const auto s = march_rays(rays.origins, rays.dirs, mc);
    ad::Tape<double> tape;
    auto sigma = ad::reshape(ad::sample_sigma(tape, m.params, m.config.field, s.positions), rays.size(), 32);
    const auto wt = ad::volume_weights(sigma, s.delta).value();
    EXPECT_LE((wt.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-5);
    EXPECT_GE(wt.minCoeff(), 0.0);
}

TEST(Field, OpaqueFirstSampleTakesAllWeight) {
    ad::Tape<double> tape;
    MatX<double> sigma(1, 4), delta = MatX<double>::Constant(1, 4, 0.1);
    sigma << 1e4, 1, 1, 1;
    const auto w = ad::volume_weights(tape.constant(sigma), delta).value();
    EXPECT_NEAR(w(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(w.rightCols(4).sum(), 0.0, 1e-12);
}

TEST(Field, VolumeWeightsGradcheck) {
    ad::ParamStore<double> p;
    Rng rng(5);
    MatX<double> s(3, 6), d(3, 6), g(3, 7);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        s.data()[i] = rng.uniform(0, 4);
        d.data()[i] = rng.uniform(0.05, 0.3);
    }
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform(-1, 1);
    p.add("s", s);
    auto loss = [&](ad::Tape<double>& t, const ad::ParamStore<double>& st) {
        return ad::sum(ad::mul(ad::volume_weights(t.param(st, "s"), d), t.constant(g)));
    };
    EXPECT_LT(ad::finite_diff_check(loss, p).max_rel_error, 1e-6);
}

TEST(Field, VisibilityEmptySolidAndMonotone) {
    auto m = Model<double>::create(small_config(), 0);
    auto& g = m.params.mutable_block(m.params.index_of(field_blocks::kDensity));
    g.setConstant(-40);
    const Vec3 x(0, 0, 0), t = Vec3(1, 1, 0).normalized();
    EXPECT_NEAR(trace_visibility(m.params, m.config.field, x, t, 16), 1.0, 1e-12);
    g.setConstant(30);
    EXPECT_LT(trace_visibility(m.params, m.config.field, x, t, 16), 1e-6);

    randomize_density(m, -5, 8, 6);
    Rng rng(7);
    double prev = trace_visibility(m.params, m.config.field, x, t, 16);
    for (int k = 0; k < 20; ++k) {
        g(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(g.size()))), 0) += rng.uniform(0, 5);
        const double v = trace_visibility(m.params, m.config.field, x, t, 16);
        EXPECT_LE(v, prev + 1e-15);
        prev = v;
    }
}

TEST(Field, HeadsRangesAndConditionDependence) {
    auto m = Model<double>::create(small_config(), 3);
    Rng rng(8);
    MatX<double> feats(64, m.config.field.app_channels), dirs(64, 3);
    for (Eigen::Index i = 0; i < feats.size(); ++i) feats.data()[i] = rng.uniform(-20, 20);
    for (int i = 0; i < 64; ++i) dirs.row(i) = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.5).normalized().transpose();
    ad::Tape<double> tape;
    auto f = tape.constant(feats);
    auto mean = ad::mean_appearance(tape, m.params, m.config.field, f);
    auto h0 = ad::decode_heads(tape, m.params, m.config.field, mean,
                               ad::appearance_features(tape, m.params, m.config.field, f, 0), tape.constant(dirs));
    auto h1 = ad::decode_heads(tape, m.params, m.config.field, mean,
                               ad::appearance_features(tape, m.params, m.config.field, f, 1), tape.constant(dirs));
    const auto& b = h0.material.value();
    EXPECT_GT(b.minCoeff(), 0.0);
    EXPECT_LT(b.maxCoeff(), 1.0);
    EXPECT_LE((h0.normal.value().rowwise().norm().array() - 1).abs().maxCoeff(), 1e-12);
    EXPECT_EQ(h0.material.value(), h1.material.value());
    EXPECT_GT((h0.color.value() - h1.color.value()).cwiseAbs().maxCoeff(), 1e-6);
}

// ---------------------------------------------------------------------------
// Light
// ---------------------------------------------------------------------------

TEST(Light, RadianceIsNonNegative) {
    auto m = Model<double>::create(small_config(), 4);
    Rng rng(9);
    MatX<double> n(200, 3), x(200, 3), r(200, 1);
    for (int i = 0; i < 200; ++i) {
        n.row(i) = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized().transpose();
        x.row(i) = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).transpose();
        r(i, 0) = rng.uniform();
    }
    MatX<double> v = MatX<double>::Constant(200, 1, 0.5);
    ad::Tape<double> t;
    EXPECT_GE(ad::light_diffuse(t, m.params, m.config.light, t.constant(n), 0).value().minCoeff(), 0.0);
    EXPECT_GE(ad::light_specular(t, m.params, m.config.light, t.constant(x), t.constant(n), t.constant(r), v, 1)
                  .value()
                  .minCoeff(),
              0.0);
}

TEST(Light, ReduceGradScalesDirectionGradientByHundred) {
    auto m = Model<double>::create(small_config(), 4);
    MatX<double> n(3, 3);
    n << 0, 0, 1, 0.6, 0, 0.8, 0, -0.6, 0.8;
    auto grad_wrt_normals = [&](double factor) {
        LightConfig lc = m.config.light;
        lc.reduce_grad = factor;
        ad::ParamStore<double> p = m.params;
        p.add("n", n);
        ad::Tape<double> t;
        auto l = ad::sum(ad::light_diffuse(t, p, lc, t.param(p, "n"), 0));
        const auto g = t.backward(l);
        return g.blocks[p.index_of("n")];
    };
    const MatX<double> full = grad_wrt_normals(1.0), reduced = grad_wrt_normals(1e-2);
    ASSERT_GT(full.cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((reduced * 100.0 - full).cwiseAbs().maxCoeff(), 1e-12 * full.cwiseAbs().maxCoeff() + 1e-15);
}

TEST(Light, VisibilityEndpointsSelectOneNetwork) {
    auto m = Model<double>::create(small_config(), 5);
    MatX<double> x(2, 3), t(2, 3), r(2, 1);
    x << 0.1, 0.2, 0.3, -0.4, 0.0, 0.2;
    t << 0, 0, 1, 1, 0, 0;
    r << 0.3, 0.7;
    ad::Tape<double> tape;
    auto ones = MatX<double>::Ones(2, 1).eval();
    auto zeros = MatX<double>::Zero(2, 1).eval();
    const auto lv1 = ad::light_specular(tape, m.params, m.config.light, tape.constant(x), tape.constant(t),
                                        tape.constant(r), ones, 0).value();
    const auto lv0 = ad::light_specular(tape, m.params, m.config.light, tape.constant(x), tape.constant(t),
                                        tape.constant(r), zeros, 0).value();
    auto ide = ad::integrated_dir_encode(tape.constant(t), tape.constant(r), m.config.light.l_max);
    auto direct = ad::mlp_forward(tape, m.params, light_blocks::kDirect,
                                  {ide, tape.param(m.params, light_blocks::direct_embedding(0))},
                                  ad::Activation::Softplus).value();
    auto indirect = ad::mlp_forward(tape, m.params, light_blocks::kIndirect,
                                    {ide, ad::positional_encode(tape.constant(x), m.config.light.pos_freq),
                                     tape.param(m.params, light_blocks::indirect_embedding(0))},
                                    ad::Activation::Softplus).value();
    EXPECT_LE((lv1 - direct).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((lv0 - indirect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Light, ConditionsDoNotShareEmbeddingGradients) {
    auto m = Model<double>::create(small_config(), 6);
    MatX<double> n(2, 3);
    n << 0, 0, 1, 0, 1, 0;
    ad::Tape<double> t;
    auto l = ad::sum(ad::light_diffuse(t, m.params, m.config.light, t.constant(n), 0));
    const auto g = t.backward(l);
    EXPECT_GT(g.blocks[m.params.index_of(light_blocks::direct_embedding(0))].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.blocks[m.params.index_of(light_blocks::direct_embedding(1))].cwiseAbs().maxCoeff(), 0.0);
}

// ---------------------------------------------------------------------------
// Transform
// ---------------------------------------------------------------------------

TEST(Transform, OutputInUnitCubeAndJacobianMatchesFiniteDifferences) {
    ad::ParamStore<double> p;
    init_transform(p, 3, 16);
    Rng rng(10);
    MatX<double> beta(50, 4);
    for (Eigen::Index i = 0; i < beta.size(); ++i) beta.data()[i] = rng.uniform();
    const auto out = transform_eval_batch(p, beta);
    EXPECT_GT(out.minCoeff(), 0.0);
    EXPECT_LT(out.maxCoeff(), 1.0);

    p.add("beta", beta.topRows(4));
    MatX<double> w(4, 4);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1, 1);
    auto loss = [&](ad::Tape<double>& t, const ad::ParamStore<double>& st) {
        return ad::sum(ad::mul(ad::transform_eval(t, st, t.param(st, "beta")), t.constant(w)));
    };
    EXPECT_LT(ad::finite_diff_check(loss, p).max_rel_error, 1e-6);
}

TEST(Transform, SelectAndInterpolateEndpoints) {
    ad::ParamStore<double> p;
    init_transform(p, 4, 16);
    MatX<double> beta(2, 4);
    beta << 0.2, 0.4, 0.6, 0.1, 0.9, 0.5, 0.3, 0.7;
    ad::Tape<double> t;
    auto b = t.constant(beta);
    EXPECT_EQ(ad::interpolate_material(t, p, b, 0.0).value(), beta);
    EXPECT_EQ(ad::interpolate_material(t, p, b, 1.0).value(), ad::transform_eval(t, p, b).value());
    const auto half = ad::interpolate_material(t, p, b, 0.5).value();
    EXPECT_LE((half - 0.5 * (beta + ad::transform_eval(t, p, b).value())).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_THROW(ad::select_material(t, p, b, 2), ContractError);
    EXPECT_THROW(ad::interpolate_material(t, p, b, 1.5), ContractError);
}

// ---------------------------------------------------------------------------
// Render
// ---------------------------------------------------------------------------

namespace {

ad::ParamStore<float> without_transform(const ad::ParamStore<float>& p) {
    ad::ParamStore<float> out;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p.name(i).rfind("F.", 0) != 0) out.add(p.name(i), p.block(i));
    return out;
}

}  // namespace

TEST(Render, AlphaZeroIsBitIdenticalWithoutTransform) {
    auto m = Model<float>::create(small_config(), 7);
    randomize_density(m, -2, 14, 11);
    Model<float> bare = m;
    bare.params = without_transform(m.params);
    bare.config.transform = false;
    const RayBatch rays = random_rays(64, 12);
    RenderOptions o;
    o.march.n_samples = 16;
    ad::Tape<float> t1, t2;
    const auto a = ad::render_rays(t1, m, rays, o);
    const auto b = ad::render_rays(t2, bare, rays, o);
    EXPECT_EQ(a.pbr.value(), b.pbr.value());
    EXPECT_EQ(a.rf.value(), b.rf.value());
    EXPECT_EQ(a.material.value(), b.material.value());

    o.material_alpha = 1;
    ad::Tape<float> t3;
    EXPECT_THROW(ad::render_rays(t3, bare, rays, o), ContractError);
}

TEST(Render, GeometryBuffersDoNotDependOnAlpha) {
    auto m = Model<float>::create(small_config(), 8);
    randomize_density(m, -2, 14, 13);
    const RayBatch rays = random_rays(64, 14);
    RenderOptions o;
    o.march.n_samples = 16;
    ad::Tape<float> t0, t1;
    const auto a = ad::render_rays(t0, m, rays, o);
    o.material_alpha = 1;
    const auto b = ad::render_rays(t1, m, rays, o);
    EXPECT_EQ(a.depth.value(), b.depth.value());
    EXPECT_EQ(a.opacity.value(), b.opacity.value());
    EXPECT_EQ(a.normal.value(), b.normal.value());
    EXPECT_EQ(a.base_material.value(), b.base_material.value());
    EXPECT_NE(a.material.value(), b.material.value());
}

TEST(Render, TransformGradientIsExactlyZeroAtAlphaZero) {
    auto m = Model<double>::create(small_config(), 9);
    randomize_density(m, -2, 14, 15);
    const RayBatch rays = random_rays(32, 16);
    RenderOptions o;
    o.march.n_samples = 16;
    ad::Tape<double> t;
    const auto r = ad::render_rays(t, m, rays, o);
    const auto g = t.backward(ad::add(ad::sum(r.pbr), ad::sum(r.rf)));
    for (std::size_t i = 0; i < m.params.size(); ++i)
        if (m.params.name(i).rfind("F.", 0) == 0) {
            EXPECT_EQ(g.blocks[i].cwiseAbs().maxCoeff(), 0.0) << m.params.name(i);
        }

    ad::Tape<double> t2;
    o.material_alpha = 1;
    const auto r2 = ad::render_rays(t2, m, rays, o);
    const auto g2 = t2.backward(ad::sum(r2.pbr));
    EXPECT_GT(g2.blocks[m.params.index_of("F.w0")].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Render, LobeLightAblationRendersFinite) {
    ModelConfig c = small_config();
    c.light_kind = LightKind::Lobes;
    c.lobes.lobes = 4;
    c.lobes.quadrature = 16;
    auto m = Model<double>::create(c, 10);
    randomize_density(m, -2, 14, 17);
    const RayBatch rays = random_rays(8, 18);
    RenderOptions o;
    o.march.n_samples = 8;
    ad::Tape<double> t;
    const auto r = ad::render_rays(t, m, rays, o);
    EXPECT_TRUE(r.pbr.value().allFinite());
    EXPECT_GE(r.pbr.value().minCoeff(), 0.0);
}
