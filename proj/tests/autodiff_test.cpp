#include <cstring>
#include "matxfer/autodiff/adam.hpp"
#include "matxfer/autodiff/gradcheck.hpp"
#include "matxfer/autodiff/mlp.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace matxfer;
using namespace matxfer::ad;

namespace {

MatX<double> random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    Rng rng(seed);
    MatX<double> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
    return m;
}

}  // namespace

TEST(MlpInit, DeterministicForFixedSeed) {
    ParamStore<float> a, b;
    mlp_init(a, "net", {4, 256, 4}, 7);
    mlp_init(b, "net", {4, 256, 4}, 7);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a.block(i).size(), b.block(i).size());
        EXPECT_EQ(0, std::memcmp(a.block(i).data(), b.block(i).data(), sizeof(float) * a.block(i).size()));
    }
}

TEST(MlpInit, RejectsSingleLayer) {
    ParamStore<double> s;
    EXPECT_THROW(mlp_init(s, "net", {4}, 1), ConfigError);
}

TEST(MlpInit, ParameterCount) {
    ParamStore<double> s;
    mlp_init(s, "net", {2, 8, 1}, 3);
    EXPECT_EQ(s.parameter_count(), 33u);
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s.name(i).find(".b") != std::string::npos) EXPECT_TRUE(s.block(i).isZero());
}

TEST(MlpForward, ZeroWeightsGiveZero) {
    ParamStore<double> s;
    mlp_init(s, "net", {3, 5, 2}, 1);
    for (std::size_t i = 0; i < s.size(); ++i) s.mutable_block(i).setZero();
    Tape<double> t;
    auto y = mlp_forward(t, s, "net", {t.constant(random_matrix(4, 3, 2))}, Activation::Identity);
    EXPECT_TRUE(y.value().isZero());
}

TEST(MlpForward, IdentityLayer) {
    ParamStore<double> s;
    mlp_init(s, "lin", {3, 3}, 1);
    s.set("lin.w0", MatX<double>::Identity(3, 3));
    Tape<double> t;
    MatX<double> x = random_matrix(5, 3, 9);
    auto y = mlp_forward(t, s, "lin", {t.constant(x)}, Activation::Identity);
    EXPECT_EQ(y.value(), x);
}

TEST(MlpForward, ShapeMismatchThrows) {
    ParamStore<double> s;
    mlp_init(s, "net", {3, 4, 1}, 1);
    Tape<double> t;
    EXPECT_THROW(mlp_forward(t, s, "net", {t.constant(random_matrix(2, 2, 1))}, Activation::Identity), ShapeError);
}

TEST(MlpForward, ReproducibleAcrossRuns) {
    auto run = [] {
        ParamStore<float> s;
        mlp_init(s, "net", {3, 16, 16, 2}, 11);
        Tape<float> t;
        MatX<float> x = random_matrix(7, 3, 5).cast<float>();
        return mlp_forward(t, s, "net", {t.constant(x)}, Activation::Softplus).value();
    };
    EXPECT_EQ(run(), run());
}

TEST(Backward, SumOfSquares) {
    ParamStore<double> s;
    s.add("w", random_matrix(3, 4, 4));
    Tape<double> t;
    auto g = t.backward(sum(square(t.param(s, "w"))));
    EXPECT_TRUE(g["w"].isApprox(2 * s["w"]));
}

TEST(Backward, DetachedBlockGetsZero) {
    ParamStore<double> s;
    s.add("a", random_matrix(2, 2, 1));
    s.add("b", random_matrix(2, 2, 2));
    Tape<double> t;
    t.param(s, "b");
    auto g = t.backward(sum(t.param(s, "a")));
    EXPECT_TRUE(g["b"].isZero());
    EXPECT_TRUE(g["a"].isOnes());
}

TEST(Backward, NonScalarLossRejected) {
    ParamStore<double> s;
    s.add("a", random_matrix(2, 2, 1));
    Tape<double> t;
    EXPECT_THROW(t.backward(t.param(s, "a")), ContractError);
}

TEST(Backward, TwoLayerNetMatchesFiniteDifferences) {
    ParamStore<double> s;
    mlp_init(s, "net", {5, 16, 3}, 21);
    const MatX<double> x = random_matrix(6, 5, 22);
    LossFn loss = [&](Tape<double>& t, const ParamStore<double>& p) {
        return mean(square(mlp_forward(t, p, "net", {t.constant(x)}, Activation::Sigmoid)));
    };
    GradCheckOptions opt;
    opt.max_coords_per_block = 1000;
    auto r = finite_diff_check(loss, s, opt);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst.block << "[" << r.worst.index << "]";
}

TEST(Ops, CompositeMatchesFiniteDifferences) {
    ParamStore<double> s;
    s.add("a", random_matrix(4, 3, 31));
    s.add("b", random_matrix(1, 3, 32));
    s.add("c", (random_matrix(4, 1, 33).array() + 2.0).matrix());
    LossFn loss = [](Tape<double>& t, const ParamStore<double>& p) {
        auto a = t.param(p, "a"), b = t.param(p, "b"), c = t.param(p, "c");
        auto x = div(mul(add(a, b), sub(a, b)), c);
        auto y = normalize_rows(add(sigmoid(x), mul(softplus(a, -0.5), exp(scale(b, 0.3)))));
        auto joined = concat_cols({y, softplus(a, -0.5)});
        auto z = dot_rows(slice_cols(joined, 1, 3), powi(a, 3));
        auto rep = weighted_sum(t.constant(MatX<double>::Constant(4, 2, 0.5)), repeat_rows(c, 2));
        auto tiled = mean(tile_rows(b, 3));
        auto r = reshape(matmul(a, t.constant(random_matrix(3, 2, 34))), 2, 4);
        return add(add(sum(sqrt(add_scalar(square(z), 1.0))), add(sum(rep), tiled)), mean(square(r)));
    };
    GradCheckOptions opt;
    opt.max_coords_per_block = 100;
    auto r = finite_diff_check(loss, s, opt);
    EXPECT_LT(r.max_rel_error, 1e-6) << r.worst.block << "[" << r.worst.index << "]";
}

TEST(GradScale, ForwardIdentityBackwardScaled) {
    for (double factor : {1.0, 0.0, 1e-2}) {
        ParamStore<double> s;
        s.add("x", MatX<double>::Constant(1, 1, 3.0));
        Tape<double> t;
        auto x = t.param(s, "x");
        auto xs = grad_scale(x, factor);
        EXPECT_EQ(xs.value(), x.value());
        auto g = t.backward(sum(square(xs)));
        EXPECT_NEAR(g["x"](0, 0), 6.0 * factor, 1e-15);
    }
}

TEST(GradScale, RejectsNegativeFactor) {
    Tape<double> t;
    EXPECT_THROW(grad_scale(t.constant(MatX<double>::Ones(1, 1)), -1.0), ContractError);
}

TEST(Adam, ZeroGradientLeavesParams) {
    ParamStore<double> s;
    s.add("w", random_matrix(3, 3, 1));
    const MatX<double> before = s["w"];
    auto state = AdamState<double>::zeros_like(s);
    Gradients<double> g{{"w"}, {MatX<double>::Zero(3, 3)}};
    adam_step(s, g, state, AdamHyper{});
    EXPECT_EQ(s["w"], before);
    EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
    ParamStore<double> s;
    s.add("w", MatX<double>::Zero(2, 2));
    auto state = AdamState<double>::zeros_like(s);
    Gradients<double> g{{"w"}, {MatX<double>::Constant(2, 2, 0.37)}};
    AdamHyper h;
    h.lr = 1e-2;
    adam_step(s, g, state, h);
    EXPECT_NEAR(s["w"](0, 0), -1e-2, 1e-8);
}

TEST(Adam, NonFiniteGradientNamesBlock) {
    ParamStore<double> s;
    s.add("good", MatX<double>::Zero(1, 1));
    s.add("bad", MatX<double>::Zero(1, 1));
    auto state = AdamState<double>::zeros_like(s);
    Gradients<double> g{{"good", "bad"}, {MatX<double>::Zero(1, 1), MatX<double>::Constant(1, 1, NAN)}};
    try {
        adam_step(s, g, state, AdamHyper{});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("'bad'"), std::string::npos);
    }
    EXPECT_EQ(state.step, 0u);
}

TEST(Adam, QuadraticBowlConverges) {
    ParamStore<double> s;
    s.add("w", random_matrix(1, 8, 5) * 0.1);
    const MatX<double> center = random_matrix(1, 8, 6) * 0.1;
    auto state = AdamState<double>::zeros_like(s);
    AdamHyper h;
    h.lr = 1e-2;
    double loss = 0;
    std::vector<double> history;
    for (int it = 0; it < 500; ++it) {
        Tape<double> t;
        auto d = sub(t.param(s, "w"), t.constant(center));
        auto l = sum(square(d));
        loss = l.value()(0, 0);
        history.push_back(loss);
        auto g = t.backward(l);
        adam_step(s, g, state, h);
        // Lower the rate late on so Adam settles inside the bowl.
        if (it == 300) h.lr = 1e-3;
    }
    EXPECT_LT(loss, 1e-6);
    // Monotone decrease during the descent phase.
    for (int i = 1; i < 10; ++i) EXPECT_LT(history[i], history[i - 1]);
}

TEST(FiniteDiff, LinearFunctionIsExact) {
    ParamStore<double> s;
    s.add("w", random_matrix(1, 5, 3));
    const MatX<double> k = random_matrix(1, 5, 4);
    LossFn f = [&](Tape<double>& t, const ParamStore<double>& p) { return sum(mul(t.param(p, "w"), t.constant(k))); };
    EXPECT_LT(finite_diff_check(f, s).max_rel_error, 1e-9);
}

TEST(FiniteDiff, ExpAtZero) {
    ParamStore<double> s;
    s.add("w", MatX<double>::Zero(1, 1));
    LossFn f = [](Tape<double>& t, const ParamStore<double>& p) { return sum(exp(t.param(p, "w"))); };
    auto r = finite_diff_check(f, s);
    EXPECT_NEAR(r.worst.analytic, 1.0, 1e-15);
    EXPECT_NEAR(r.worst.numeric, 1.0, 1e-8);
}

// relu kink 3e-6 to the right of w: the eps = 1e-5 central difference straddles
// it, the 1e-6 one does not.
TEST(FiniteDiff, StepShrinksAcrossNearbyKink) {
    ParamStore<double> s;
    s.add("w", MatX<double>::Constant(1, 1, 0.5));
    LossFn f = [](Tape<double>& t, const ParamStore<double>& p) {
        return sum(relu(add_scalar(t.param(p, "w"), -0.5 - 3e-6)));
    };
    GradCheckOptions opt;
    opt.max_refine = 0;
    EXPECT_GT(finite_diff_check(f, s, opt).max_rel_error, 0.1);
    const auto r = finite_diff_check(f, s);
    EXPECT_LT(r.max_rel_error, 1e-9);
    EXPECT_EQ(r.refined, 1u);
    EXPECT_DOUBLE_EQ(r.worst.step, 1e-6);
}

TEST(FiniteDiff, WrongGradientStillCaught) {
    ParamStore<double> s;
    s.add("w", MatX<double>::Constant(1, 1, 0.7));
    // d/dw of w * detach(w) is reported as w; the true derivative is 2w.
    LossFn f = [](Tape<double>& t, const ParamStore<double>& p) {
        Var<double> w = t.param(p, "w");
        return sum(mul(w, detach(w)));
    };
    const auto r = finite_diff_check(f, s);
    EXPECT_NEAR(r.max_rel_error, 0.5, 1e-6);
    EXPECT_EQ(r.refined, 0u);
}

TEST(Determinism, PairwiseSumIsOrderStable) {
    MatX<float> v(1, 1000);
    Rng rng(3);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<float>(rng.uniform());
    Tape<float> t1, t2;
    EXPECT_EQ(sum(t1.constant(v)).value()(0, 0), sum(t2.constant(v)).value()(0, 0));
}
