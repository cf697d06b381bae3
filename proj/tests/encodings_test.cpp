#include "matxfer/autodiff/gradcheck.hpp"
#include "matxfer/encodings.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace matxfer;

namespace {

Vec3 random_unit(Rng& rng) {
    Vec3 d;
    do d = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    while (d.norm() < 0.1 || d.norm() > 1);
    return d.normalized();
}

// Textbook real spherical harmonics through l = 2.
std::vector<double> closed_form_sh(const Vec3& d) {
    const double x = d.x(), y = d.y(), z = d.z();
    const double c0 = 0.5 * std::sqrt(1 / kPi);
    const double c1 = std::sqrt(3 / (4 * kPi));
    const double c2 = 0.5 * std::sqrt(15 / kPi);
    const double c20 = 0.25 * std::sqrt(5 / kPi);
    return {c0, c1 * y, c1 * z, c1 * x, c2 * x * y, c2 * y * z, c20 * (3 * z * z - 1), c2 * x * z,
            0.5 * c2 * (x * x - y * y)};
}

}  // namespace

TEST(PositionalEncode, ZeroInput) {
    auto y = positional_encode({0.0, 0.0}, 3);
    ASSERT_EQ(y.size(), 14u);
    for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(y[2 + 4 * k], 0.0);
        EXPECT_EQ(y[3 + 4 * k], 0.0);
        EXPECT_EQ(y[4 + 4 * k], 1.0);
        EXPECT_EQ(y[5 + 4 * k], 1.0);
    }
}

TEST(PositionalEncode, ZeroFrequenciesIsIdentity) {
    EXPECT_EQ(positional_encode({0.3, -0.7, 2.0}, 0), (std::vector<double>{0.3, -0.7, 2.0}));
}

TEST(PositionalEncode, HalfAtOneFrequency) {
    auto y = positional_encode({0.5}, 1);
    ASSERT_EQ(y.size(), 3u);
    EXPECT_DOUBLE_EQ(y[0], 0.5);
    EXPECT_NEAR(y[1], 1.0, 1e-15);
    EXPECT_NEAR(y[2], 0.0, 1e-15);
}

TEST(PositionalEncode, WidthFormulaAndTapeAgreement) {
    Rng rng(2);
    for (int nf = 0; nf < 6; ++nf) {
        MatX<double> x(3, 2);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
        ad::Tape<double> t;
        auto y = ad::positional_encode(t.constant(x), nf).value();
        ASSERT_EQ(y.cols(), positional_width(2, nf));
        for (int r = 0; r < 3; ++r) {
            auto ref = positional_encode({x(r, 0), x(r, 1)}, nf);
            for (int c = 0; c < y.cols(); ++c) EXPECT_NEAR(y(r, c), ref[c], 1e-14);
        }
    }
}

TEST(SphericalHarmonics, MatchesClosedFormThroughDegreeTwo) {
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        const Vec3 d = random_unit(rng);
        auto sh = spherical_harmonics(d, 2);
        auto ref = closed_form_sh(d);
        for (int k = 0; k < 9; ++k) EXPECT_NEAR(sh[k], ref[k], 1e-12) << "k=" << k;
    }
}

TEST(SphericalHarmonics, OrthonormalUnderQuadrature) {
    // Gauss-free check: dense midpoint rule in (cos theta, phi).
    const int l_max = 4, n_t = 1000, n_p = 400;
    const int k = sh_count(l_max);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
    for (int a = 0; a < n_t; ++a) {
        const double z = -1 + (a + 0.5) * 2.0 / n_t;
        const double s = std::sqrt(1 - z * z);
        for (int b = 0; b < n_p; ++b) {
            const double phi = (b + 0.5) * 2 * kPi / n_p;
            auto y = spherical_harmonics(Vec3(s * std::cos(phi), s * std::sin(phi), z), l_max);
            Eigen::Map<Eigen::VectorXd> v(y.data(), k);
            gram += v * v.transpose() * (2.0 / n_t) * (2 * kPi / n_p);
        }
    }
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff(), 5e-5);
}

TEST(Ide, ZeroRoughnessIsPlainShUpToFloor) {
    // r^2 is floored at 1e-4, so the l = 4 band keeps a factor exp(-1e-3).
    Rng rng(5);
    const Vec3 d = random_unit(rng);
    auto ide = integrated_dir_encode(d, 0.0, 4);
    auto sh = spherical_harmonics(d, 4);
    for (std::size_t k = 0; k < sh.size(); ++k) EXPECT_NEAR(ide[k], sh[k], 1.001e-3 * std::abs(sh[k]));
    EXPECT_EQ(ide[0], sh[0]);
}

TEST(Ide, UnitRoughnessAttenuation) {
    const Vec3 d = Vec3(0.3, -0.4, 0.5).normalized();
    auto plain = spherical_harmonics(d, 4);
    auto ide = integrated_dir_encode(d, 1.0, 4);
    for (int l = 0; l <= 4; ++l)
        for (int m = -l; m <= l; ++m)
            EXPECT_NEAR(ide[sh_index(l, m)], plain[sh_index(l, m)] * std::exp(-0.5 * l * (l + 1)), 1e-15);
    EXPECT_NEAR(ide_attenuation(1, 1.0), 0.36787944117144233, 1e-15);
}

TEST(Ide, PlusZHasOnlyZonalTerms) {
    auto y = integrated_dir_encode(Vec3(0, 0, 1), 0.3, 4);
    for (int l = 0; l <= 4; ++l)
        for (int m = -l; m <= l; ++m) {
            const double v = y[sh_index(l, m)];
            if (m == 0) EXPECT_GT(std::abs(v), 1e-3);
            else EXPECT_NEAR(v, 0.0, 1e-14);
        }
}

TEST(Ide, ComponentsNonIncreasingInRoughness) {
    Rng rng(6);
    for (int i = 0; i < 50; ++i) {
        const Vec3 d = random_unit(rng);
        std::vector<double> prev = integrated_dir_encode(d, 0.0, 4);
        for (int j = 1; j <= 20; ++j) {
            auto cur = integrated_dir_encode(d, j / 20.0, 4);
            for (std::size_t k = 0; k < cur.size(); ++k) EXPECT_LE(std::abs(cur[k]), std::abs(prev[k]) + 1e-15);
            prev = cur;
        }
    }
}

TEST(Ide, TapeGradientMatchesFiniteDifferences) {
    Rng rng(7);
    ad::ParamStore<double> s;
    MatX<double> d(6, 3), r(6, 1);
    for (int i = 0; i < 6; ++i) {
        d.row(i) = random_unit(rng).transpose();
        r(i, 0) = rng.uniform(0.05, 1.0);
    }
    s.add("d", d);
    s.add("r", r);
    MatX<double> k(6, sh_count(4));
    for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = rng.uniform(-1, 1);
    ad::LossFn f = [&](ad::Tape<double>& t, const ad::ParamStore<double>& p) {
        return ad::sum(ad::mul(ad::integrated_dir_encode(t.param(p, "d"), t.param(p, "r"), 4), t.constant(k)));
    };
    ad::GradCheckOptions opt;
    opt.max_coords_per_block = 64;
    EXPECT_LT(ad::finite_diff_check(f, s, opt).max_rel_error, 1e-6);
}

TEST(Ide, RejectsDegreeOutOfRange) {
    ad::Tape<double> t;
    EXPECT_THROW(ad::integrated_dir_encode(t.constant(MatX<double>::Ones(1, 3)), t.constant(MatX<double>::Ones(1, 1)), 9),
                 ConfigError);
}

TEST(Hsv, PureRed) {
    const Hsv h = rgb_to_hsv(Vec3(1, 0, 0));
    EXPECT_EQ(h.h, 0.0);
    EXPECT_EQ(h.s, 1.0);
    EXPECT_EQ(h.v, 1.0);
}

TEST(Hsv, AchromaticHueIsZero) {
    const Hsv h = rgb_to_hsv(Vec3(0.5, 0.5, 0.5));
    EXPECT_EQ(h.h, 0.0);
    EXPECT_EQ(h.s, 0.0);
    EXPECT_EQ(h.v, 0.5);
}

TEST(Hsv, RoundTripRandomColors) {
    Rng rng(8);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const Vec3 c(rng.uniform(), rng.uniform(), rng.uniform());
        worst = std::max(worst, (hsv_to_rgb(rgb_to_hsv(c)) - c).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Hsv, ValueScalingScalesMaxChannel) {
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const Vec3 c(rng.uniform(), rng.uniform(), rng.uniform());
        const double k = rng.uniform(0.01, 1.0);
        Hsv h = rgb_to_hsv(c);
        h.v *= k;
        EXPECT_NEAR(hsv_to_rgb(h).maxCoeff(), k * c.maxCoeff(), 1e-12);
    }
}
