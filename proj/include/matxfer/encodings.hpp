#pragma once

#include "matxfer/autodiff/ops.hpp"
#include "matxfer/core/types.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace matxfer {

struct EncodingConfig {
    int n_freq = 4;  // positional
    int l_max = 4;   // directional, in [0, 8]
};

// ---------------------------------------------------------------------------
// Positional encoding: [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(F-1) pi x), cos(...)]
// ---------------------------------------------------------------------------

constexpr int positional_width(int dim, int n_freq) { return dim * (1 + 2 * n_freq); }

std::vector<double> positional_encode(const std::vector<double>& x, int n_freq);

namespace ad {

template <typename Scalar>
Var<Scalar> positional_encode(Var<Scalar> x, int n_freq) {
    const auto& xv = x.value();
    const Eigen::Index n = xv.rows(), k = xv.cols();
    MatX<Scalar> y(n, positional_width(static_cast<int>(k), n_freq));
    y.leftCols(k) = xv;
    for (int f = 0; f < n_freq; ++f) {
        const Scalar w = static_cast<Scalar>(std::ldexp(kPi, f));
        y.middleCols(k * (1 + 2 * f), k) = (w * xv.array()).sin().matrix();
        y.middleCols(k * (2 + 2 * f), k) = (w * xv.array()).cos().matrix();
    }
    const int xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, n_freq, k](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        const auto& y = t.value(self);
        MatX<Scalar> gx = g.leftCols(k);
        for (int f = 0; f < n_freq; ++f) {
            const Scalar w = static_cast<Scalar>(std::ldexp(kPi, f));
            const auto s = y.middleCols(k * (1 + 2 * f), k).array();
            const auto c = y.middleCols(k * (2 + 2 * f), k).array();
            gx.array() += w * (g.middleCols(k * (1 + 2 * f), k).array() * c -
                               g.middleCols(k * (2 + 2 * f), k).array() * s);
        }
        t.accumulate(xi, gx);
    });
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Integrated directional encoding: real spherical harmonics up to l_max with
// band l attenuated by exp(-l(l+1) / (2 kappa)), kappa = 1 / max(r^2, 1e-4).
// ---------------------------------------------------------------------------

constexpr int sh_count(int l_max) { return (l_max + 1) * (l_max + 1); }
constexpr int sh_index(int l, int m) { return l * l + l + m; }

inline constexpr double kMinRoughnessSq = 1e-4;

namespace detail {

// Value plus gradient with respect to (x, y, z).
template <typename T>
struct Dual3 {
    T v = 0;
    std::array<T, 3> d{0, 0, 0};
};

template <typename T>
Dual3<T> operator+(const Dual3<T>& a, const Dual3<T>& b) {
    return {a.v + b.v, {a.d[0] + b.d[0], a.d[1] + b.d[1], a.d[2] + b.d[2]}};
}
template <typename T>
Dual3<T> operator-(const Dual3<T>& a, const Dual3<T>& b) {
    return {a.v - b.v, {a.d[0] - b.d[0], a.d[1] - b.d[1], a.d[2] - b.d[2]}};
}
template <typename T>
Dual3<T> operator*(const Dual3<T>& a, const Dual3<T>& b) {
    return {a.v * b.v,
            {a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1], a.d[2] * b.v + a.v * b.d[2]}};
}
template <typename T>
Dual3<T> operator*(T s, const Dual3<T>& a) {
    return {s * a.v, {s * a.d[0], s * a.d[1], s * a.d[2]}};
}

inline double sh_norm(int l, int m) {
    double ratio = 1.0;  // (l-m)! / (l+m)!
    for (int k = l - m + 1; k <= l + m; ++k) ratio /= k;
    return std::sqrt((2 * l + 1) / (4 * kPi) * ratio);
}

// Real SH as polynomials of the Cartesian components. Works for plain
// scalars (T = double/float via Dual3 with zero derivatives) and duals.
template <typename T>
void real_sh(int l_max, const Dual3<T>& x, const Dual3<T>& y, const Dual3<T>& z, std::vector<Dual3<T>>& out) {
    out.assign(sh_count(l_max), Dual3<T>{});
    // Re/Im of (x + iy)^m.
    std::vector<Dual3<T>> re(l_max + 1), im(l_max + 1);
    re[0] = Dual3<T>{T(1), {0, 0, 0}};
    im[0] = Dual3<T>{};
    for (int m = 1; m <= l_max; ++m) {
        re[m] = re[m - 1] * x - im[m - 1] * y;
        im[m] = re[m - 1] * y + im[m - 1] * x;
    }
    const T sqrt2 = static_cast<T>(std::sqrt(2.0));
    for (int m = 0; m <= l_max; ++m) {
        // Q_l^m(z) = P_l^m(z) / (1 - z^2)^(m/2), built by the standard recurrence.
        double dfact = 1.0;
        for (int k = 1; k <= 2 * m - 1; k += 2) dfact *= k;
        Dual3<T> q_prev2{};
        Dual3<T> q_prev{static_cast<T>(dfact), {0, 0, 0}};
        for (int l = m; l <= l_max; ++l) {
            Dual3<T> q;
            if (l == m) q = q_prev;
            else if (l == m + 1) q = static_cast<T>(2 * m + 1) * (z * q_prev);
            else
                q = static_cast<T>(1.0 / (l - m)) *
                    (static_cast<T>(2 * l - 1) * (z * q_prev) - static_cast<T>(l + m - 1) * q_prev2);
            if (l > m) {
                q_prev2 = q_prev;
                q_prev = q;
            }
            const T k = static_cast<T>(sh_norm(l, m));
            if (m == 0) {
                out[sh_index(l, 0)] = k * q;
            } else {
                out[sh_index(l, m)] = (sqrt2 * k) * (q * re[m]);
                out[sh_index(l, -m)] = (sqrt2 * k) * (q * im[m]);
            }
        }
    }
}

}  // namespace detail

/// Attenuation A_l(r) and its derivative with respect to r.
inline double ide_attenuation(int l, double r) {
    return std::exp(-0.5 * l * (l + 1) * std::max(r * r, kMinRoughnessSq));
}
inline double ide_attenuation_dr(int l, double r) {
    if (r * r <= kMinRoughnessSq) return 0.0;
    return ide_attenuation(l, r) * (-static_cast<double>(l * (l + 1)) * r);
}

std::vector<double> spherical_harmonics(const Vec3& d, int l_max);
std::vector<double> integrated_dir_encode(const Vec3& d, double roughness, int l_max);

namespace ad {

/// IDE over a batch: dirs (N x 3, unit rows), roughness (N x 1 or 1 x 1).
template <typename Scalar>
Var<Scalar> integrated_dir_encode(Var<Scalar> dirs, Var<Scalar> roughness, int l_max) {
    if (dirs.cols() != 3) throw ShapeError("IDE expects N x 3 directions");
    if (l_max < 0 || l_max > 8) throw ConfigError("IDE l_max must lie in [0, 8]");
    const Eigen::Index n = dirs.rows();
    const int count = sh_count(l_max);
    const auto& dv = dirs.value();
    const auto& rv = roughness.value();
    const bool shared_r = rv.rows() == 1;
    if (!shared_r && rv.rows() != n) throw ShapeError("IDE roughness rows mismatch");

    MatX<Scalar> y(n, count);
    // Per-row SH values and Jacobians are recomputed in backward rather than stored.
    std::vector<matxfer::detail::Dual3<Scalar>> sh;
    for (Eigen::Index i = 0; i < n; ++i) {
        matxfer::detail::Dual3<Scalar> x{dv(i, 0), {1, 0, 0}}, yy{dv(i, 1), {0, 1, 0}}, z{dv(i, 2), {0, 0, 1}};
        matxfer::detail::real_sh(l_max, x, yy, z, sh);
        const double r = static_cast<double>(shared_r ? rv(0, 0) : rv(i, 0));
        for (int l = 0; l <= l_max; ++l) {
            const Scalar a = static_cast<Scalar>(ide_attenuation(l, r));
            for (int m = -l; m <= l; ++m) y(i, sh_index(l, m)) = a * sh[sh_index(l, m)].v;
        }
    }
    const int di = dirs.id, ri = roughness.id;
    return dirs.tape->record(std::move(y), {di, ri}, [di, ri, l_max, shared_r](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        const auto& dv = t.value(di);
        const auto& rv = t.value(ri);
        const Eigen::Index n = dv.rows();
        MatX<Scalar> gd = MatX<Scalar>::Zero(n, 3);
        MatX<Scalar> gr = MatX<Scalar>::Zero(rv.rows(), 1);
        std::vector<matxfer::detail::Dual3<Scalar>> sh;
        for (Eigen::Index i = 0; i < n; ++i) {
            matxfer::detail::Dual3<Scalar> x{dv(i, 0), {1, 0, 0}}, yy{dv(i, 1), {0, 1, 0}}, z{dv(i, 2), {0, 0, 1}};
            matxfer::detail::real_sh(l_max, x, yy, z, sh);
            const double r = static_cast<double>(shared_r ? rv(0, 0) : rv(i, 0));
            Scalar acc_r = 0;
            for (int l = 0; l <= l_max; ++l) {
                const Scalar a = static_cast<Scalar>(ide_attenuation(l, r));
                const Scalar da = static_cast<Scalar>(ide_attenuation_dr(l, r));
                for (int m = -l; m <= l; ++m) {
                    const auto& s = sh[sh_index(l, m)];
                    const Scalar gi = g(i, sh_index(l, m));
                    gd(i, 0) += gi * a * s.d[0];
                    gd(i, 1) += gi * a * s.d[1];
                    gd(i, 2) += gi * a * s.d[2];
                    acc_r += gi * da * s.v;
                }
            }
            gr(shared_r ? 0 : i, 0) += acc_r;
        }
        t.accumulate(di, gd);
        t.accumulate(ri, gr);
    });
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Hexcone HSV. Hue in [0, 1); achromatic colors get hue 0.
// ---------------------------------------------------------------------------

struct Hsv {
    double h = 0, s = 0, v = 0;
};

Hsv rgb_to_hsv(const Vec3& rgb);
Vec3 hsv_to_rgb(const Hsv& hsv);

}  // namespace matxfer
