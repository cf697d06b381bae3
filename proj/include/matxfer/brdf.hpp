#pragma once

#include "matxfer/autodiff/ops.hpp"
#include "matxfer/core/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace matxfer {

/// beta = (albedo, roughness). Linear RGB albedo and roughness in [0, 1].
struct MaterialSample {
    Vec3 albedo = Vec3::Zero();
    double roughness = 0;

    MaterialSample clamped() const;
    bool operator==(const MaterialSample&) const = default;
};

inline constexpr double kDielectricF0 = 0.04;
inline constexpr double kMinAlpha = 1e-3;   // GGX alpha floor (alpha = r^2)
inline constexpr double kMinCosine = 1e-4;  // grazing denominator clamp

inline double ggx_alpha(double roughness) { return std::max(roughness * roughness, kMinAlpha); }

double ggx_d(double n_dot_h, double alpha);
double smith_lambda(double cos_theta, double alpha);
/// Height-correlated Smith masking-shadowing.
double smith_g2(double n_dot_i, double n_dot_o, double alpha);
double schlick_weight(double cos_theta);

/// f_r(w, d) = albedo / pi + D F G / (4 (w.n)(d.n)); zero below the hemisphere.
Vec3 microfacet_brdf(const Vec3& w, const Vec3& d, const Vec3& n, const MaterialSample& beta);
Vec3 microfacet_specular(const Vec3& w, const Vec3& d, const Vec3& n, double roughness);

// Orthonormal basis around n (Duff et al.).
void orthonormal_basis(const Vec3& n, Vec3& t, Vec3& b);
Vec3 reflect(const Vec3& v, const Vec3& n);
Vec3 sample_cosine_hemisphere(const Vec3& n, double u1, double u2);
/// Half vector drawn with density D(h)(n.h).
Vec3 sample_ggx_half(const Vec3& n, double alpha, double u1, double u2);
double ggx_half_pdf(double n_dot_h, double alpha);

/// Fibonacci points on the unit sphere.
std::vector<Vec3> fibonacci_sphere(int n);

// ---------------------------------------------------------------------------
// Pre-integrated specular term M_spec = F0 * A(cos_v, r) + B(cos_v, r).
// ---------------------------------------------------------------------------

class MspecLut {
public:
    MspecLut() = default;
    MspecLut(int n_cos, int n_r, double f0, std::uint64_t seed, std::vector<float> scale, std::vector<float> bias);

    int n_cos() const { return n_cos_; }
    int n_r() const { return n_r_; }
    double f0() const { return f0_; }  // stored at f32 precision, as in the file
    std::uint64_t seed() const { return seed_; }

    // Grid nodes: cos_i = (i + 1) / n_cos, r_j = j / (n_r - 1).
    double cos_at(int i) const { return (i + 1.0) / n_cos_; }
    double rough_at(int j) const { return n_r_ > 1 ? static_cast<double>(j) / (n_r_ - 1) : 0.0; }
    float scale_at(int i, int j) const { return scale_[i * n_r_ + j]; }
    float bias_at(int i, int j) const { return bias_[i * n_r_ + j]; }

    struct Sample {
        double scale, bias;
        double d_scale_dcos, d_bias_dcos;
        double d_scale_dr, d_bias_dr;
    };
    /// Bilinear lookup with partial derivatives; inputs are clamped to the grid.
    Sample lookup(double cos_v, double roughness) const;
    double mspec(double cos_v, double roughness) const {
        const Sample s = lookup(cos_v, roughness);
        return f0_ * s.scale + s.bias;
    }

    void save(const std::filesystem::path& path) const;
    static MspecLut load(const std::filesystem::path& path);
    bool operator==(const MspecLut&) const = default;

private:
    int n_cos_ = 0, n_r_ = 0;
    double f0_ = kDielectricF0;
    std::uint64_t seed_ = 0;
    std::vector<float> scale_, bias_;
};

MspecLut build_mspec_lut(int n_cos, int n_r, int spp, std::uint64_t seed, double f0 = kDielectricF0);

/// Process-wide default LUT (32 x 32, 4096 spp, seed 0), built on first use.
const MspecLut& default_mspec_lut();

/// C = albedo * l_diff + M_spec * l_spec; linear HDR, unclamped.
Vec3 shade_splitsum(const MaterialSample& beta, const Vec3& mspec, const Vec3& l_diff, const Vec3& l_spec);

// ---------------------------------------------------------------------------
// Named material transforms and intensity blending.
// ---------------------------------------------------------------------------

enum class TransformTag { T1, T2, T3, T4 };

struct TransformConstants {
    Vec3 red{0.80, 0.05, 0.05};
    Vec3 sand{0.76, 0.70, 0.50};
};

std::string to_string(TransformTag tag);
std::optional<TransformTag> parse_transform_tag(std::string_view s);

MaterialSample apply_named_transform(TransformTag tag, const MaterialSample& beta,
                                     const TransformConstants& constants = {});

/// (1 - alpha) beta + alpha beta'. Alpha outside [0, 1] is clamped with a warning.
MaterialSample blend_intensity(const MaterialSample& beta, const MaterialSample& transformed, double alpha);

namespace ad {

/// M_spec over a batch: cos_v and roughness are N x 1. Returns N x 1.
template <typename Scalar>
Var<Scalar> mspec_lookup(const MspecLut& lut, Var<Scalar> cos_v, Var<Scalar> roughness) {
    const Eigen::Index n = cos_v.rows();
    if (roughness.rows() != n) throw ShapeError("mspec_lookup row mismatch");
    MatX<Scalar> y(n, 1);
    MatX<Scalar> dc(n, 1), dr(n, 1);
    const double f0 = lut.f0();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto s = lut.lookup(static_cast<double>(cos_v.value()(i, 0)), static_cast<double>(roughness.value()(i, 0)));
        y(i, 0) = static_cast<Scalar>(f0 * s.scale + s.bias);
        dc(i, 0) = static_cast<Scalar>(f0 * s.d_scale_dcos + s.d_bias_dcos);
        dr(i, 0) = static_cast<Scalar>(f0 * s.d_scale_dr + s.d_bias_dr);
    }
    const int ci = cos_v.id, ri = roughness.id;
    return cos_v.tape->record(std::move(y), {ci, ri}, [ci, ri, dc, dr](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        t.accumulate(ci, g.cwiseProduct(dc));
        t.accumulate(ri, g.cwiseProduct(dr));
    });
}

}  // namespace ad

}  // namespace matxfer
