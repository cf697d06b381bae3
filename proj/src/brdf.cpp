#include "matxfer/brdf.hpp"

#include "matxfer/core/rng.hpp"
#include "matxfer/encodings.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <mutex>

namespace matxfer {

MaterialSample MaterialSample::clamped() const {
    MaterialSample out;
    for (int c = 0; c < 3; ++c) out.albedo[c] = std::isfinite(albedo[c]) ? std::clamp(albedo[c], 0.0, 1.0) : 0.0;
    out.roughness = std::isfinite(roughness) ? std::clamp(roughness, 0.0, 1.0) : 0.0;
    return out;
}

double ggx_d(double n_dot_h, double alpha) {
    if (n_dot_h <= 0) return 0;
    const double a2 = alpha * alpha;
    const double t = n_dot_h * n_dot_h * (a2 - 1) + 1;
    return a2 / (kPi * t * t);
}

double smith_lambda(double cos_theta, double alpha) {
    const double c2 = std::max(cos_theta * cos_theta, kMinCosine * kMinCosine);
    const double tan2 = std::max(0.0, (1 - c2) / c2);
    return 0.5 * (-1 + std::sqrt(1 + alpha * alpha * tan2));
}

double smith_g2(double n_dot_i, double n_dot_o, double alpha) {
    return 1.0 / (1.0 + smith_lambda(n_dot_i, alpha) + smith_lambda(n_dot_o, alpha));
}

double schlick_weight(double cos_theta) {
    const double m = std::clamp(1.0 - cos_theta, 0.0, 1.0);
    const double m2 = m * m;
    return m2 * m2 * m;
}

Vec3 microfacet_specular(const Vec3& w, const Vec3& d, const Vec3& n, double roughness) {
    const double nw = w.dot(n), nd = d.dot(n);
    if (nw <= 0 || nd <= 0) return Vec3::Zero();
    const Vec3 h = (w + d).normalized();
    const double alpha = ggx_alpha(roughness);
    const double dterm = ggx_d(n.dot(h), alpha);
    const double f = kDielectricF0 + (1 - kDielectricF0) * schlick_weight(w.dot(h));
    const double g = smith_g2(nw, nd, alpha);
    const double spec = dterm * f * g / (4 * std::max(nw, kMinCosine) * std::max(nd, kMinCosine));
    return Vec3::Constant(spec);
}

Vec3 microfacet_brdf(const Vec3& w, const Vec3& d, const Vec3& n, const MaterialSample& beta) {
    if (w.dot(n) <= 0 || d.dot(n) <= 0) return Vec3::Zero();
    return beta.albedo / kPi + microfacet_specular(w, d, n, beta.roughness);
}

void orthonormal_basis(const Vec3& n, Vec3& t, Vec3& b) {
    const double sign = std::copysign(1.0, n.z());
    const double a = -1.0 / (sign + n.z());
    const double c = n.x() * n.y() * a;
    t = Vec3(1.0 + sign * n.x() * n.x() * a, sign * c, -sign * n.x());
    b = Vec3(c, sign + n.y() * n.y() * a, -n.y());
}

Vec3 reflect(const Vec3& v, const Vec3& n) { return 2 * n.dot(v) * n - v; }

Vec3 sample_cosine_hemisphere(const Vec3& n, double u1, double u2) {
    const double r = std::sqrt(u1);
    const double phi = 2 * kPi * u2;
    Vec3 t, b;
    orthonormal_basis(n, t, b);
    const double z = std::sqrt(std::max(0.0, 1 - u1));
    return (r * std::cos(phi) * t + r * std::sin(phi) * b + z * n).normalized();
}

Vec3 sample_ggx_half(const Vec3& n, double alpha, double u1, double u2) {
    const double a2 = alpha * alpha;
    const double cos2 = (1 - u1) / (1 + (a2 - 1) * u1);
    const double cos_t = std::sqrt(std::clamp(cos2, 0.0, 1.0));
    const double sin_t = std::sqrt(std::max(0.0, 1 - cos_t * cos_t));
    const double phi = 2 * kPi * u2;
    Vec3 t, b;
    orthonormal_basis(n, t, b);
    return (sin_t * std::cos(phi) * t + sin_t * std::sin(phi) * b + cos_t * n).normalized();
}

double ggx_half_pdf(double n_dot_h, double alpha) { return ggx_d(n_dot_h, alpha) * std::max(n_dot_h, 0.0); }

std::vector<Vec3> fibonacci_sphere(int n) {
    std::vector<Vec3> out;
    out.reserve(n);
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(std::max(0.0, 1 - z * z));
        const double phi = golden * i;
        out.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
    }
    return out;
}

// ---------------------------------------------------------------------------

MspecLut::MspecLut(int n_cos, int n_r, double f0, std::uint64_t seed, std::vector<float> scale,
                   std::vector<float> bias)
    : n_cos_(n_cos), n_r_(n_r), f0_(static_cast<float>(f0)), seed_(seed), scale_(std::move(scale)), bias_(std::move(bias)) {
    if (scale_.size() != static_cast<std::size_t>(n_cos * n_r) || bias_.size() != scale_.size())
        throw ShapeError("MspecLut table size does not match its resolution");
}

MspecLut::Sample MspecLut::lookup(double cos_v, double roughness) const {
    // Continuous grid coordinates.
    const double lo_c = cos_at(0), hi_c = cos_at(n_cos_ - 1);
    const bool c_in = cos_v > lo_c && cos_v < hi_c;
    const double fc = (std::clamp(cos_v, lo_c, hi_c) * n_cos_ - 1.0);
    const bool r_in = roughness > 0 && roughness < 1;
    const double fr = std::clamp(roughness, 0.0, 1.0) * (n_r_ - 1);
    const int i0 = std::min(static_cast<int>(fc), n_cos_ - 2);
    const int j0 = std::min(static_cast<int>(fr), n_r_ - 2);
    const double tc = fc - i0, tr = fr - j0;
    auto bil = [&](const std::vector<float>& tab, double& d_c, double& d_r) {
        const double v00 = tab[i0 * n_r_ + j0], v01 = tab[i0 * n_r_ + j0 + 1];
        const double v10 = tab[(i0 + 1) * n_r_ + j0], v11 = tab[(i0 + 1) * n_r_ + j0 + 1];
        const double a = v00 + (v01 - v00) * tr;
        const double b = v10 + (v11 - v10) * tr;
        d_c = c_in ? (b - a) * n_cos_ : 0.0;
        d_r = r_in ? ((v01 - v00) * (1 - tc) + (v11 - v10) * tc) * (n_r_ - 1) : 0.0;
        return a + (b - a) * tc;
    };
    Sample s{};
    s.scale = bil(scale_, s.d_scale_dcos, s.d_scale_dr);
    s.bias = bil(bias_, s.d_bias_dcos, s.d_bias_dr);
    return s;
}

namespace {

constexpr char kLutMagic[6] = {'M', 'S', 'P', 'E', 'C', '1'};

template <typename T>
void put(std::ostream& os, T v) {
    // Little-endian host assumed (x86-64 / aarch64).
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

}  // namespace

void MspecLut::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os.write(kLutMagic, sizeof kLutMagic);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(n_cos_));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(n_r_));
    put<float>(os, static_cast<float>(f0_));
    put<std::uint64_t>(os, seed_);
    for (std::size_t k = 0; k < scale_.size(); ++k) {
        put<float>(os, scale_[k]);
        put<float>(os, bias_[k]);
    }
    if (!os) throw IoError("write failed for " + path.string());
}

MspecLut MspecLut::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path.string());
    char magic[6];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kLutMagic, sizeof magic) != 0) throw IoError("bad LUT magic in " + path.string());
    const int n_cos = static_cast<int>(get<std::uint32_t>(is));
    const int n_r = static_cast<int>(get<std::uint32_t>(is));
    const double f0 = get<float>(is);
    const auto seed = get<std::uint64_t>(is);
    std::vector<float> a(static_cast<std::size_t>(n_cos) * n_r), b(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        a[k] = get<float>(is);
        b[k] = get<float>(is);
    }
    if (!is) throw IoError("truncated LUT file " + path.string());
    return MspecLut(n_cos, n_r, f0, seed, std::move(a), std::move(b));
}

MspecLut build_mspec_lut(int n_cos, int n_r, int spp, std::uint64_t seed, double f0) {
    if (n_cos < 2 || n_r < 2 || spp < 1) throw ConfigError("invalid M_spec LUT resolution");
    std::vector<float> scale(static_cast<std::size_t>(n_cos) * n_r), bias(scale.size());
    const Vec3 n(0, 0, 1);
    for (int i = 0; i < n_cos; ++i) {
        const double cv = (i + 1.0) / n_cos;
        const Vec3 v(std::sqrt(std::max(0.0, 1 - cv * cv)), 0, cv);
        for (int j = 0; j < n_r; ++j) {
            const double alpha = ggx_alpha(static_cast<double>(j) / (n_r - 1));
            Rng rng(seed, static_cast<std::uint64_t>(i) * 65536u + j);
            // Stratified over a sqrt(spp) x sqrt(spp) grid, remainder uniform.
            const int side = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(spp))));
            double a = 0, b = 0;
            for (int k = 0; k < spp; ++k) {
                double u1, u2;
                if (k < side * side) {
                    u1 = ((k / side) + rng.uniform()) / side;
                    u2 = ((k % side) + rng.uniform()) / side;
                } else {
                    u1 = rng.uniform();
                    u2 = rng.uniform();
                }
                const Vec3 h = sample_ggx_half(n, alpha, u1, u2);
                const Vec3 l = reflect(v, h);
                const double nl = l.z(), nh = h.z(), vh = v.dot(h);
                if (nl <= 0 || vh <= 0) continue;
                const double g_vis = smith_g2(nl, cv, alpha) * vh / (nh * cv);
                const double fc = schlick_weight(vh);
                a += (1 - fc) * g_vis;
                b += fc * g_vis;
            }
            scale[i * n_r + j] = static_cast<float>(a / spp);
            bias[i * n_r + j] = static_cast<float>(b / spp);
        }
    }
    return MspecLut(n_cos, n_r, f0, seed, std::move(scale), std::move(bias));
}

const MspecLut& default_mspec_lut() {
    static const MspecLut lut = build_mspec_lut(32, 32, 4096, 0);
    return lut;
}

Vec3 shade_splitsum(const MaterialSample& beta, const Vec3& mspec, const Vec3& l_diff, const Vec3& l_spec) {
    return beta.albedo.cwiseProduct(l_diff) + mspec.cwiseProduct(l_spec);
}

// ---------------------------------------------------------------------------

std::string to_string(TransformTag tag) {
    switch (tag) {
        case TransformTag::T1: return "T1";
        case TransformTag::T2: return "T2";
        case TransformTag::T3: return "T3";
        case TransformTag::T4: return "T4";
    }
    return "?";
}

std::optional<TransformTag> parse_transform_tag(std::string_view s) {
    if (s == "T1" || s == "t1") return TransformTag::T1;
    if (s == "T2" || s == "t2") return TransformTag::T2;
    if (s == "T3" || s == "t3") return TransformTag::T3;
    if (s == "T4" || s == "t4") return TransformTag::T4;
    return std::nullopt;
}

MaterialSample apply_named_transform(TransformTag tag, const MaterialSample& beta, const TransformConstants& k) {
    MaterialSample out;
    switch (tag) {
        case TransformTag::T1: {
            Hsv hsv = rgb_to_hsv(beta.albedo);
            hsv.v *= 0.3;
            out.albedo = hsv_to_rgb(hsv);
            out.roughness = 0;
            break;
        }
        case TransformTag::T2:
            out.albedo = 0.5 * beta.albedo + 0.5 * k.red;
            out.roughness = 0;
            break;
        case TransformTag::T3:
            out.albedo = 0.2 * beta.albedo + 0.8 * k.sand;
            out.roughness = 1;
            break;
        case TransformTag::T4: {
            Hsv hsv = rgb_to_hsv(beta.albedo);
            if (hsv.s > 0) {
                hsv.h += 0.5;
                if (hsv.h >= 1) hsv.h -= 1;
                out.albedo = hsv_to_rgb(hsv);
            } else {
                out.albedo = beta.albedo;
            }
            out.roughness = beta.roughness;
            break;
        }
    }
    return out.clamped();
}

MaterialSample blend_intensity(const MaterialSample& beta, const MaterialSample& transformed, double alpha) {
    if (!(alpha >= 0 && alpha <= 1)) {
        std::cerr << "warning: blend intensity " << alpha << " clamped to [0, 1]\n";
        alpha = std::isfinite(alpha) ? std::clamp(alpha, 0.0, 1.0) : 0.0;
    }
    if (alpha == 0) return beta;
    if (alpha == 1) return transformed;
    MaterialSample out;
    out.albedo = (1 - alpha) * beta.albedo + alpha * transformed.albedo;
    out.roughness = (1 - alpha) * beta.roughness + alpha * transformed.roughness;
    return out;
}

}  // namespace matxfer
