#include "matxfer/encodings.hpp"

#include <algorithm>
#include <cmath>

namespace matxfer {

std::vector<double> positional_encode(const std::vector<double>& x, int n_freq) {
    const std::size_t k = x.size();
    std::vector<double> out(positional_width(static_cast<int>(k), n_freq));
    std::copy(x.begin(), x.end(), out.begin());
    for (int f = 0; f < n_freq; ++f) {
        const double w = std::ldexp(kPi, f);
        for (std::size_t j = 0; j < k; ++j) {
            out[k * (1 + 2 * f) + j] = std::sin(w * x[j]);
            out[k * (2 + 2 * f) + j] = std::cos(w * x[j]);
        }
    }
    return out;
}

std::vector<double> spherical_harmonics(const Vec3& d, int l_max) {
    std::vector<detail::Dual3<double>> sh;
    detail::real_sh<double>(l_max, {d.x(), {}}, {d.y(), {}}, {d.z(), {}}, sh);
    std::vector<double> out(sh.size());
    for (std::size_t i = 0; i < sh.size(); ++i) out[i] = sh[i].v;
    return out;
}

std::vector<double> integrated_dir_encode(const Vec3& d, double roughness, int l_max) {
    Vec3 u = d;
    const double n = u.norm();
    if (std::abs(n - 1.0) > 1e-5 && n > 0) u /= n;
    std::vector<double> out = spherical_harmonics(u, l_max);
    for (int l = 0; l <= l_max; ++l) {
        const double a = ide_attenuation(l, roughness);
        for (int m = -l; m <= l; ++m) out[sh_index(l, m)] *= a;
    }
    return out;
}

Hsv rgb_to_hsv(const Vec3& rgb) {
    const double r = rgb.x(), g = rgb.y(), b = rgb.z();
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double c = mx - mn;
    Hsv out;
    out.v = mx;
    out.s = mx > 0 ? c / mx : 0.0;
    if (c <= 0) return out;
    double h;
    if (mx == r) h = (g - b) / c;
    else if (mx == g) h = (b - r) / c + 2.0;
    else h = (r - g) / c + 4.0;
    h /= 6.0;
    if (h < 0) h += 1.0;
    if (h >= 1.0) h -= 1.0;
    out.h = h;
    return out;
}

Vec3 hsv_to_rgb(const Hsv& hsv) {
    double h = hsv.h - std::floor(hsv.h);
    const double c = hsv.v * hsv.s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp) % 6) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = hsv.v - c;
    return {r + m, g + m, b + m};
}

}  // namespace matxfer
