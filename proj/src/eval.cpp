#include "matxfer/eval.hpp"

#include "matxfer/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace matxfer {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": image shapes differ");
}

bool masked(const Image* mask, int x, int y) { return !mask || mask->at(x, y) > 0.5f; }

}  // namespace

double psnr(const Image& a, const Image& b, const Image* mask) {
    require_same(a, b, "psnr");
    if (mask && (mask->width != a.width || mask->height != a.height))
        throw ShapeError("psnr: mask shape differs");
    double se = 0;
    std::size_t count = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (!masked(mask, x, y)) continue;
            for (int c = 0; c < a.channels; ++c) {
                const double d = static_cast<double>(a.at(x, y, c)) - b.at(x, y, c);
                se += d * d;
                ++count;
            }
        }
    if (count == 0) throw ContractError("psnr over an empty mask");
    const double mse = se / static_cast<double>(count);
    if (mse <= 0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const Image& a, const Image& b) {
    require_same(a, b, "ssim");
    const int w = a.width, h = a.height, r = 5;
    if (w < 2 * r + 1 || h < 2 * r + 1) throw ShapeError("ssim needs images of at least 11x11");
    auto luma = [](const Image& img) {
        std::vector<double> l(img.pixels());
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * img.width + x;
                if (img.channels >= 3)
                    l[i] = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
                else l[i] = img.at(x, y, 0);
            }
        return l;
    };
    const std::vector<double> la = luma(a), lb = luma(b);
    double kern[11];
    double ks = 0;
    for (int i = -r; i <= r; ++i) ks += kern[i + r] = std::exp(-(i * i) / (2 * 1.5 * 1.5));
    for (double& k : kern) k /= ks;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double acc = 0;
    std::size_t n = 0;
    for (int y = r; y < h - r; ++y)
        for (int x = r; x < w - r; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const double k = kern[dy + r] * kern[dx + r];
                    const std::size_t i = static_cast<std::size_t>(y + dy) * w + (x + dx);
                    ma += k * la[i];
                    mb += k * lb[i];
                    saa += k * la[i] * la[i];
                    sbb += k * lb[i] * lb[i];
                    sab += k * la[i] * lb[i];
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++n;
        }
    return acc / static_cast<double>(n);
}

double mae_normals(const Image& a, const Image& b, const Image& mask) {
    require_same(a, b, "mae_normals");
    if (a.channels != 3) throw ShapeError("mae_normals expects 3-channel normals");
    double acc = 0;
    std::size_t n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (mask.at(x, y) <= 0.5f) continue;
            Vec3 u(a.at(x, y, 0), a.at(x, y, 1), a.at(x, y, 2));
            Vec3 v(b.at(x, y, 0), b.at(x, y, 1), b.at(x, y, 2));
            if (u.norm() < 1e-12 || v.norm() < 1e-12) continue;
            acc += std::acos(std::clamp(u.normalized().dot(v.normalized()), -1.0, 1.0)) * 180.0 / kPi;
            ++n;
        }
    if (n == 0) throw ContractError("mae_normals over an empty mask");
    return acc / static_cast<double>(n);
}

std::vector<double> albedo_scale(const std::vector<const Image*>& pred, const std::vector<const Image*>& ref,
                                 const std::vector<const Image*>& masks) {
    if (pred.size() != ref.size() || pred.size() != masks.size()) throw ShapeError("albedo_scale: list sizes differ");
    std::vector<double> num(3, 0), den(3, 0);
    for (std::size_t k = 0; k < pred.size(); ++k) {
        require_same(*pred[k], *ref[k], "albedo_scale");
        for (int y = 0; y < pred[k]->height; ++y)
            for (int x = 0; x < pred[k]->width; ++x) {
                if (masks[k]->at(x, y) <= 0.5f) continue;
                for (int c = 0; c < 3; ++c) {
                    num[c] += static_cast<double>(pred[k]->at(x, y, c)) * ref[k]->at(x, y, c);
                    den[c] += static_cast<double>(pred[k]->at(x, y, c)) * pred[k]->at(x, y, c);
                }
            }
    }
    std::vector<double> s(3, 1.0);
    for (int c = 0; c < 3; ++c)
        if (den[c] > 0) s[c] = num[c] / den[c];
    return s;
}

Image apply_scale(const Image& img, const std::vector<double>& s) {
    Image out = img;
    for (std::size_t i = 0; i < out.pixels(); ++i)
        for (int c = 0; c < out.channels; ++c)
            out.data[i * out.channels + c] = static_cast<float>(out.data[i * out.channels + c] * s[c % s.size()]);
    return out;
}

Image error_map(const Image& a, const Image& b, const Image& mask) {
    require_same(a, b, "error_map");
    Image out(a.width, a.height, 1);
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (mask.at(x, y) <= 0.5f) continue;
            double e = 0;
            for (int c = 0; c < a.channels; ++c) e += std::abs(static_cast<double>(a.at(x, y, c)) - b.at(x, y, c));
            out.at(x, y) = static_cast<float>(e / a.channels);
        }
    return out;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << kMetricsHeader << "\n";
    os.precision(10);
    for (const auto& r : rows)
        os << r.source << ',' << r.target << ',' << r.transform << ',' << r.alpha << ',' << r.metric << ','
           << r.value << ',' << r.ablation << "\n";
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    std::string line;
    std::getline(is, line);
    if (line != kMetricsHeader) throw IoError(path.string() + ": unexpected metrics header");
    std::vector<MetricRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 7) throw IoError(path.string() + ": malformed row '" + line + "'");
        MetricRow r{f[0], f[1], f[2], std::stod(f[3]), f[4], std::stod(f[5]), f[6]};
        rows.push_back(r);
    }
    return rows;
}

void write_heatmap_csv(const Image& map, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os.precision(6);
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) os << (x ? "," : "") << map.at(x, y);
        os << "\n";
    }
}

}  // namespace matxfer
