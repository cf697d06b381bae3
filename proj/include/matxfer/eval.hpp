#pragma once

#include "matxfer/image.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace matxfer {

inline constexpr double kPsnrCap = 99.0;

/// PSNR over all channels of the pixels where mask (1 channel) is set, or of
/// every pixel when mask is null. Identical inputs give kPsnrCap.
double psnr(const Image& a, const Image& b, const Image* mask = nullptr);
/// Mean SSIM of the luminance, 11x11 Gaussian window with sigma 1.5, valid region.
double ssim(const Image& a, const Image& b);
/// Mean angle in degrees between unit normals (3 channels) over masked pixels.
double mae_normals(const Image& a, const Image& b, const Image& mask);

/// Per-channel scale s_c minimizing sum (s_c a - b)^2 over masked pixels.
std::vector<double> albedo_scale(const std::vector<const Image*>& pred, const std::vector<const Image*>& ref,
                                 const std::vector<const Image*>& masks);
Image apply_scale(const Image& img, const std::vector<double>& s);

/// Per-pixel absolute error averaged over channels, masked pixels only (others 0).
Image error_map(const Image& a, const Image& b, const Image& mask);

struct MetricRow {
    std::string source, target, transform;
    double alpha = 0;
    std::string metric;
    double value = 0;
    std::string ablation = "none";
};

inline const char* kMetricsHeader = "source,target,transform,alpha,metric,value,ablation";

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);
/// Heat map as CSV: `height` lines of `width` comma-separated values.
void write_heatmap_csv(const Image& map, const std::filesystem::path& path);

}  // namespace matxfer
