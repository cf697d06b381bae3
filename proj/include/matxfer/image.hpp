#pragma once

#include "matxfer/core/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace matxfer {

/// Row-major float image, row 0 at the top.
struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.0f)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    float& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int x, int y, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
    bool operator==(const Image&) const = default;
};

double srgb_encode(double linear);
double srgb_decode(double encoded);

/// 8-bit PNG. Color images are linear and get clamp + sRGB encoding when
/// `srgb` is set; masks are written as-is.
void write_png(const std::filesystem::path& path, const Image& img, bool srgb);
Image read_png(const std::filesystem::path& path, bool srgb);

/// Portable float map, little-endian; 1 or 3 channels.
void write_pfm(const std::filesystem::path& path, const Image& img);
Image read_pfm(const std::filesystem::path& path);

}  // namespace matxfer
