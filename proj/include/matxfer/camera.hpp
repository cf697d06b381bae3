#pragma once

#include "matxfer/core/types.hpp"

#include <vector>

namespace matxfer {

struct Intrinsics {
    int width = 128, height = 128;
    double fx = 0, fy = 0, cx = 0, cy = 0;

    static Intrinsics from_fov(int width, int height, double fov_deg);
    bool operator==(const Intrinsics&) const = default;
};

/// Pinhole camera, OpenGL convention: looks down -z, +y up, +x right.
struct Camera {
    Intrinsics intr;
    Mat4 c2w = Mat4::Identity();

    Vec3 origin() const { return c2w.block<3, 1>(0, 3); }
    /// Unit world-space direction through the center of pixel (px, py), py from the top.
    Vec3 pixel_dir(int px, int py) const;
};

Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up);

struct PoseProtocol {
    int views = 120;
    double radius = 2.5;
    double fov_deg = 45.0;
    int resolution = 128;
    int test_every = 6;  // view i is a test view when i % test_every == test_every - 1
};

/// Fibonacci-distributed cameras on the upper (+z) hemisphere looking at the origin.
std::vector<Camera> hemisphere_cameras(const PoseProtocol& p);
bool is_test_view(int index, const PoseProtocol& p);

}  // namespace matxfer
