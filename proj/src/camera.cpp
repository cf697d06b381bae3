#include "matxfer/camera.hpp"

#include <cmath>

namespace matxfer {

Intrinsics Intrinsics::from_fov(int width, int height, double fov_deg) {
    if (width < 1 || height < 1 || !(fov_deg > 0 && fov_deg < 180)) throw ConfigError("invalid camera intrinsics");
    Intrinsics k;
    k.width = width;
    k.height = height;
    k.fx = k.fy = 0.5 * width / std::tan(0.5 * fov_deg * kPi / 180);
    k.cx = 0.5 * width;
    k.cy = 0.5 * height;
    return k;
}

Vec3 Camera::pixel_dir(int px, int py) const {
    const Vec3 local((px + 0.5 - intr.cx) / intr.fx, -(py + 0.5 - intr.cy) / intr.fy, -1.0);
    return (c2w.block<3, 3>(0, 0) * local).normalized();
}

Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 back = (eye - target).normalized();
    Vec3 right = up.cross(back);
    if (right.norm() < 1e-9) right = Vec3::UnitX();
    right.normalize();
    const Vec3 cam_up = back.cross(right);
    Mat4 m = Mat4::Identity();
    m.block<3, 1>(0, 0) = right;
    m.block<3, 1>(0, 1) = cam_up;
    m.block<3, 1>(0, 2) = back;
    m.block<3, 1>(0, 3) = eye;
    return m;
}

std::vector<Camera> hemisphere_cameras(const PoseProtocol& p) {
    if (p.views < 1 || !(p.radius > 0) || p.test_every < 1) throw ConfigError("invalid pose protocol");
    const Intrinsics k = Intrinsics::from_fov(p.resolution, p.resolution, p.fov_deg);
    const double golden = kPi * (3 - std::sqrt(5.0));
    std::vector<Camera> cams(p.views);
    for (int i = 0; i < p.views; ++i) {
        const double z = 1 - (i + 0.5) / p.views;
        const double s = std::sqrt(std::max(0.0, 1 - z * z));
        const double phi = golden * i;
        const Vec3 eye = p.radius * Vec3(s * std::cos(phi), s * std::sin(phi), z);
        cams[i].intr = k;
        cams[i].c2w = look_at(eye, Vec3::Zero(), Vec3::UnitZ());
    }
    return cams;
}

bool is_test_view(int index, const PoseProtocol& p) { return index % p.test_every == p.test_every - 1; }

}  // namespace matxfer
