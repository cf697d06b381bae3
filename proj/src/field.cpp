#include "matxfer/field.hpp"

namespace matxfer {

RaySampleBatch march_rays(const MatX<double>& origins, const MatX<double>& dirs, const MarchConfig& cfg,
                          std::uint64_t first_ray_index) {
    if (cfg.n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (!(cfg.near < cfg.far)) throw ConfigError("march requires near < far");
    const Eigen::Index n = origins.rows();
    const int s = cfg.n_samples;
    RaySampleBatch b;
    b.n_samples = s;
    b.positions = MatX<double>::Zero(n * s, 3);
    b.t_mid = MatX<double>::Zero(n, s);
    b.delta = MatX<double>::Zero(n, s);
    b.t_far = MatX<double>::Constant(n, 1, cfg.near);
    for (Eigen::Index r = 0; r < n; ++r) {
        const Vec3 o = origins.row(r).transpose();
        const Vec3 d = dirs.row(r).transpose();
        double t0, t1;
        bool hit = intersect_box(o, d, cfg.half_extent, t0, t1);
        if (hit) {
            t0 = std::max(t0, cfg.near);
            t1 = std::min(t1, cfg.far);
            hit = t1 > t0;
        }
        Rng rng(cfg.jitter_seed, first_ray_index + static_cast<std::uint64_t>(r));
        if (!hit) {
            for (int k = 0; k < s; ++k) b.positions.row(r * s + k) = (o + cfg.near * d).transpose();
            continue;
        }
        const double step = (t1 - t0) / s;
        b.t_far(r, 0) = t1;
        for (int k = 0; k < s; ++k) {
            const double u = cfg.jitter ? rng.uniform() : 0.5;
            const double tm = t0 + (k + u) * step;
            b.t_mid(r, k) = tm;
            b.delta(r, k) = step;
            b.positions.row(r * s + k) = (o + tm * d).transpose();
        }
    }
    return b;
}

}  // namespace matxfer
