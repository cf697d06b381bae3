#pragma once

#include "matxfer/brdf.hpp"
#include "matxfer/core/rng.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace matxfer {

// ---------------------------------------------------------------------------
// Spatially varying material rules.
// ---------------------------------------------------------------------------

struct MaterialRule {
    enum class Kind { Constant, Checker, Radial };
    Kind kind = Kind::Constant;
    MaterialSample a, b;  // checker parity / radial inner and outer values
    double cell = 0.25;   // checker cell size, world units
    Vec3 center = Vec3::Zero();
    double radius = 1.0;

    MaterialSample eval(const Vec3& p) const;
};

// ---------------------------------------------------------------------------
// Primitives.
// ---------------------------------------------------------------------------

struct Hit {
    double t = 0;
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
    int primitive = -1;
};

struct Primitive {
    enum class Kind { Sphere, Box, Plane };
    Kind kind = Kind::Sphere;
    Vec3 center = Vec3::Zero();  // sphere and box
    double radius = 0.5;         // sphere
    Vec3 half = Vec3::Constant(0.5);  // box half extents
    Vec3 normal = Vec3::UnitZ();      // plane: normal . x = offset, bounded by the scene box
    double offset = 0;
    MaterialRule material;

    /// Nearest hit with t in (t_min, t_max).
    bool intersect(const Vec3& o, const Vec3& d, double t_min, double t_max, Hit& hit) const;
};

// ---------------------------------------------------------------------------
// Environment: constant radiance plus von Mises-Fisher-shaped lobes,
// L(w) = c + sum_k I_k exp(kappa_k (w . mu_k - 1)).
// ---------------------------------------------------------------------------

struct EnvLobe {
    Vec3 direction = Vec3::UnitZ();
    double kappa = 10;
    Vec3 intensity = Vec3::Ones();
};

struct Environment {
    Vec3 constant = Vec3::Constant(0.5);
    std::vector<EnvLobe> lobes;

    Vec3 radiance(const Vec3& w) const;
    nlohmann::json to_json() const;
    static Environment from_json(const nlohmann::json& j);
};

struct AnalyticScene {
    std::string name;
    std::vector<Primitive> primitives;
    Environment env;
    double half_extent = 1.0;

    std::optional<Hit> intersect(const Vec3& o, const Vec3& d, double t_min = 1e-6,
                                 double t_max = std::numeric_limits<double>::infinity()) const;
    bool occluded(const Vec3& x, const Vec3& w) const;
    MaterialSample material(const Hit& hit) const { return primitives[hit.primitive].material.eval(hit.point); }
    std::uint64_t hash() const;
};

/// Built-in scene specs: "sphere", "sphere_pair", "box_checker".
nlohmann::json named_scene_spec(const std::string& name);
AnalyticScene build_analytic_scene(const nlohmann::json& spec);

// ---------------------------------------------------------------------------
// Rendering-equation oracle and pre-integrated light.
// ---------------------------------------------------------------------------

/// Monte-Carlo estimate of the reflected radiance toward v (unit, pointing
/// away from the surface). Each sample picks cosine or GGX sampling and is
/// weighted by the one-sample balance heuristic; occluded directions
/// contribute nothing.
Vec3 oracle_shade(const AnalyticScene& scene, const Vec3& x, const Vec3& n, const Vec3& v, const MaterialSample& beta,
                  const Environment& env, int spp, Rng& rng);

/// l_diff = (1/pi) integral of L(w) max(w.n, 0) dw, numerical quadrature.
Vec3 prefilter_diffuse(const Environment& env, const Vec3& n, int samples = 16384);
/// l_spec: GGX lobe of roughness r about t, normalized (n = v = t prefiltering).
Vec3 prefilter_specular(const Environment& env, const Vec3& t, double roughness, int side = 128);

/// Split-sum radiance with analytic light kernels (no visibility).
Vec3 splitsum_shade(const Environment& env, const Vec3& n, const Vec3& v, const MaterialSample& beta,
                    const MspecLut& lut);

}  // namespace matxfer
