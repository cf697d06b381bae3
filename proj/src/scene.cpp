#include "matxfer/scene.hpp"

#include "matxfer/core/hash.hpp"

#include <algorithm>
#include <cmath>

namespace matxfer {

using nlohmann::json;

MaterialSample MaterialRule::eval(const Vec3& p) const {
    switch (kind) {
        case Kind::Constant: return a;
        case Kind::Checker: {
            const long parity = static_cast<long>(std::floor(p.x() / cell)) + static_cast<long>(std::floor(p.y() / cell)) +
                                static_cast<long>(std::floor(p.z() / cell));
            return (parity & 1) ? b : a;
        }
        case Kind::Radial: {
            const double t = std::clamp((p - center).norm() / radius, 0.0, 1.0);
            return blend_intensity(a, b, t);
        }
    }
    return a;
}

bool Primitive::intersect(const Vec3& o, const Vec3& d, double t_min, double t_max, Hit& hit) const {
    switch (kind) {
        case Kind::Sphere: {
            const Vec3 oc = o - center;
            const double b = oc.dot(d);
            const double c = oc.squaredNorm() - radius * radius;
            const double disc = b * b - c;
            if (disc < 0) return false;
            const double sq = std::sqrt(disc);
            double t = -b - sq;
            if (!(t > t_min)) t = -b + sq;
            if (!(t > t_min && t < t_max)) return false;
            hit.t = t;
            hit.point = o + t * d;
            hit.normal = (hit.point - center).normalized();
            return true;
        }
        case Kind::Box: {
            double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
            int a0 = 0, a1 = 0;
            for (int a = 0; a < 3; ++a) {
                const double lo = center[a] - half[a], hi = center[a] + half[a];
                if (std::abs(d[a]) < 1e-15) {
                    if (o[a] < lo || o[a] > hi) return false;
                    continue;
                }
                double ta = (lo - o[a]) / d[a], tb = (hi - o[a]) / d[a];
                if (ta > tb) std::swap(ta, tb);
                if (ta > t0) t0 = ta, a0 = a;
                if (tb < t1) t1 = tb, a1 = a;
            }
            if (t0 > t1) return false;
            double t;
            int axis;
            if (t0 > t_min) t = t0, axis = a0;
            else t = t1, axis = a1;
            if (!(t > t_min && t < t_max)) return false;
            hit.t = t;
            hit.point = o + t * d;
            hit.normal = Vec3::Zero();
            hit.normal[axis] = hit.point[axis] > center[axis] ? 1.0 : -1.0;
            return true;
        }
        case Kind::Plane: {
            const double dn = normal.dot(d);
            if (std::abs(dn) < 1e-15) return false;
            const double t = (offset - normal.dot(o)) / dn;
            if (!(t > t_min && t < t_max)) return false;
            const Vec3 p = o + t * d;
            if (((p - center).cwiseAbs() - half).maxCoeff() > 0) return false;
            hit.t = t;
            hit.point = p;
            hit.normal = dn < 0 ? normal : Vec3(-normal);
            return true;
        }
    }
    return false;
}

Vec3 Environment::radiance(const Vec3& w) const {
    Vec3 l = constant;
    for (const auto& lobe : lobes) l += lobe.intensity * std::exp(lobe.kappa * (w.dot(lobe.direction) - 1));
    return l;
}

namespace {

Vec3 vec3_of(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + " must be a 3-vector");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json json_of(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

MaterialSample material_of(const json& j) {
    MaterialSample m{vec3_of(j.at("albedo"), "albedo"), j.at("roughness").get<double>()};
    if (m.clamped() != m) throw ConfigError("material values must lie in [0, 1]");
    return m;
}

MaterialRule rule_of(const json& j) {
    MaterialRule r;
    const std::string kind = j.at("rule").get<std::string>();
    r.a = material_of(j.at("a"));
    if (kind == "constant") {
        r.kind = MaterialRule::Kind::Constant;
        r.b = r.a;
    } else if (kind == "checker") {
        r.kind = MaterialRule::Kind::Checker;
        r.b = material_of(j.at("b"));
        r.cell = j.value("cell", 0.25);
        if (!(r.cell > 0)) throw ConfigError("checker cell must be positive");
    } else if (kind == "radial") {
        r.kind = MaterialRule::Kind::Radial;
        r.b = material_of(j.at("b"));
        r.center = vec3_of(j.at("center"), "radial center");
        r.radius = j.at("radius").get<double>();
        if (!(r.radius > 0)) throw ConfigError("radial radius must be positive");
    } else {
        throw ConfigError("unknown material rule '" + kind + "'");
    }
    return r;
}

json material_json(const Vec3& albedo, double rough) { return {{"albedo", json_of(albedo)}, {"roughness", rough}}; }

}  // namespace

json Environment::to_json() const {
    json lobes_j = json::array();
    for (const auto& l : lobes)
        lobes_j.push_back({{"direction", json_of(l.direction)}, {"kappa", l.kappa}, {"intensity", json_of(l.intensity)}});
    return {{"constant", json_of(constant)}, {"lobes", lobes_j}};
}

Environment Environment::from_json(const json& j) {
    Environment e;
    e.constant = vec3_of(j.at("constant"), "env constant");
    for (const auto& l : j.value("lobes", json::array())) {
        EnvLobe lobe;
        lobe.direction = vec3_of(l.at("direction"), "lobe direction").normalized();
        lobe.kappa = l.at("kappa").get<double>();
        lobe.intensity = vec3_of(l.at("intensity"), "lobe intensity");
        if (!(lobe.kappa > 0)) throw ConfigError("lobe kappa must be positive");
        e.lobes.push_back(lobe);
    }
    if (e.lobes.size() > 4) throw ConfigError("at most 4 environment lobes");
    if (e.constant.minCoeff() < 0) throw ConfigError("environment radiance must be non-negative");
    return e;
}

std::optional<Hit> AnalyticScene::intersect(const Vec3& o, const Vec3& d, double t_min, double t_max) const {
    std::optional<Hit> best;
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        Hit h;
        if (primitives[i].intersect(o, d, t_min, best ? best->t : t_max, h)) {
            h.primitive = static_cast<int>(i);
            best = h;
        }
    }
    return best;
}

bool AnalyticScene::occluded(const Vec3& x, const Vec3& w) const {
    Hit h;
    for (const auto& p : primitives)
        if (p.intersect(x, w, 1e-5, std::numeric_limits<double>::infinity(), h)) return true;
    return false;
}

std::uint64_t AnalyticScene::hash() const {
    json j;
    j["name"] = name;
    j["env"] = env.to_json();
    j["half_extent"] = half_extent;
    json prims = json::array();
    for (const auto& p : primitives) {
        const auto& m = p.material;
        prims.push_back({{"kind", static_cast<int>(p.kind)}, {"center", json_of(p.center)}, {"radius", p.radius},
                         {"half", json_of(p.half)}, {"normal", json_of(p.normal)}, {"offset", p.offset},
                         {"rule", static_cast<int>(m.kind)}, {"a", material_json(m.a.albedo, m.a.roughness)},
                         {"b", material_json(m.b.albedo, m.b.roughness)}, {"cell", m.cell},
                         {"mcenter", json_of(m.center)}, {"mradius", m.radius}});
    }
    j["primitives"] = prims;
    return fnv1a(j.dump());
}

json named_scene_spec(const std::string& name) {
    const json env = {{"constant", {0.35, 0.35, 0.38}},
                      {"lobes", json::array({{{"direction", {0.4, 0.3, 0.85}}, {"kappa", 12.0}, {"intensity", {2.5, 2.3, 2.0}}}})}};
    if (name == "sphere") {
        return {{"name", name}, {"half_extent", 1.0}, {"env", env},
                {"primitives", json::array({{{"type", "sphere"}, {"center", {0, 0, 0}}, {"radius", 0.6},
                                             {"material", {{"rule", "constant"}, {"a", material_json({0.6, 0.5, 0.4}, 0.3)}}}}})}};
    }
    if (name == "sphere_pair") {
        const json radial = {{"rule", "radial"}, {"a", material_json({0.85, 0.6, 0.3}, 0.25)},
                             {"b", material_json({0.3, 0.5, 0.8}, 0.6)}, {"center", {-0.42, 0.0, 0.38}}, {"radius", 0.7}};
        const json checker = {{"rule", "checker"}, {"a", material_json({0.8, 0.8, 0.75}, 0.4)},
                              {"b", material_json({0.2, 0.55, 0.3}, 0.7)}, {"cell", 0.2}};
        return {{"name", name}, {"half_extent", 1.0}, {"env", env},
                {"primitives", json::array({{{"type", "sphere"}, {"center", {-0.42, 0.0, 0.0}}, {"radius", 0.38}, {"material", radial}},
                                            {{"type", "sphere"}, {"center", {0.42, 0.0, 0.0}}, {"radius", 0.38}, {"material", checker}}})}};
    }
    if (name == "box_checker") {
        const json checker = {{"rule", "checker"}, {"a", material_json({0.75, 0.55, 0.3}, 0.35)},
                              {"b", material_json({0.3, 0.45, 0.75}, 0.6)}, {"cell", 0.3}};
        return {{"name", name}, {"half_extent", 1.0}, {"env", env},
                {"primitives", json::array({{{"type", "box"}, {"center", {0, 0, 0}}, {"half", {0.45, 0.45, 0.45}}, {"material", checker}}})}};
    }
    throw ConfigError("unknown scene '" + name + "' (expected sphere, sphere_pair or box_checker)");
}

AnalyticScene build_analytic_scene(const json& spec) {
    AnalyticScene s;
    try {
        s.name = spec.at("name").get<std::string>();
        s.half_extent = spec.value("half_extent", 1.0);
        s.env = Environment::from_json(spec.at("env"));
        for (const auto& pj : spec.at("primitives")) {
            Primitive p;
            const std::string type = pj.at("type").get<std::string>();
            if (type == "sphere") {
                p.kind = Primitive::Kind::Sphere;
                p.center = vec3_of(pj.at("center"), "center");
                p.radius = pj.at("radius").get<double>();
                if (!(p.radius > 0)) throw ConfigError("sphere radius must be positive");
                if ((p.center.cwiseAbs().array() + p.radius).maxCoeff() > s.half_extent)
                    throw ConfigError("sphere leaves the scene box");
            } else if (type == "box") {
                p.kind = Primitive::Kind::Box;
                p.center = vec3_of(pj.at("center"), "center");
                p.half = vec3_of(pj.at("half"), "half");
                if (p.half.minCoeff() <= 0) throw ConfigError("box half extents must be positive");
                if ((p.center.cwiseAbs() + p.half).maxCoeff() > s.half_extent) throw ConfigError("box leaves the scene box");
            } else if (type == "plane") {
                p.kind = Primitive::Kind::Plane;
                p.normal = vec3_of(pj.at("normal"), "normal").normalized();
                p.offset = pj.at("offset").get<double>();
                p.center = vec3_of(pj.value("center", json::array({0, 0, 0})), "center");
                p.half = vec3_of(pj.value("half", json::array({s.half_extent, s.half_extent, s.half_extent})), "half");
            } else {
                throw ConfigError("unknown primitive type '" + type + "'");
            }
            p.material = rule_of(pj.at("material"));
            s.primitives.push_back(p);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scene spec: ") + e.what());
    }
    if (s.primitives.empty()) throw ConfigError("scene has no primitives");
    return s;
}

// ---------------------------------------------------------------------------

Vec3 oracle_shade(const AnalyticScene& scene, const Vec3& x, const Vec3& n, const Vec3& v, const MaterialSample& beta,
                  const Environment& env, int spp, Rng& rng) {
    if (spp < 1) throw ConfigError("oracle spp must be >= 1");
    const double nv = n.dot(v);
    if (nv <= 0) return Vec3::Zero();
    const double alpha = ggx_alpha(beta.roughness);
    // Strategy selection by the rough split of reflected energy.
    const double spec_w = kDielectricF0 + (1 - kDielectricF0) * schlick_weight(nv);
    const double p_spec = std::clamp(spec_w / (spec_w + beta.albedo.mean()), 0.1, 0.9);
    Vec3 acc = Vec3::Zero();
    for (int k = 0; k < spp; ++k) {
        const double pick = rng.uniform(), u1 = rng.uniform(), u2 = rng.uniform();
        const Vec3 w = pick < p_spec ? reflect(v, sample_ggx_half(n, alpha, u1, u2)) : sample_cosine_hemisphere(n, u1, u2);
        const double nw = n.dot(w);
        if (nw <= 0) continue;
        const Vec3 h = (w + v).normalized();
        const double vh = std::max(v.dot(h), kMinCosine);
        // One-sample balance heuristic over both strategies.
        const double pdf = (1 - p_spec) * nw / kPi + p_spec * ggx_half_pdf(n.dot(h), alpha) / (4 * vh);
        if (!(pdf > 0)) continue;
        if (scene.occluded(x, w)) continue;
        acc += microfacet_brdf(w, v, n, beta).cwiseProduct(env.radiance(w)) * (nw / pdf);
    }
    return acc / spp;
}

Vec3 prefilter_diffuse(const Environment& env, const Vec3& n, int samples) {
    const std::vector<Vec3> dirs = fibonacci_sphere(samples);
    Vec3 acc = Vec3::Zero();
    for (const Vec3& w : dirs) {
        const double c = w.dot(n);
        if (c > 0) acc += env.radiance(w) * c;
    }
    return acc * (4.0 / samples);  // (1/pi) * (4 pi / N)
}

Vec3 prefilter_specular(const Environment& env, const Vec3& t, double roughness, int side) {
    const double alpha = ggx_alpha(roughness);
    Vec3 acc = Vec3::Zero();
    double wsum = 0;
    for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j) {
            const Vec3 h = sample_ggx_half(t, alpha, (i + 0.5) / side, (j + 0.5) / side);
            const Vec3 l = reflect(t, h);
            const double c = l.dot(t);
            if (c <= 0) continue;
            acc += env.radiance(l) * c;
            wsum += c;
        }
    return wsum > 0 ? Vec3(acc / wsum) : Vec3::Zero();
}

Vec3 splitsum_shade(const Environment& env, const Vec3& n, const Vec3& v, const MaterialSample& beta,
                    const MspecLut& lut) {
    const double nv = std::max(n.dot(v), kMinCosine);
    const Vec3 t = reflect(v, n).normalized();
    const double m = lut.mspec(nv, beta.roughness);
    return shade_splitsum(beta, Vec3::Constant(m), prefilter_diffuse(env, n), prefilter_specular(env, t, beta.roughness));
}

}  // namespace matxfer
