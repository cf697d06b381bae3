#include "matxfer/dataset.hpp"

#include "matxfer/core/hash.hpp"
#include "matxfer/core/parallel.hpp"
#include "matxfer/version.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>

namespace matxfer {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t file_hash(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path.string());
    const std::string bytes(std::istreambuf_iterator<char>(is), {});
    return fnv1a(bytes);
}

namespace {

std::string numbered(const char* stem, int k, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03d.%s", stem, k, ext);
    return buf;
}

json mat4_json(const Mat4& m) {
    json a = json::array();
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
    return a;
}

Mat4 mat4_of(const json& a) {
    if (!a.is_array() || a.size() != 16) throw IoError("pose matrix must have 16 entries");
    Mat4 m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = a[r * 4 + c].get<double>();
    return m;
}

View render_view(const AnalyticScene& scene, const Environment& env, const Camera& cam, int index,
                 const DatasetSpec& spec, int condition) {
    const int w = cam.intr.width, h = cam.intr.height;
    View v;
    v.index = index;
    v.camera = cam;
    v.rgb = Image(w, h, 3);
    v.mask = Image(w, h, 1);
    v.albedo = Image(w, h, 3);
    v.roughness = Image(w, h, 1);
    v.normal = Image(w, h, 3);
    v.depth = Image(w, h, 1);
    const Vec3 o = cam.origin();
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
        const int py = static_cast<int>(row);
        for (int px = 0; px < w; ++px) {
            const Vec3 d = cam.pixel_dir(px, py);
            const auto hit = scene.intersect(o, d);
            if (!hit) continue;
            MaterialSample beta = scene.material(*hit);
            if (condition == 1 && spec.transform)
                beta = blend_intensity(beta, apply_named_transform(*spec.transform, beta, spec.constants), spec.alpha);
            // The pixel stream is shared by both conditions: alpha = 0 renders bit-identical images.
            Rng rng(spec.seed, (static_cast<std::uint64_t>(index) * h + py) * w + px);
            const Vec3 c = oracle_shade(scene, hit->point, hit->normal, -d, beta, env, spec.spp, rng);
            for (int k = 0; k < 3; ++k) {
                v.rgb.at(px, py, k) = static_cast<float>(c[k]);
                v.albedo.at(px, py, k) = static_cast<float>(beta.albedo[k]);
                v.normal.at(px, py, k) = static_cast<float>(hit->normal[k]);
            }
            v.mask.at(px, py) = 1.0f;
            v.roughness.at(px, py) = static_cast<float>(beta.roughness);
            v.depth.at(px, py) = static_cast<float>(hit->t);
        }
    });
    return v;
}

json spec_json(const DatasetSpec& spec) {
    json j;
    j["scene"] = spec.scene;
    j["transform"] = spec.transform ? to_string(*spec.transform) : "none";
    j["alpha"] = spec.alpha;
    j["constants"] = {{"red", {spec.constants.red.x(), spec.constants.red.y(), spec.constants.red.z()}},
                      {"sand", {spec.constants.sand.x(), spec.constants.sand.y(), spec.constants.sand.z()}}};
    j["poses"] = {{"views", spec.poses.views}, {"radius", spec.poses.radius}, {"fov_deg", spec.poses.fov_deg},
                  {"resolution", spec.poses.resolution}, {"test_every", spec.poses.test_every}};
    j["spp"] = spec.spp;
    j["seed"] = spec.seed;
    if (spec.env1) j["env1"] = spec.env1->to_json();
    return j;
}

}  // namespace

SceneDataset render_condition(const DatasetSpec& spec, int condition) {
    if (condition != 0 && condition != 1) throw ConfigError("condition must be 0 or 1");
    if (condition == 1 && !spec.transform) throw ConfigError("condition 1 requires a transform");
    if (!(spec.alpha >= 0 && spec.alpha <= 1)) throw ConfigError("alpha must lie in [0, 1]");
    if (spec.spp < 1) throw ConfigError("spp must be >= 1");
    const AnalyticScene scene = build_analytic_scene(spec.scene);
    const Environment env = condition == 1 && spec.env1 ? *spec.env1 : scene.env;
    const std::vector<Camera> cams = hemisphere_cameras(spec.poses);
    SceneDataset ds;
    ds.condition = condition;
    ds.intrinsics = cams.front().intr;
    for (int i = 0; i < static_cast<int>(cams.size()); ++i) {
        View v = render_view(scene, env, cams[i], i, spec, condition);
        (is_test_view(i, spec.poses) ? ds.test : ds.train).push_back(std::move(v));
    }
    ds.manifest = {{"format", "matxfer-dataset"},
                   {"version", 1},
                   {"tool_version", kVersion},
                   {"scene", scene.name},
                   {"scene_hash", hex64(scene.hash())},
                   {"condition", condition},
                   {"transform", condition == 1 ? to_string(*spec.transform) : "none"},
                   {"alpha", condition == 1 ? spec.alpha : 0.0},
                   {"seed", spec.seed},
                   {"spp", spec.spp},
                   {"env", env.to_json()},
                   {"counts", {{"train", ds.train.size()}, {"test", ds.test.size()}}}};
    return ds;
}

void write_dataset(const SceneDataset& ds, const json& config, const fs::path& dir) {
    fs::create_directories(dir / "train");
    fs::create_directories(dir / "test");
    std::map<std::string, std::string> files;
    auto record = [&](const std::string& rel) { files[rel] = hex64(file_hash(dir / rel)); };

    json frames = json::array();
    auto write_split = [&](const std::vector<View>& views, const char* split) {
        for (std::size_t k = 0; k < views.size(); ++k) {
            const View& v = views[k];
            const std::string base = std::string(split) + "/";
            const int ki = static_cast<int>(k);
            write_png(dir / (base + numbered("img", ki, "png")), v.rgb, true);
            write_png(dir / (base + numbered("mask", ki, "png")), v.mask, false);
            record(base + numbered("img", ki, "png"));
            record(base + numbered("mask", ki, "png"));
            if (ds.has_gbuffers) {
                const std::pair<const char*, const Image*> gb[] = {
                    {"gt_albedo", &v.albedo}, {"gt_rough", &v.roughness}, {"gt_normal", &v.normal}, {"gt_depth", &v.depth}};
                for (const auto& [stem, img] : gb) {
                    write_pfm(dir / (base + numbered(stem, ki, "pfm")), *img);
                    record(base + numbered(stem, ki, "pfm"));
                }
            }
            frames.push_back({{"index", v.index}, {"split", split}, {"file", base + numbered("img", ki, "png")},
                              {"c2w", mat4_json(v.camera.c2w)}});
        }
    };
    write_split(ds.train, "train");
    write_split(ds.test, "test");

    const Intrinsics& k = ds.intrinsics;
    const json poses = {{"convention", "opengl"},
                        {"intrinsics", {{"width", k.width}, {"height", k.height}, {"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}},
                        {"frames", frames}};
    {
        std::ofstream os(dir / "poses.json");
        os << poses.dump(2) << '\n';
        if (!os) throw IoError("write failed for " + (dir / "poses.json").string());
    }
    record("poses.json");
    {
        std::ofstream os(dir / "config.json");
        os << json{{"tool_version", kVersion}, {"config", config}}.dump(2) << '\n';
    }

    json manifest = ds.manifest;
    manifest["gbuffers"] = ds.has_gbuffers;
    manifest["files"] = files;
    std::string all;
    for (const auto& [rel, h] : files) all += rel + ' ' + h + '\n';
    manifest["checksum"] = hex64(fnv1a(all));
    std::ofstream os(dir / "manifest.json");
    os << manifest.dump(2) << '\n';
    if (!os) throw IoError("write failed for " + (dir / "manifest.json").string());
}

void generate_dataset(const DatasetSpec& spec, const fs::path& out_dir) {
    const bool existed = fs::exists(out_dir);
    try {
        const json config = spec_json(spec);
        if (!spec.transform) {
            write_dataset(render_condition(spec, 0), config, out_dir);
            return;
        }
        write_dataset(render_condition(spec, 0), config, out_dir / "s0");
        write_dataset(render_condition(spec, 1), config, out_dir / "s1");
        const AnalyticScene scene = build_analytic_scene(spec.scene);
        const json pair = {{"format", "matxfer-pair"},
                           {"s0", "s0"},
                           {"s1", "s1"},
                           {"transform", to_string(*spec.transform)},
                           {"alpha", spec.alpha},
                           {"env0", scene.env.to_json()},
                           {"env1", (spec.env1 ? *spec.env1 : scene.env).to_json()}};
        std::ofstream os(out_dir / "pair.json");
        os << pair.dump(2) << '\n';
        if (!os) throw IoError("write failed for " + (out_dir / "pair.json").string());
    } catch (...) {
        std::error_code ec;
        if (!existed) fs::remove_all(out_dir, ec);
        throw;
    }
}

SceneDataset load_dataset(const fs::path& dir) {
    SceneDataset ds;
    {
        std::ifstream is(dir / "manifest.json");
        if (!is) throw IoError("missing manifest.json in " + dir.string());
        try {
            ds.manifest = json::parse(is);
        } catch (const json::exception& e) {
            throw IoError("malformed manifest " + (dir / "manifest.json").string() + ": " + e.what());
        }
    }
    const json& files = ds.manifest.at("files");
    std::string all;
    for (const auto& [rel, h] : files.items()) all += rel + ' ' + h.get<std::string>() + '\n';
    if (hex64(fnv1a(all)) != ds.manifest.value("checksum", "")) throw IoError("manifest checksum mismatch in " + dir.string());

    ds.has_gbuffers = ds.manifest.value("gbuffers", false);
    for (const auto& [rel, h] : files.items()) {
        const fs::path p = dir / rel;
        const bool gbuffer = rel.find("/gt_") != std::string::npos;
        if (gbuffer && !fs::exists(p)) {
            if (ds.has_gbuffers) std::cerr << "warning: G-buffers missing in " << dir << "; evaluation features disabled\n";
            ds.has_gbuffers = false;
            continue;
        }
        if (hex64(file_hash(p)) != h.get<std::string>()) throw IoError("checksum mismatch for " + p.string());
    }
    ds.condition = ds.manifest.value("condition", 0);

    std::ifstream is(dir / "poses.json");
    if (!is) throw IoError("missing poses.json in " + dir.string());
    const json poses = json::parse(is);
    const json& k = poses.at("intrinsics");
    ds.intrinsics.width = k.at("width");
    ds.intrinsics.height = k.at("height");
    ds.intrinsics.fx = k.at("fx");
    ds.intrinsics.fy = k.at("fy");
    ds.intrinsics.cx = k.at("cx");
    ds.intrinsics.cy = k.at("cy");
    std::map<std::string, int> counters;
    for (const auto& f : poses.at("frames")) {
        View v;
        v.index = f.at("index");
        v.camera.intr = ds.intrinsics;
        v.camera.c2w = mat4_of(f.at("c2w"));
        const std::string split = f.at("split");
        const int kk = counters[split]++;
        const fs::path base = dir / split;
        v.rgb = read_png(base / numbered("img", kk, "png"), true);
        v.mask = read_png(base / numbered("mask", kk, "png"), false);
        for (float& m : v.mask.data) m = m >= 0.5f ? 1.0f : 0.0f;
        if (ds.has_gbuffers) {
            v.albedo = read_pfm(base / numbered("gt_albedo", kk, "pfm"));
            v.roughness = read_pfm(base / numbered("gt_rough", kk, "pfm"));
            v.normal = read_pfm(base / numbered("gt_normal", kk, "pfm"));
            v.depth = read_pfm(base / numbered("gt_depth", kk, "pfm"));
        }
        (split == "test" ? ds.test : ds.train).push_back(std::move(v));
    }
    return ds;
}

}  // namespace matxfer
