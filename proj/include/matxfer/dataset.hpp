#pragma once

#include "matxfer/camera.hpp"
#include "matxfer/image.hpp"
#include "matxfer/scene.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace matxfer {

struct DatasetSpec {
    nlohmann::json scene;  // analytic scene spec, see named_scene_spec
    std::optional<TransformTag> transform;
    double alpha = 1.0;
    TransformConstants constants;
    PoseProtocol poses;
    int spp = 256;
    std::uint64_t seed = 0;
    std::optional<Environment> env1;  // second-condition light; defaults to the scene's
};

struct View {
    int index = 0;  // position in the full pose sequence
    Camera camera;
    Image rgb;   // linear, 3 channels
    Image mask;  // 1 channel, {0, 1}
    // Ground-truth G-buffers; empty images when absent.
    Image albedo, roughness, normal, depth;
};

struct SceneDataset {
    nlohmann::json manifest;
    Intrinsics intrinsics;
    std::vector<View> train, test;
    bool has_gbuffers = true;
    int condition = 0;
};

/// One condition of a dataset rendered in memory. condition 1 applies
/// blend_intensity(beta, T(beta), alpha) and uses env1 when given.
SceneDataset render_condition(const DatasetSpec& spec, int condition);

/// Writes a dataset. Without a transform the layout sits directly in out_dir;
/// with one, conditions go to out_dir/s0 and out_dir/s1 next to pair.json.
void generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);
void write_dataset(const SceneDataset& ds, const nlohmann::json& config, const std::filesystem::path& dir);

/// Reads and verifies a dataset directory (one condition).
SceneDataset load_dataset(const std::filesystem::path& dir);

std::uint64_t file_hash(const std::filesystem::path& path);

}  // namespace matxfer
