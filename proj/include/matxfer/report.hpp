#pragma once

#include "matxfer/eval.hpp"
#include "matxfer/trainer.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace matxfer {

struct EvalOptions {
    int condition = 0;
    double material_alpha = 0;
    int n_samples = 64;
    bool align_albedo = true;
    int align_stride = 5;  // every k-th train view enters the albedo scale fit
    std::filesystem::path heatmap_dir;  // per-view albedo error maps when non-empty
};

struct EvalResult {
    double psnr_pbr = 0, ssim_pbr = 0;
    double albedo_psnr = 0;      // with alignment when enabled
    double albedo_psnr_raw = 0;  // never aligned
    double roughness_mae = 0;
    double normal_mae_deg = 0;
    std::vector<double> albedo_scale{1, 1, 1};
};

/// Metrics of a model against the test views of `gt` (which supplies images,
/// masks and G-buffers). Needs G-buffers.
EvalResult evaluate_model(const Model<float>& model, const SceneDataset& gt, const EvalOptions& opt);

/// Rows for metrics.csv; `ablation` names the variant.
std::vector<MetricRow> metric_rows(const EvalResult& r, const std::string& source, const std::string& target,
                                   const std::string& transform, double alpha, const std::string& ablation);

// ---------------------------------------------------------------------------
// Ablations: source pair (s0, s1), target scene trained on `target`, evaluated
// against the transformed ground truth `target_gt`.
//   none            joint model's F on the target model
//   no_transfer     target model at alpha = 0
//   no_joint_optim  single-condition models on s0 and s1, F fitted post hoc
//   no_reduce_grad  as none, reduce-grad disabled in both trainings
//   sg_light        as none, parametric lobe light in both trainings
// ---------------------------------------------------------------------------

struct AblationInputs {
    const SceneDataset* s0 = nullptr;
    const SceneDataset* s1 = nullptr;
    const SceneDataset* target = nullptr;
    const SceneDataset* target_gt = nullptr;
    std::string source_name = "source", target_name = "target", transform_name = "T";
};

struct AblationOptions {
    TrainConfig train;
    TransformFitConfig fit;
    std::vector<std::string> variants{"none", "no_joint_optim", "no_transfer"};
    std::filesystem::path work;  // checkpoints, logs, metrics.csv
    bool reuse = false;          // load checkpoints that already exist
    EvalOptions eval;
    std::ostream* progress = nullptr;
};

struct AblationResult {
    std::map<std::string, EvalResult> variants;
    EvalResult source0, source1;  // joint model on its own pair (when trained)
    std::vector<MetricRow> rows;
};

const std::vector<std::string>& known_ablations();
AblationResult run_ablation(const AblationInputs& in, const AblationOptions& opt);

}  // namespace matxfer
