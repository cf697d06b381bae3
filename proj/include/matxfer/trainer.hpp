#pragma once

#include "matxfer/autodiff/adam.hpp"
#include "matxfer/autodiff/gradcheck.hpp"
#include "matxfer/dataset.hpp"
#include "matxfer/render.hpp"

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace matxfer {

struct TrainConfig {
    ModelConfig model;
    int iterations = 20000;
    int batch_rays = 256;  // joint batches split this evenly between the two conditions
    int n_samples = 64;
    std::uint64_t seed = 0;
    double lr_density = 1e-1;
    double lr_grid = 2e-2;  // appearance grid
    double lr_mlp = 1e-3;
    double lr_embed = 1e-3;
    double lr_transform = 1e-3;
    double lr_final_ratio = 0.1;  // exponential decay reaches this fraction at the last iteration
    double w_rf = 1.0;
    double w_pbr = 0.2;
    double w_normal = 5e-3;
    double w_mask = 0.1;  // opacity vs coverage mask
    // Geometry warm-up: for this fraction of the iterations the PBR term is off
    // and the normal term does not reach the density grid.
    double warmup_fraction = 0.1;
    int log_every = 100;
    int val_every = 1000;
    // Ablation switches, recorded in the config hash.
    bool no_reduce_grad = false;
    bool sg_light = false;

    /// Model config with the ablation switches applied.
    ModelConfig effective_model() const;
    ad::AdamHyper adam() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    std::uint64_t hash() const;
};

nlohmann::json model_config_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Checkpoints: "MTX1", version, config hash, seed, kind, config, LUT
// reference, float32 parameter blocks, training log tail.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string kind;  // "joint", "target" or "transform"
    TrainConfig config;
    Model<float> model;
    std::vector<std::string> log_tail;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Pixel pools and losses.
// ---------------------------------------------------------------------------

/// All pixels of a split, flattened: pixel p belongs to view p / (w h).
struct RayPool {
    std::vector<Camera> cameras;
    std::vector<float> rgb;   // 3 per pixel, linear
    std::vector<float> mask;  // 1 per pixel
    int width = 0, height = 0;

    std::size_t size() const { return mask.size(); }
    void gather(const std::vector<std::size_t>& pixels, RayBatch& rays, MatX<double>& rgb_out,
                MatX<double>& mask_out) const;
};

RayPool make_pool(const SceneDataset& ds, bool test_split = false);

struct LossTerms {
    double total = 0, rf = 0, pbr = 0, normal = 0, mask = 0;
};

/// Sub-batch of rays from one condition with its targets.
struct LossBatch {
    RayBatch rays;
    MatX<double> rgb;   // N x 3
    MatX<double> mask;  // N x 1
    int condition = 0;
    double material_alpha = 0;
    const MatX<double>* visibility = nullptr;  // frozen v_t for gradient checks
    std::uint64_t jitter_seed = 0;
    std::uint64_t first_ray_index = 0;
    bool jitter = true;
    bool warmup = false;
};

namespace ad {

/// w_rf masked-MSE(C_RF) + w_pbr masked-MSE(C_PBR) + w_normal (1 - <n, n_grad>)
/// over foreground rays + w_mask MSE(opacity, mask). `weight` scales the
/// sub-batch's share of the full batch.
template <typename Scalar>
Var<Scalar> batch_loss(Tape<Scalar>& tape, const Model<Scalar>& model, const LossBatch& b, const TrainConfig& cfg,
                       double weight, LossTerms* terms = nullptr) {
    const Eigen::Index n = b.rays.size();
    RenderOptions opt;
    opt.march.n_samples = cfg.n_samples;
    opt.march.jitter = b.jitter;
    opt.march.jitter_seed = b.jitter_seed;
    opt.first_ray_index = b.first_ray_index;
    opt.condition = model.config.embeddings ? b.condition : 0;
    opt.material_alpha = b.material_alpha;
    opt.want_normal_grad = cfg.w_normal > 0;
    opt.want_pbr = !b.warmup && cfg.w_pbr > 0;
    opt.visibility = b.visibility;
    const RenderOutput<Scalar> out = render_rays(tape, model, b.rays, opt);

    const double fg = std::max(1.0, b.mask.sum());
    Var<Scalar> m = tape.constant(b.mask.template cast<Scalar>().eval());
    Var<Scalar> ref = tape.constant(b.rgb.template cast<Scalar>().eval());
    const Scalar color_norm = static_cast<Scalar>(weight / (3 * fg));
    Var<Scalar> l_rf = scale(sum(mul(square(sub(out.rf, ref)), m)), color_norm);
    Var<Scalar> l_mask = scale(sum(square(sub(out.opacity, m))), static_cast<Scalar>(weight / n));
    Var<Scalar> total = add(scale(l_rf, static_cast<Scalar>(cfg.w_rf)), scale(l_mask, static_cast<Scalar>(cfg.w_mask)));
    double pbr_value = 0;
    if (opt.want_pbr) {
        Var<Scalar> l_pbr = scale(sum(mul(square(sub(out.pbr, ref)), m)), color_norm);
        total = add(total, scale(l_pbr, static_cast<Scalar>(cfg.w_pbr)));
        pbr_value = static_cast<double>(l_pbr.value()(0, 0));
    }
    double normal_value = 0;
    if (cfg.w_normal > 0) {
        Var<Scalar> ng = b.warmup ? detach(out.normal_grad) : out.normal_grad;
        Var<Scalar> cosv = dot_rows(out.normal, ng);
        Var<Scalar> l_n = scale(sum(mul(Scalar(1) - cosv, m)), static_cast<Scalar>(weight / fg));
        total = add(total, scale(l_n, static_cast<Scalar>(cfg.w_normal)));
        normal_value = static_cast<double>(l_n.value()(0, 0));
    }
    if (terms) {
        terms->rf += static_cast<double>(l_rf.value()(0, 0));
        terms->pbr += pbr_value;
        terms->mask += static_cast<double>(l_mask.value()(0, 0));
        terms->normal += normal_value;
        terms->total += static_cast<double>(total.value()(0, 0));
    }
    return total;
}

}  // namespace ad

/// Finite-difference check of the two-condition loss in double precision:
/// random density, `rays` rays split between the conditions, visibility frozen
/// and reduce-grad off (it rescales gradients by design).
ad::GradCheckResult joint_loss_gradcheck(const TrainConfig& cfg, int rays, std::uint64_t seed,
                                         const ad::GradCheckOptions& opt = {});

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct TrainHooks {
    std::ostream* log = nullptr;  // JSONL: {iter, loss terms, val_psnr}
    std::filesystem::path last_good;  // written when a non-finite loss aborts training
    std::function<void(int, const LossTerms&)> on_log;
};

/// Two-condition training: half of every batch comes from s0 (alpha = 0), half
/// from s1 (alpha = 1, material routed through F).
Checkpoint train_joint(const SceneDataset& s0, const SceneDataset& s1, const TrainConfig& cfg,
                       const TrainHooks& hooks = {});
/// Single-condition training without embeddings or F.
Checkpoint train_target(const SceneDataset& ds, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Target field and light with the source's F attached.
Model<float> apply_transfer(const Checkpoint& target, const Checkpoint& source);

// ---------------------------------------------------------------------------
// Rendering whole views.
// ---------------------------------------------------------------------------

struct ViewRender {
    Image pbr, rf, albedo, roughness, normal, depth, opacity;
};

struct ViewRenderOptions {
    int condition = 0;
    double material_alpha = 0;
    int n_samples = 64;
    int chunk = 1024;
};

ViewRender render_view(const Model<float>& model, const Camera& camera, const ViewRenderOptions& opt);

/// Decoded materials (albedo rgb, roughness) of a model at given points.
MatX<double> query_materials(const Model<float>& model, const MatX<double>& points);

// ---------------------------------------------------------------------------
// Transform fitting.
// ---------------------------------------------------------------------------

struct TransformFitConfig {
    int steps = 20000;
    int batch = 512;
    double lr = 1e-3;
    double lr_final_ratio = 0.05;
    int hidden = 256;
    std::uint64_t seed = 0;
    // Per-channel cross-entropy on the pre-sigmoid outputs; false gives MSE.
    // MSE through the sigmoid stalls on targets at 0 or 1.
    bool cross_entropy = true;
};

using MaterialMap = std::function<MaterialSample(const MaterialSample&)>;

/// Fits F on pairs (beta, target(beta)) with beta uniform in [0, 1]^4.
ad::ParamStore<float> fit_transform_supervised(const MaterialMap& target, const TransformFitConfig& cfg);
/// Fits F on paired rows (N x 4 each) by MSE.
ad::ParamStore<float> fit_transform_pairs(const MatX<double>& beta0, const MatX<double>& beta1,
                                          const TransformFitConfig& cfg);
/// max |F(beta) - target(beta)| over a 17^3 (albedo) x 5 (roughness) grid.
double transform_max_error(const ad::ParamStore<float>& f, const MaterialMap& target);

/// Post-hoc baseline: beta_0, beta_1 queried at surface points of model 0 along
/// the rays of `views` (opacity >= 0.5), then F fitted by least squares.
ad::ParamStore<float> fit_posthoc_transform(const Checkpoint& m0, const Checkpoint& m1,
                                            const std::vector<Camera>& views, const TransformFitConfig& cfg,
                                            int n_samples = 64);

}  // namespace matxfer
