#include "matxfer/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>

namespace matxfer {

EvalResult evaluate_model(const Model<float>& model, const SceneDataset& gt, const EvalOptions& opt) {
    if (!gt.has_gbuffers) throw ContractError("evaluation needs ground-truth G-buffers");
    if (gt.test.empty()) throw ContractError("evaluation needs test views");
    ViewRenderOptions ro;
    ro.condition = opt.condition;
    ro.material_alpha = opt.material_alpha;
    ro.n_samples = opt.n_samples;

    EvalResult res;
    if (opt.align_albedo) {
        std::vector<Image> pred;
        std::vector<const Image*> p, r, m;
        const int stride = std::max(1, opt.align_stride);
        for (std::size_t i = 0; i < gt.train.size(); i += static_cast<std::size_t>(stride))
            pred.push_back(render_view(model, gt.train[i].camera, ro).albedo);
        for (std::size_t k = 0; k < pred.size(); ++k) {
            const View& v = gt.train[k * static_cast<std::size_t>(stride)];
            p.push_back(&pred[k]);
            r.push_back(&v.albedo);
            m.push_back(&v.mask);
        }
        res.albedo_scale = albedo_scale(p, r, m);
    }

    double a = 0, araw = 0, pp = 0, ss = 0, rough = 0, nmae = 0;
    for (const View& v : gt.test) {
        const ViewRender out = render_view(model, v.camera, ro);
        const Image aligned = apply_scale(out.albedo, res.albedo_scale);
        a += psnr(aligned, v.albedo, &v.mask);
        araw += psnr(out.albedo, v.albedo, &v.mask);
        pp += psnr(out.pbr, v.rgb);
        ss += ssim(out.pbr, v.rgb);
        double re = 0;
        std::size_t n = 0;
        for (int y = 0; y < v.mask.height; ++y)
            for (int x = 0; x < v.mask.width; ++x)
                if (v.mask.at(x, y) > 0.5f) {
                    re += std::abs(static_cast<double>(out.roughness.at(x, y)) - v.roughness.at(x, y));
                    ++n;
                }
        rough += n ? re / static_cast<double>(n) : 0.0;
        nmae += mae_normals(out.normal, v.normal, v.mask);
        if (!opt.heatmap_dir.empty())
            write_heatmap_csv(error_map(aligned, v.albedo, v.mask),
                              opt.heatmap_dir / ("albedo_err_" + std::to_string(v.index) + ".csv"));
    }
    const double n = static_cast<double>(gt.test.size());
    res.albedo_psnr = a / n;
    res.albedo_psnr_raw = araw / n;
    res.psnr_pbr = pp / n;
    res.ssim_pbr = ss / n;
    res.roughness_mae = rough / n;
    res.normal_mae_deg = nmae / n;
    return res;
}

std::vector<MetricRow> metric_rows(const EvalResult& r, const std::string& source, const std::string& target,
                                   const std::string& transform, double alpha, const std::string& ablation) {
    auto row = [&](const char* metric, double value) {
        return MetricRow{source, target, transform, alpha, metric, value, ablation};
    };
    return {row("psnr", r.psnr_pbr),
            row("ssim", r.ssim_pbr),
            row("albedo_psnr", r.albedo_psnr),
            row("albedo_psnr_raw", r.albedo_psnr_raw),
            row("roughness_mae", r.roughness_mae),
            row("normal_mae_deg", r.normal_mae_deg)};
}

}  // namespace matxfer

namespace matxfer {

const std::vector<std::string>& known_ablations() {
    static const std::vector<std::string> names{"none", "no_transfer", "no_joint_optim", "no_reduce_grad", "sg_light"};
    return names;
}

AblationResult run_ablation(const AblationInputs& in, const AblationOptions& opt) {
    if (!in.s0 || !in.s1 || !in.target || !in.target_gt) throw ContractError("run_ablation: missing dataset");
    for (const auto& v : opt.variants)
        if (std::find(known_ablations().begin(), known_ablations().end(), v) == known_ablations().end())
            throw ConfigError("unknown ablation '" + v + "'");
    std::filesystem::create_directories(opt.work);
    std::ofstream log(opt.work / "train_log.jsonl");
    TrainHooks hooks;
    hooks.log = &log;
    auto note = [&](const std::string& s) {
        if (opt.progress) *opt.progress << s << std::endl;
    };
    auto cached = [&](const std::string& name, const std::function<Checkpoint()>& train) {
        const auto path = opt.work / (name + ".ckpt");
        if (opt.reuse && std::filesystem::exists(path)) return load_checkpoint(path);
        note("training " + name);
        log << nlohmann::json{{"run", name}}.dump() << "\n";
        hooks.last_good = opt.work / (name + ".last_good.ckpt");
        Checkpoint c = train();
        save_checkpoint(c, path);
        return c;
    };
    auto wants = [&](const char* v) {
        return std::find(opt.variants.begin(), opt.variants.end(), v) != opt.variants.end();
    };

    AblationResult out;
    EvalOptions at1 = opt.eval, at0 = opt.eval;
    at1.material_alpha = 1;
    at1.condition = 0;
    at0.material_alpha = 0;
    at0.condition = 0;
    auto record = [&](const std::string& variant, const EvalResult& r, double alpha) {
        out.variants[variant] = r;
        const auto rows = metric_rows(r, in.source_name, in.target_name, in.transform_name, alpha, variant);
        out.rows.insert(out.rows.end(), rows.begin(), rows.end());
    };

    std::optional<Checkpoint> target;
    if (wants("none") || wants("no_transfer") || wants("no_joint_optim"))
        target = cached("target", [&] { return train_target(*in.target, opt.train, hooks); });
    if (wants("none")) {
        const Checkpoint joint = cached("joint", [&] { return train_joint(*in.s0, *in.s1, opt.train, hooks); });
        note("evaluating none");
        record("none", evaluate_model(apply_transfer(*target, joint), *in.target_gt, at1), 1);
        EvalOptions src1 = at0;
        src1.condition = 1;
        src1.material_alpha = 1;
        out.source0 = evaluate_model(joint.model, *in.s0, at0);
        out.source1 = evaluate_model(joint.model, *in.s1, src1);
        auto rows = metric_rows(out.source0, in.source_name, in.source_name, in.transform_name, 0, "source_fit");
        out.rows.insert(out.rows.end(), rows.begin(), rows.end());
        rows = metric_rows(out.source1, in.source_name, in.source_name, in.transform_name, 1, "source_fit");
        out.rows.insert(out.rows.end(), rows.begin(), rows.end());
    }
    if (wants("no_transfer")) {
        note("evaluating no_transfer");
        record("no_transfer", evaluate_model(target->model, *in.target_gt, at0), 0);
    }
    if (wants("no_joint_optim")) {
        const Checkpoint m0 = cached("single_s0", [&] { return train_target(*in.s0, opt.train, hooks); });
        const Checkpoint m1 = cached("single_s1", [&] { return train_target(*in.s1, opt.train, hooks); });
        std::vector<Camera> cams;
        for (const auto& v : in.s0->train) cams.push_back(v.camera);
        TransformFitConfig fit = opt.fit;
        fit.hidden = opt.train.model.transform_hidden;
        note("fitting post-hoc transform");
        const auto f = fit_posthoc_transform(m0, m1, cams, fit, opt.train.n_samples);
        Model<float> m = target->model;
        m.config.transform = true;
        m.config.transform_hidden = fit.hidden;
        m.params.merge_prefix(f, std::string(transform_blocks::kPrefix) + ".");
        note("evaluating no_joint_optim");
        record("no_joint_optim", evaluate_model(m, *in.target_gt, at1), 1);
    }
    for (const char* flag : {"no_reduce_grad", "sg_light"}) {
        if (!wants(flag)) continue;
        TrainConfig cfg = opt.train;
        if (std::string(flag) == "no_reduce_grad") cfg.no_reduce_grad = true;
        else cfg.sg_light = true;
        const Checkpoint j = cached(std::string("joint_") + flag, [&] { return train_joint(*in.s0, *in.s1, cfg, hooks); });
        const Checkpoint t = cached(std::string("target_") + flag, [&] { return train_target(*in.target, cfg, hooks); });
        note(std::string("evaluating ") + flag);
        record(flag, evaluate_model(apply_transfer(t, j), *in.target_gt, at1), 1);
    }
    write_metrics_csv(out.rows, opt.work / "metrics.csv");
    return out;
}

}  // namespace matxfer
