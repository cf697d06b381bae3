// matxfer command-line tool.
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
// MATXFER_THREADS=1 (or --threads 1) gives bit-reproducible outputs.

#include "matxfer/dataset.hpp"
#include "matxfer/report.hpp"
#include "matxfer/trainer.hpp"
#include "matxfer/version.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace matxfer;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt_alpha(double a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", a);
    return buf;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream os(p);
    os << s;
    if (!os) throw IoError("write failed for " + p.string());
}

// Resolved config and tool version next to every output. The TOML part loads
// back through --config.
void echo_config(const CLI::App& app, const fs::path& dir, const json& extra = {}) {
    fs::create_directories(dir);
    const CLI::App* sub = app.get_subcommands().at(0);
    std::ostringstream toml;
    toml << "# matxfer " << kVersion << "\n";
    if (const auto* t = app.get_option("--threads"); t->count() > 0) toml << "threads=" << t->as<int>() << "\n";
    toml << "[" << sub->get_name() << "]\n";
    std::istringstream lines(sub->config_to_str(true, false));
    for (std::string l; std::getline(lines, l);)
        if (l.size() < 3 || l.compare(l.size() - 3, 3, "=\"\"") != 0) toml << l << "\n";  // unset paths
    write_text(dir / "resolved_config.toml", toml.str());
    json j{{"tool_version", kVersion}, {"command", sub->get_name()}};
    if (!extra.is_null()) j["config"] = extra;
    write_text(dir / "run.json", j.dump(2) + "\n");
}

void add_train_options(CLI::App* s, TrainConfig& c) {
    s->add_option("--iterations", c.iterations)->capture_default_str()->check(CLI::NonNegativeNumber);
    s->add_option("--batch-rays", c.batch_rays)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--samples", c.n_samples, "samples per ray")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--seed", c.seed)->capture_default_str();
    s->add_option("--lr-density", c.lr_density)->capture_default_str();
    s->add_option("--lr-grid", c.lr_grid)->capture_default_str();
    s->add_option("--lr-mlp", c.lr_mlp)->capture_default_str();
    s->add_option("--lr-embed", c.lr_embed)->capture_default_str();
    s->add_option("--lr-transform", c.lr_transform)->capture_default_str();
    s->add_option("--lr-final-ratio", c.lr_final_ratio)->capture_default_str();
    s->add_option("--w-rf", c.w_rf)->capture_default_str();
    s->add_option("--w-pbr", c.w_pbr)->capture_default_str();
    s->add_option("--w-normal", c.w_normal)->capture_default_str();
    s->add_option("--w-mask", c.w_mask)->capture_default_str();
    s->add_option("--warmup", c.warmup_fraction, "geometry warm-up fraction")->capture_default_str();
    s->add_option("--log-every", c.log_every)->capture_default_str();
    s->add_option("--val-every", c.val_every)->capture_default_str();
    s->add_option("--grid-res", c.model.field.grid_res)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--transform-hidden", c.model.transform_hidden)->capture_default_str();
    s->add_flag("--no-reduce-grad", c.no_reduce_grad);
    s->add_flag("--sg-light", c.sg_light);
}

std::vector<Camera> pick_poses(const std::string& data, const std::string& which, const PoseProtocol& proto) {
    std::vector<Camera> out;
    if (!data.empty()) {
        const SceneDataset ds = load_dataset(data);
        if (which != "test")
            for (const auto& v : ds.train) out.push_back(v.camera);
        if (which != "train")
            for (const auto& v : ds.test) out.push_back(v.camera);
        return out;
    }
    const auto cams = hemisphere_cameras(proto);
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const bool test = is_test_view(static_cast<int>(i), proto);
        if (which == "all" || (which == "test") == test) out.push_back(cams[i]);
    }
    return out;
}

void write_render(const ViewRender& r, const fs::path& dir, const std::string& stem) {
    write_png(dir / (stem + "_pbr.png"), r.pbr, true);
    write_pfm(dir / (stem + "_pbr.pfm"), r.pbr);
    write_png(dir / (stem + "_albedo.png"), r.albedo, true);
    write_pfm(dir / (stem + "_albedo.pfm"), r.albedo);
    write_pfm(dir / (stem + "_roughness.pfm"), r.roughness);
    write_pfm(dir / (stem + "_normal.pfm"), r.normal);
    write_pfm(dir / (stem + "_depth.pfm"), r.depth);
}

Model<float> load_model(const std::string& ckpt, const std::string& source) {
    const Checkpoint c = load_checkpoint(ckpt);
    if (source.empty()) return c.model;
    return apply_transfer(c, load_checkpoint(source));
}

std::string stem_of(const std::string& p) {
    fs::path q(p);
    if (q.filename().empty()) q = q.parent_path();
    return q.filename().string();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"matxfer: inverse rendering with a learned material transform"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "TOML config; flags override file values");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (sets MATXFER_THREADS)")->check(CLI::PositiveNumber);

    // gen
    auto* gen = app.add_subcommand("gen", "render a dataset (two conditions when --transform is given)");
    std::string g_scene = "sphere_pair", g_transform, g_out, g_env1;
    DatasetSpec g_spec;
    gen->add_option("--scene", g_scene, "sphere, sphere_pair, box_checker or a JSON scene file")->capture_default_str();
    gen->add_option("--transform", g_transform, "T1..T4");
    gen->add_option("--alpha", g_spec.alpha)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    gen->add_option("--spp", g_spec.spp)->capture_default_str()->check(CLI::PositiveNumber);
    gen->add_option("--res", g_spec.poses.resolution)->capture_default_str()->check(CLI::PositiveNumber);
    gen->add_option("--views", g_spec.poses.views)->capture_default_str()->check(CLI::PositiveNumber);
    gen->add_option("--seed", g_spec.seed)->capture_default_str();
    gen->add_option("--env1", g_env1, "JSON environment of the second condition")->check(CLI::ExistingFile);
    gen->add_option("--out", g_out)->required();

    // train-joint / train-target
    TrainConfig t_cfg;
    std::string tj_s0, tj_s1, t_out, tt_data;
    auto* tj = app.add_subcommand("train-joint", "train the two-condition model with F");
    tj->add_option("--s0", tj_s0, "condition-0 dataset")->required()->check(CLI::ExistingDirectory);
    tj->add_option("--s1", tj_s1, "condition-1 dataset")->required()->check(CLI::ExistingDirectory);
    tj->add_option("--out", t_out)->required();
    add_train_options(tj, t_cfg);
    auto* tt = app.add_subcommand("train-target", "train a single-condition model");
    tt->add_option("--data", tt_data)->required()->check(CLI::ExistingDirectory);
    tt->add_option("--out", t_out)->required();
    add_train_options(tt, t_cfg);

    // render / transfer
    std::string r_ckpt, r_source, r_data, r_poses = "test", r_out;
    std::vector<double> r_alphas{1.0};
    double r_alpha = 0;
    int r_condition = 0, r_samples = 64;
    PoseProtocol r_proto;
    auto* render = app.add_subcommand("render", "render a checkpoint: PNG plus G-buffer PFMs");
    render->add_option("--checkpoint", r_ckpt)->required()->check(CLI::ExistingFile);
    render->add_option("--source", r_source, "joint checkpoint whose F is attached")->check(CLI::ExistingFile);
    render->add_option("--alpha", r_alpha, "material interpolation weight")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    render->add_option("--condition", r_condition)->capture_default_str()->check(CLI::Range(0, 1));
    auto* transfer = app.add_subcommand("transfer", "attach a source F to a target model and render an alpha sweep");
    transfer->add_option("--target", r_ckpt)->required()->check(CLI::ExistingFile);
    transfer->add_option("--source", r_source)->required()->check(CLI::ExistingFile);
    transfer->add_option("--alpha", r_alphas, "one or more weights, e.g. 0,0.25,0.5,0.75,1")
        ->delimiter(',')
        ->check(CLI::Range(0.0, 1.0));
    for (auto* s : {render, transfer}) {
        s->add_option("--data", r_data, "dataset whose cameras are used")->check(CLI::ExistingDirectory);
        s->add_option("--render-poses", r_poses)->capture_default_str()->check(CLI::IsMember({"test", "train", "all"}));
        s->add_option("--res", r_proto.resolution, "resolution without --data")->capture_default_str();
        s->add_option("--views", r_proto.views, "pose count without --data")->capture_default_str();
        s->add_option("--samples", r_samples)->capture_default_str()->check(CLI::PositiveNumber);
        s->add_option("--out", r_out)->required();
    }

    // eval
    std::string e_ckpt, e_source, e_gt, e_out, e_src_name, e_tgt_name, e_tf_name = "T";
    EvalOptions e_opt;
    bool e_no_align = false;
    auto* eval = app.add_subcommand("eval", "metrics of a checkpoint against a ground-truth dataset");
    eval->add_option("--checkpoint", e_ckpt)->required()->check(CLI::ExistingFile);
    eval->add_option("--source", e_source)->check(CLI::ExistingFile);
    eval->add_option("--gt", e_gt, "dataset with G-buffers")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--alpha", e_opt.material_alpha)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    eval->add_option("--condition", e_opt.condition)->capture_default_str()->check(CLI::Range(0, 1));
    eval->add_option("--samples", e_opt.n_samples)->capture_default_str();
    eval->add_flag("--no-align", e_no_align, "skip the per-channel albedo scale");
    eval->add_option("--source-name", e_src_name);
    eval->add_option("--target-name", e_tgt_name);
    eval->add_option("--transform-name", e_tf_name)->capture_default_str();
    eval->add_option("--out", e_out)->required();

    // ablate
    std::string a_s0, a_s1, a_target, a_gt, a_out;
    std::vector<std::string> a_variants{"none", "no_joint_optim", "no_transfer"};
    bool a_reuse = false;
    TransformFitConfig a_fit;
    auto* ablate = app.add_subcommand("ablate", "train and evaluate ablation variants");
    ablate->add_option("--s0", a_s0)->required()->check(CLI::ExistingDirectory);
    ablate->add_option("--s1", a_s1)->required()->check(CLI::ExistingDirectory);
    ablate->add_option("--target", a_target, "target scene, condition 0")->required()->check(CLI::ExistingDirectory);
    ablate->add_option("--gt", a_gt, "target scene under the transform")->required()->check(CLI::ExistingDirectory);
    ablate->add_option("--variants", a_variants)->delimiter(',')->check(CLI::IsMember(known_ablations()));
    ablate->add_option("--fit-steps", a_fit.steps)->capture_default_str();
    ablate->add_flag("--reuse", a_reuse, "load checkpoints already in --out");
    ablate->add_option("--transform-name", e_tf_name)->capture_default_str();
    ablate->add_option("--out", a_out)->required();
    add_train_options(ablate, t_cfg);

    // gradcheck
    int gc_rays = 8, gc_coords = 12;
    std::uint64_t gc_seed = 0;
    double gc_eps = 1e-6;
    TrainConfig gc_cfg;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the joint loss (double)");
    gradcheck->add_option("--rays", gc_rays)->capture_default_str()->check(CLI::Range(2, 1 << 16));
    gradcheck->add_option("--coords", gc_coords, "coordinates per block")->capture_default_str();
    gradcheck->add_option("--seed", gc_seed)->capture_default_str();
    gradcheck->add_option("--eps", gc_eps)->capture_default_str();
    gradcheck->add_option("--grid-res", gc_cfg.model.field.grid_res)->capture_default_str();
    gradcheck->add_option("--samples", gc_cfg.n_samples)->capture_default_str();

    // lut
    std::string l_out, l_verify;
    auto* lut = app.add_subcommand("lut", "write or verify the pre-integrated specular table");
    lut->add_option("--out", l_out);
    lut->add_option("--verify", l_verify)->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    if (threads > 0) setenv("MATXFER_THREADS", std::to_string(threads).c_str(), 1);

    try {
        if (gen->parsed()) {
            if (fs::exists(g_scene))
                g_spec.scene = json::parse(std::ifstream(g_scene));
            else
                g_spec.scene = named_scene_spec(g_scene);
            if (!g_transform.empty()) {
                g_spec.transform = parse_transform_tag(g_transform);
                if (!g_spec.transform) throw UsageError("--transform: expected T1, T2, T3 or T4, got " + g_transform);
            }
            if (!g_env1.empty()) g_spec.env1 = Environment::from_json(json::parse(std::ifstream(g_env1)));
            generate_dataset(g_spec, g_out);
            echo_config(app, g_out);
            std::cout << "wrote " << g_out << "\n";
        } else if (tj->parsed() || tt->parsed()) {
            fs::create_directories(t_out);
            echo_config(app, t_out, t_cfg.to_json());
            std::ofstream log(fs::path(t_out) / "train_log.jsonl");
            TrainHooks h;
            h.log = &log;
            h.last_good = fs::path(t_out) / "last_good.ckpt";
            h.on_log = [](int it, const LossTerms& l) { std::cerr << "iter " << it << " loss " << l.total << "\n"; };
            Checkpoint c;
            if (tj->parsed())
                c = train_joint(load_dataset(tj_s0), load_dataset(tj_s1), t_cfg, h);
            else
                c = train_target(load_dataset(tt_data), t_cfg, h);
            save_checkpoint(c, fs::path(t_out) / "model.ckpt");
            std::cout << "wrote " << (fs::path(t_out) / "model.ckpt").string() << "\n";
        } else if (render->parsed() || transfer->parsed()) {
            const Model<float> m = load_model(r_ckpt, r_source);
            const auto cams = pick_poses(r_data, r_poses, r_proto);
            const std::vector<double> alphas = render->parsed() ? std::vector<double>{r_alpha} : r_alphas;
            echo_config(app, r_out);
            ViewRenderOptions o;
            o.condition = r_condition;
            o.n_samples = r_samples;
            for (double a : alphas) {
                o.material_alpha = a;
                fs::path dir = r_out;
                if (transfer->parsed()) dir /= "alpha_" + fmt_alpha(a);
                fs::create_directories(dir);
                for (std::size_t i = 0; i < cams.size(); ++i) {
                    char stem[32];
                    std::snprintf(stem, sizeof stem, "view_%03zu", i);
                    write_render(render_view(m, cams[i], o), dir, stem);
                }
                std::cout << "alpha " << fmt_alpha(a) << ": " << cams.size() << " views in " << dir.string() << "\n";
            }
        } else if (eval->parsed()) {
            const Model<float> m = load_model(e_ckpt, e_source);
            const SceneDataset gt = load_dataset(e_gt);
            e_opt.align_albedo = !e_no_align;
            e_opt.heatmap_dir = fs::path(e_out) / "heatmaps";
            echo_config(app, e_out);
            const EvalResult r = evaluate_model(m, gt, e_opt);
            const std::string src = e_src_name.empty() ? (e_source.empty() ? "none" : stem_of(e_source)) : e_src_name;
            const std::string tgt = e_tgt_name.empty() ? stem_of(e_gt) : e_tgt_name;
            write_metrics_csv(metric_rows(r, src, tgt, e_tf_name, e_opt.material_alpha, "none"),
                              fs::path(e_out) / "metrics.csv");
            const json s{{"psnr_pbr", r.psnr_pbr},           {"ssim_pbr", r.ssim_pbr},
                         {"albedo_psnr", r.albedo_psnr},     {"albedo_psnr_raw", r.albedo_psnr_raw},
                         {"roughness_mae", r.roughness_mae}, {"normal_mae_deg", r.normal_mae_deg},
                         {"albedo_scale", r.albedo_scale}};
            write_text(fs::path(e_out) / "summary.json", s.dump(2) + "\n");
            std::cout << s.dump() << "\n";
        } else if (ablate->parsed()) {
            const SceneDataset s0 = load_dataset(a_s0), s1 = load_dataset(a_s1);
            const SceneDataset target = load_dataset(a_target), gt = load_dataset(a_gt);
            AblationInputs in;
            in.s0 = &s0;
            in.s1 = &s1;
            in.target = &target;
            in.target_gt = &gt;
            in.source_name = stem_of(fs::path(a_s0).parent_path().string());
            in.target_name = stem_of(fs::path(a_target).parent_path().string());
            in.transform_name = e_tf_name;
            AblationOptions opt;
            opt.train = t_cfg;
            opt.fit = a_fit;
            opt.fit.seed = t_cfg.seed;
            opt.variants = a_variants;
            opt.work = a_out;
            opt.reuse = a_reuse;
            opt.progress = &std::cerr;
            echo_config(app, a_out, t_cfg.to_json());
            const AblationResult r = run_ablation(in, opt);
            for (const auto& [name, e] : r.variants)
                std::cout << name << ": albedo psnr " << e.albedo_psnr << " dB, pbr psnr " << e.psnr_pbr << " dB\n";
        } else if (gradcheck->parsed()) {
            ad::GradCheckOptions o;
            o.max_coords_per_block = static_cast<std::size_t>(gc_coords);
            o.seed = gc_seed + 1;
            o.eps = gc_eps;
            const auto r = joint_loss_gradcheck(gc_cfg, gc_rays, gc_seed, o);
            for (const auto& e : r.per_block_worst)
                std::cout << e.block << " " << e.rel_error << "\n";
            std::cout << "max rel err " << r.max_rel_error << " over " << r.coords_checked << " coords, "
                      << r.refined << " refined near kinks (worst "
                      << r.worst.block << "[" << r.worst.index << "])\n";
            return r.max_rel_error < 1e-4 ? 0 : 2;
        } else if (lut->parsed()) {
            if (l_out.empty() == l_verify.empty()) throw UsageError("lut: give exactly one of --out, --verify");
            if (!l_out.empty()) {
                default_mspec_lut().save(l_out);
                std::cout << "wrote " << l_out << "\n";
            } else {
                const bool same = MspecLut::load(l_verify) == default_mspec_lut();
                std::cout << (same ? "lut matches the built-in table\n" : "lut differs from the built-in table\n");
                return same ? 0 : 2;
            }
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
