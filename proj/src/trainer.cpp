#include "matxfer/trainer.hpp"

#include "matxfer/core/hash.hpp"
#include "matxfer/core/parallel.hpp"
#include "matxfer/core/rng.hpp"
#include "matxfer/eval.hpp"
#include "matxfer/version.hpp"

#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <ostream>
#include <sstream>

namespace matxfer {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

json model_config_json(const ModelConfig& c) {
    const FieldConfig& f = c.field;
    const LightConfig& l = c.light;
    return json{
        {"field",
         {{"grid_res", f.grid_res}, {"app_channels", f.app_channels}, {"embed_dim", f.embed_dim},
          {"fuse_hidden", f.fuse_hidden}, {"decoder_hidden", f.decoder_hidden}, {"view_freq", f.view_freq},
          {"half_extent", f.half_extent}, {"density_shift", f.density_shift}, {"density_scale", f.density_scale}}},
        {"light",
         {{"hidden", l.hidden}, {"layers", l.layers}, {"embed_dim", l.embed_dim}, {"l_max", l.l_max},
          {"pos_freq", l.pos_freq}, {"reduce_grad", l.reduce_grad}}},
        {"lobes", {{"lobes", c.lobes.lobes}, {"sharpness", c.lobes.sharpness}, {"quadrature", c.lobes.quadrature}}},
        {"light_kind", c.light_kind == LightKind::Neural ? "neural" : "lobes"},
        {"embeddings", c.embeddings},
        {"transform", c.transform},
        {"transform_hidden", c.transform_hidden},
        {"visibility_steps", c.visibility_steps},
        {"visibility_eps", c.visibility_eps},
    };
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    try {
        if (j.contains("field")) {
            const json& f = j.at("field");
            read_opt(f, "grid_res", c.field.grid_res);
            read_opt(f, "app_channels", c.field.app_channels);
            read_opt(f, "embed_dim", c.field.embed_dim);
            read_opt(f, "fuse_hidden", c.field.fuse_hidden);
            read_opt(f, "decoder_hidden", c.field.decoder_hidden);
            read_opt(f, "view_freq", c.field.view_freq);
            read_opt(f, "half_extent", c.field.half_extent);
            read_opt(f, "density_shift", c.field.density_shift);
            read_opt(f, "density_scale", c.field.density_scale);
        }
        if (j.contains("light")) {
            const json& l = j.at("light");
            read_opt(l, "hidden", c.light.hidden);
            read_opt(l, "layers", c.light.layers);
            read_opt(l, "embed_dim", c.light.embed_dim);
            read_opt(l, "l_max", c.light.l_max);
            read_opt(l, "pos_freq", c.light.pos_freq);
            read_opt(l, "reduce_grad", c.light.reduce_grad);
        }
        if (j.contains("lobes")) {
            const json& l = j.at("lobes");
            read_opt(l, "lobes", c.lobes.lobes);
            read_opt(l, "sharpness", c.lobes.sharpness);
            read_opt(l, "quadrature", c.lobes.quadrature);
        }
        if (j.contains("light_kind")) {
            const std::string k = j.at("light_kind").get<std::string>();
            if (k == "neural") c.light_kind = LightKind::Neural;
            else if (k == "lobes") c.light_kind = LightKind::Lobes;
            else throw ConfigError("unknown light_kind '" + k + "'");
        }
        read_opt(j, "embeddings", c.embeddings);
        read_opt(j, "transform", c.transform);
        read_opt(j, "transform_hidden", c.transform_hidden);
        read_opt(j, "visibility_steps", c.visibility_steps);
        read_opt(j, "visibility_eps", c.visibility_eps);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
    return c;
}

ModelConfig TrainConfig::effective_model() const {
    ModelConfig m = model;
    if (no_reduce_grad) m.light.reduce_grad = 1.0;
    if (sg_light) m.light_kind = LightKind::Lobes;
    return m;
}

ad::AdamHyper TrainConfig::adam() const {
    ad::AdamHyper h;
    h.lr = lr_mlp;
    h.lr_by_prefix = {{field_blocks::kDensity, lr_density}, {"grid.", lr_grid}, {"embed.", lr_embed}, {"sg.", lr_grid}, {transform_blocks::kPrefix, lr_transform}};
    return h;
}

json TrainConfig::to_json() const {
    return json{
        {"model", model_config_json(model)},
        {"iterations", iterations},
        {"batch_rays", batch_rays},
        {"n_samples", n_samples},
        {"seed", seed},
        {"lr_density", lr_density},
        {"lr_grid", lr_grid},
        {"lr_mlp", lr_mlp},
        {"lr_embed", lr_embed},
        {"lr_transform", lr_transform},
        {"lr_final_ratio", lr_final_ratio},
        {"w_rf", w_rf},
        {"w_pbr", w_pbr},
        {"w_normal", w_normal},
        {"w_mask", w_mask},
        {"warmup_fraction", warmup_fraction},
        {"log_every", log_every},
        {"val_every", val_every},
        {"no_reduce_grad", no_reduce_grad},
        {"sg_light", sg_light},
    };
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    try {
        if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
        read_opt(j, "iterations", c.iterations);
        read_opt(j, "batch_rays", c.batch_rays);
        read_opt(j, "n_samples", c.n_samples);
        read_opt(j, "seed", c.seed);
        read_opt(j, "lr_density", c.lr_density);
        read_opt(j, "lr_grid", c.lr_grid);
        read_opt(j, "lr_mlp", c.lr_mlp);
        read_opt(j, "lr_embed", c.lr_embed);
        read_opt(j, "lr_transform", c.lr_transform);
        read_opt(j, "lr_final_ratio", c.lr_final_ratio);
        read_opt(j, "w_rf", c.w_rf);
        read_opt(j, "w_pbr", c.w_pbr);
        read_opt(j, "w_normal", c.w_normal);
        read_opt(j, "w_mask", c.w_mask);
        read_opt(j, "warmup_fraction", c.warmup_fraction);
        read_opt(j, "log_every", c.log_every);
        read_opt(j, "val_every", c.val_every);
        read_opt(j, "no_reduce_grad", c.no_reduce_grad);
        read_opt(j, "sg_light", c.sg_light);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad train config: ") + e.what());
    }
    return c;
}

std::uint64_t TrainConfig::hash() const { return fnv1a(to_json().dump()); }

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'T', 'X', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_string(std::ostream& os, const std::string& s) {
    put(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw IoError("truncated checkpoint while reading " + what);
    return v;
}
std::string get_string(std::istream& is, const std::string& what) {
    const auto n = get<std::uint32_t>(is, what);
    if (n > (1u << 28)) throw IoError("corrupt checkpoint: oversized " + what);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw IoError("truncated checkpoint while reading " + what);
    return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint " + path.string());
    os.write(kMagic, 4);
    put(os, kCheckpointVersion);
    put(os, ckpt.config.hash());
    put(os, static_cast<std::uint64_t>(ckpt.config.seed));
    put_string(os, ckpt.kind);
    put_string(os, ckpt.config.to_json().dump());
    put_string(os, model_config_json(ckpt.model.config).dump());
    const MspecLut& lut = *ckpt.model.lut;
    put(os, static_cast<std::uint32_t>(lut.n_cos()));
    put(os, static_cast<std::uint32_t>(lut.n_r()));
    put(os, static_cast<float>(lut.f0()));
    put(os, lut.seed());
    const auto& P = ckpt.model.params;
    put(os, static_cast<std::uint32_t>(P.size()));
    for (std::size_t i = 0; i < P.size(); ++i) {
        put_string(os, P.name(i));
        const auto& b = P.block(i);
        put(os, static_cast<std::uint32_t>(b.rows()));
        put(os, static_cast<std::uint32_t>(b.cols()));
        os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(float)));
    }
    std::string tail;
    for (const auto& line : ckpt.log_tail) tail += line + "\n";
    put_string(os, tail);
    if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + " is not a checkpoint");
    const auto version = get<std::uint32_t>(is, "version");
    if (version != kCheckpointVersion)
        throw IoError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
    const auto cfg_hash = get<std::uint64_t>(is, "config hash");
    get<std::uint64_t>(is, "seed");
    Checkpoint c;
    c.kind = get_string(is, "kind");
    try {
        c.config = TrainConfig::from_json(json::parse(get_string(is, "config")));
        c.model.config = model_config_from_json(json::parse(get_string(is, "model config")));
    } catch (const json::parse_error& e) {
        throw IoError("corrupt checkpoint config: " + std::string(e.what()));
    }
    if (c.config.hash() != cfg_hash) throw IoError("checkpoint config hash mismatch in " + path.string());
    const auto n_cos = get<std::uint32_t>(is, "lut");
    const auto n_r = get<std::uint32_t>(is, "lut");
    const auto f0 = get<float>(is, "lut");
    const auto lut_seed = get<std::uint64_t>(is, "lut");
    const MspecLut& lut = default_mspec_lut();
    if (static_cast<int>(n_cos) != lut.n_cos() || static_cast<int>(n_r) != lut.n_r() ||
        f0 != static_cast<float>(lut.f0()) || lut_seed != lut.seed())
        throw IoError("checkpoint was trained with a different M_spec table");
    const auto blocks = get<std::uint32_t>(is, "block count");
    for (std::uint32_t i = 0; i < blocks; ++i) {
        std::string name = get_string(is, "block name");
        const auto rows = get<std::uint32_t>(is, "block shape");
        const auto cols = get<std::uint32_t>(is, "block shape");
        MatX<float> m(rows, cols);
        is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
        if (!is) throw IoError("truncated checkpoint in block '" + name + "'");
        c.model.params.add(std::move(name), std::move(m));
    }
    std::istringstream tail(get_string(is, "log"));
    for (std::string line; std::getline(tail, line);) c.log_tail.push_back(line);
    return c;
}

// ---------------------------------------------------------------------------
// Pools
// ---------------------------------------------------------------------------

RayPool make_pool(const SceneDataset& ds, bool test_split) {
    const auto& views = test_split ? ds.test : ds.train;
    RayPool p;
    p.width = ds.intrinsics.width;
    p.height = ds.intrinsics.height;
    const std::size_t per = static_cast<std::size_t>(p.width) * p.height;
    p.rgb.reserve(views.size() * per * 3);
    p.mask.reserve(views.size() * per);
    for (const auto& v : views) {
        p.cameras.push_back(v.camera);
        p.rgb.insert(p.rgb.end(), v.rgb.data.begin(), v.rgb.data.end());
        p.mask.insert(p.mask.end(), v.mask.data.begin(), v.mask.data.end());
    }
    return p;
}

void RayPool::gather(const std::vector<std::size_t>& pixels, RayBatch& rays, MatX<double>& rgb_out,
                     MatX<double>& mask_out) const {
    const auto n = static_cast<Eigen::Index>(pixels.size());
    rays.origins.resize(n, 3);
    rays.dirs.resize(n, 3);
    rgb_out.resize(n, 3);
    mask_out.resize(n, 1);
    const std::size_t per = static_cast<std::size_t>(width) * height;
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t p = pixels[i];
        const Camera& cam = cameras[p / per];
        const int px = static_cast<int>((p % per) % width);
        const int py = static_cast<int>((p % per) / width);
        rays.origins.row(i) = cam.origin().transpose();
        rays.dirs.row(i) = cam.pixel_dir(px, py).transpose();
        for (int c = 0; c < 3; ++c) rgb_out(i, c) = rgb[p * 3 + c];
        mask_out(i, 0) = mask[p];
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

ViewRender render_view(const Model<float>& model, const Camera& camera, const ViewRenderOptions& opt) {
    const int w = camera.intr.width, h = camera.intr.height;
    ViewRender out{Image(w, h, 3), Image(w, h, 3), Image(w, h, 3), Image(w, h, 1),
                   Image(w, h, 3), Image(w, h, 1), Image(w, h, 1)};
    const std::size_t total = static_cast<std::size_t>(w) * h;
    const std::size_t chunk = static_cast<std::size_t>(std::max(1, opt.chunk));
    const std::size_t n_chunks = (total + chunk - 1) / chunk;
    parallel_for(n_chunks, [&](std::size_t ci) {
        const std::size_t begin = ci * chunk, end = std::min(total, begin + chunk);
        RayBatch rays;
        rays.origins.resize(static_cast<Eigen::Index>(end - begin), 3);
        rays.dirs.resize(static_cast<Eigen::Index>(end - begin), 3);
        for (std::size_t p = begin; p < end; ++p) {
            rays.origins.row(p - begin) = camera.origin().transpose();
            rays.dirs.row(p - begin) = camera.pixel_dir(static_cast<int>(p % w), static_cast<int>(p / w)).transpose();
        }
        ad::Tape<float> tape;
        RenderOptions ro;
        ro.march.n_samples = opt.n_samples;
        ro.march.jitter = false;
        ro.condition = model.config.embeddings ? opt.condition : 0;
        ro.material_alpha = opt.material_alpha;
        const auto r = ad::render_rays(tape, model, rays, ro);
        const auto& pbr = r.pbr.value();
        const auto& rf = r.rf.value();
        const auto& mat = r.material.value();
        const auto& nrm = r.normal.value();
        const auto& dep = r.depth.value();
        const auto& opa = r.opacity.value();
        for (std::size_t p = begin; p < end; ++p) {
            const auto i = static_cast<Eigen::Index>(p - begin);
            const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
            for (int c = 0; c < 3; ++c) {
                out.pbr.at(x, y, c) = pbr(i, c);
                out.rf.at(x, y, c) = rf(i, c);
                out.albedo.at(x, y, c) = mat(i, c);
                out.normal.at(x, y, c) = nrm(i, c);
            }
            out.roughness.at(x, y) = mat(i, 3);
            out.depth.at(x, y) = dep(i, 0);
            out.opacity.at(x, y) = opa(i, 0);
        }
    });
    return out;
}

MatX<double> query_materials(const Model<float>& model, const MatX<double>& points) {
    const FieldConfig& fc = model.config.field;
    const Eigen::Index n = points.rows();
    MatX<double> out(n, 4);
    const Eigen::Index chunk = 4096;
    for (Eigen::Index b = 0; b < n; b += chunk) {
        const Eigen::Index m = std::min(chunk, n - b);
        ad::Tape<float> tape;
        const MatX<double> pts = points.middleRows(b, m);
        ad::Var<float> feat = ad::grid_sample(tape.param(model.params, field_blocks::kAppearance), pts, fc.grid_res,
                                              fc.half_extent);
        ad::Var<float> a_bar = ad::mean_appearance(tape, model.params, fc, feat);
        MatX<float> dirs = MatX<float>::Zero(m, 3);
        dirs.col(2).setOnes();
        const auto heads = ad::decode_heads(tape, model.params, fc, a_bar, a_bar, tape.constant(dirs), false);
        out.middleRows(b, m) = heads.material.value().cast<double>();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

ad::GradCheckResult joint_loss_gradcheck(const TrainConfig& cfg_in, int rays, std::uint64_t seed,
                                         const ad::GradCheckOptions& opt) {
    if (rays < 2) throw ConfigError("gradcheck needs at least two rays");
    TrainConfig cfg = cfg_in;
    cfg.model.light.reduce_grad = 1.0;
    ModelConfig mc = cfg.effective_model();
    mc.embeddings = true;
    mc.transform = true;
    auto m = Model<double>::create(mc, seed);
    Rng rng(seed, 0x9c);
    auto& g = m.params.mutable_block(m.params.index_of(field_blocks::kDensity));
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform(4, 14);

    LossBatch b[2];
    const int per[2] = {rays / 2, rays - rays / 2};
    MatX<double> vis[2];
    for (int c = 0; c < 2; ++c) {
        b[c].rays.origins.resize(per[c], 3);
        b[c].rays.dirs.resize(per[c], 3);
        b[c].rgb.resize(per[c], 3);
        b[c].mask.resize(per[c], 1);
        for (int i = 0; i < per[c]; ++i) {
            const Vec3 o = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 1).normalized() * 2.5;
            const Vec3 tgt(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
            b[c].rays.origins.row(i) = o.transpose();
            b[c].rays.dirs.row(i) = (tgt - o).normalized().transpose();
            for (int k = 0; k < 3; ++k) b[c].rgb(i, k) = rng.uniform();
            b[c].mask(i, 0) = i % 3 == 0 ? 0 : 1;
        }
        b[c].condition = c;
        b[c].material_alpha = c;
        b[c].jitter_seed = seed;
        b[c].first_ray_index = static_cast<std::uint64_t>(c * per[0]);
        ad::Tape<double> t;
        RenderOptions o;
        o.march.n_samples = cfg.n_samples;
        o.march.jitter_seed = seed;
        o.first_ray_index = b[c].first_ray_index;
        o.condition = c;
        o.material_alpha = c;
        vis[c] = ad::render_rays(t, m, b[c].rays, o).visibility;
    }
    b[0].visibility = &vis[0];
    b[1].visibility = &vis[1];
    // finite_diff_check perturbs m.params in place, which is the store the loss reads.
    auto loss = [&](ad::Tape<double>& t, const ad::ParamStore<double>&) {
        return ad::add(ad::batch_loss(t, m, b[0], cfg, 0.5), ad::batch_loss(t, m, b[1], cfg, 0.5));
    };
    return ad::finite_diff_check(loss, m.params, opt);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> sample_pixels(const RayPool& pool, int count, Rng& rng) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(count));
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(pool.size()));
    return idx;
}

struct Condition {
    const SceneDataset* ds;
    RayPool pool;
    int condition;
    double alpha;
};

double validation_psnr(const Model<float>& model, const Condition& c, int n_samples) {
    if (c.ds->test.empty()) return 0;
    const View& v = c.ds->test.front();
    ViewRenderOptions ro;
    ro.condition = c.condition;
    ro.material_alpha = c.alpha;
    ro.n_samples = n_samples;
    const ViewRender r = render_view(model, v.camera, ro);
    return psnr(r.pbr, v.rgb);
}

Checkpoint run_training(std::vector<Condition> conds, const TrainConfig& cfg, ModelConfig mc, const std::string& kind,
                        const TrainHooks& hooks) {
    if (cfg.iterations < 0) throw ConfigError("iterations must be >= 0");
    if (cfg.batch_rays < static_cast<int>(conds.size())) throw ConfigError("batch_rays too small");
    for (const auto& c : conds)
        if (c.pool.size() == 0) throw ConfigError("training split has no pixels");
    Checkpoint ck;
    ck.kind = kind;
    ck.config = cfg;
    ck.model = Model<float>::create(mc, cfg.seed);
    auto& P = ck.model.params;
    auto state = ad::AdamState<float>::zeros_like(P);
    ad::AdamHyper hyper = cfg.adam();
    std::deque<std::string> tail;
    const int per = cfg.batch_rays / static_cast<int>(conds.size());
    const double share = 1.0 / static_cast<double>(conds.size());
    const int warmup_iters = static_cast<int>(cfg.warmup_fraction * cfg.iterations);

    auto emit = [&](const json& line) {
        const std::string s = line.dump();
        if (hooks.log) *hooks.log << s << "\n" << std::flush;
        tail.push_back(s);
        while (tail.size() > 20) tail.pop_front();
    };
    auto abort_numeric = [&](const std::string& msg) {
        ck.log_tail.assign(tail.begin(), tail.end());
        if (!hooks.last_good.empty()) save_checkpoint(ck, hooks.last_good);
        throw NumericError(msg);
    };

    for (int it = 0; it < cfg.iterations; ++it) {
        Rng rng(cfg.seed, 0x7a11ULL + static_cast<std::uint64_t>(it));
        ad::Tape<float> tape;
        LossTerms terms;
        ad::Var<float> total;
        for (std::size_t k = 0; k < conds.size(); ++k) {
            const Condition& c = conds[k];
            LossBatch b;
            c.pool.gather(sample_pixels(c.pool, per, rng), b.rays, b.rgb, b.mask);
            b.condition = c.condition;
            b.material_alpha = c.alpha;
            b.jitter_seed = hash_combine(cfg.seed, static_cast<std::uint64_t>(it));
            b.first_ray_index = k * static_cast<std::uint64_t>(per);
            b.warmup = it < warmup_iters;
            ad::Var<float> l = ad::batch_loss(tape, ck.model, b, cfg, share, &terms);
            total = k == 0 ? l : ad::add(total, l);
        }
        if (!std::isfinite(terms.total))
            abort_numeric("non-finite loss at iteration " + std::to_string(it + 1));
        const auto grads = tape.backward(total);
        hyper.lr_scale = std::pow(cfg.lr_final_ratio, static_cast<double>(it) / std::max(1, cfg.iterations));
        try {
            ad::adam_step(P, grads, state, hyper);
        } catch (const NumericError& e) {
            abort_numeric(e.what());
        }
        const bool last = it + 1 == cfg.iterations;
        if ((cfg.log_every > 0 && (it + 1) % cfg.log_every == 0) || last) {
            json line{{"iter", it + 1}, {"loss", terms.total}, {"rf", terms.rf}, {"pbr", terms.pbr},
                      {"normal", terms.normal}, {"mask", terms.mask}, {"lr_scale", hyper.lr_scale}};
            if ((cfg.val_every > 0 && (it + 1) % cfg.val_every == 0) || last) {
                json val = json::array();
                for (const auto& c : conds) val.push_back(validation_psnr(ck.model, c, cfg.n_samples));
                line["val_psnr"] = val;
            }
            emit(line);
            if (hooks.on_log) hooks.on_log(it + 1, terms);
        }
    }
    ck.log_tail.assign(tail.begin(), tail.end());
    return ck;
}

}  // namespace

Checkpoint train_joint(const SceneDataset& s0, const SceneDataset& s1, const TrainConfig& cfg,
                       const TrainHooks& hooks) {
    if (s0.intrinsics != s1.intrinsics || s0.train.size() != s1.train.size())
        throw ConfigError("joint training needs two conditions with the same cameras");
    ModelConfig mc = cfg.effective_model();
    mc.embeddings = true;
    mc.transform = true;
    std::vector<Condition> conds;
    conds.push_back({&s0, make_pool(s0), 0, 0.0});
    conds.push_back({&s1, make_pool(s1), 1, 1.0});
    return run_training(std::move(conds), cfg, mc, "joint", hooks);
}

Checkpoint train_target(const SceneDataset& ds, const TrainConfig& cfg, const TrainHooks& hooks) {
    ModelConfig mc = cfg.effective_model();
    mc.embeddings = false;
    mc.transform = false;
    std::vector<Condition> conds;
    conds.push_back({&ds, make_pool(ds), 0, 0.0});
    return run_training(std::move(conds), cfg, mc, "target", hooks);
}

Model<float> apply_transfer(const Checkpoint& target, const Checkpoint& source) {
    if (!has_transform(source.model.params)) throw ContractError("source checkpoint carries no material transform");
    if (source.model.config.transform_hidden != target.model.config.transform_hidden && target.model.config.transform)
        throw ContractError("transform width differs between source and target");
    Model<float> m = target.model;
    m.config.transform = true;
    m.config.transform_hidden = source.model.config.transform_hidden;
    m.params.merge_prefix(source.model.params, std::string(transform_blocks::kPrefix) + ".");
    return m;
}

// ---------------------------------------------------------------------------
// Transform fitting
// ---------------------------------------------------------------------------

namespace {

ad::ParamStore<float> fit_transform(const std::function<void(Rng&, MatX<float>&, MatX<float>&)>& draw,
                                    const TransformFitConfig& cfg) {
    ad::ParamStore<float> f;
    init_transform(f, cfg.seed, cfg.hidden);
    auto state = ad::AdamState<float>::zeros_like(f);
    ad::AdamHyper hyper;
    hyper.lr = cfg.lr;
    MatX<float> x, y;
    for (int s = 0; s < cfg.steps; ++s) {
        Rng rng(cfg.seed, 0xf17ULL + static_cast<std::uint64_t>(s));
        draw(rng, x, y);
        ad::Tape<float> tape;
        ad::Var<float> per;
        if (cfg.cross_entropy) {
            auto z = ad::mlp_forward(tape, f, transform_blocks::kPrefix, {tape.constant(x)}, ad::Activation::Identity);
            per = ad::sub(ad::softplus(z), ad::mul(z, tape.constant(y)));
        } else {
            per = ad::square(ad::sub(ad::transform_eval(tape, f, tape.constant(x)), tape.constant(y)));
        }
        auto loss = ad::scale(ad::sum(per), 1.0f / static_cast<float>(y.size()));
        const auto grads = tape.backward(loss);
        hyper.lr_scale = std::pow(cfg.lr_final_ratio, static_cast<double>(s) / std::max(1, cfg.steps));
        ad::adam_step(f, grads, state, hyper);
    }
    return f;
}

MatX<float> material_row(const MaterialSample& m) {
    MatX<float> r(1, 4);
    r << static_cast<float>(m.albedo.x()), static_cast<float>(m.albedo.y()), static_cast<float>(m.albedo.z()),
        static_cast<float>(m.roughness);
    return r;
}

}  // namespace

ad::ParamStore<float> fit_transform_supervised(const MaterialMap& target, const TransformFitConfig& cfg) {
    return fit_transform(
        [&](Rng& rng, MatX<float>& x, MatX<float>& y) {
            x.resize(cfg.batch, 4);
            y.resize(cfg.batch, 4);
            for (int i = 0; i < cfg.batch; ++i) {
                MaterialSample b;
                b.albedo = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
                b.roughness = rng.uniform();
                x.row(i) = material_row(b);
                y.row(i) = material_row(target(b));
            }
        },
        cfg);
}

ad::ParamStore<float> fit_transform_pairs(const MatX<double>& beta0, const MatX<double>& beta1,
                                          const TransformFitConfig& cfg) {
    if (beta0.rows() != beta1.rows() || beta0.cols() != 4 || beta1.cols() != 4)
        throw ShapeError("transform pairs must be matching N x 4 matrices");
    if (beta0.rows() == 0) throw ConfigError("no material pairs to fit");
    return fit_transform(
        [&](Rng& rng, MatX<float>& x, MatX<float>& y) {
            x.resize(cfg.batch, 4);
            y.resize(cfg.batch, 4);
            for (int i = 0; i < cfg.batch; ++i) {
                const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(beta0.rows())));
                x.row(i) = beta0.row(k).cast<float>();
                y.row(i) = beta1.row(k).cast<float>();
            }
        },
        cfg);
}

double transform_max_error(const ad::ParamStore<float>& f, const MaterialMap& target) {
    const int na = 17, nr = 5;
    MatX<float> x(na * na * na * nr, 4);
    MatX<double> y(x.rows(), 4);
    Eigen::Index k = 0;
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < na; ++j)
            for (int l = 0; l < na; ++l)
                for (int m = 0; m < nr; ++m, ++k) {
                    MaterialSample b;
                    b.albedo = Vec3(i, j, l) / (na - 1.0);
                    b.roughness = m / (nr - 1.0);
                    x.row(k) = material_row(b);
                    y.row(k) = material_row(target(b)).cast<double>();
                }
    const MatX<float> pred = transform_eval_batch(f, x);
    return (pred.cast<double>() - y).cwiseAbs().maxCoeff();
}

ad::ParamStore<float> fit_posthoc_transform(const Checkpoint& m0, const Checkpoint& m1,
                                            const std::vector<Camera>& views, const TransformFitConfig& cfg,
                                            int n_samples) {
    std::vector<Vec3> points;
    for (const Camera& cam : views) {
        const int w = cam.intr.width, h = cam.intr.height;
        RayBatch rays;
        rays.origins.resize(static_cast<Eigen::Index>(w) * h, 3);
        rays.dirs.resize(rays.origins.rows(), 3);
        for (int p = 0; p < w * h; ++p) {
            rays.origins.row(p) = cam.origin().transpose();
            rays.dirs.row(p) = cam.pixel_dir(p % w, p / w).transpose();
        }
        ad::Tape<float> tape;
        RenderOptions ro;
        ro.march.n_samples = n_samples;
        ro.march.jitter = false;
        ro.want_rf = false;
        ro.want_pbr = false;
        const auto r = ad::render_rays(tape, m0.model, rays, ro);
        const auto& opa = r.opacity.value();
        for (Eigen::Index i = 0; i < opa.rows(); ++i)
            if (opa(i, 0) >= 0.5f) points.push_back(r.surface.row(i).transpose());
    }
    MatX<double> pts(static_cast<Eigen::Index>(points.size()), 3);
    for (std::size_t i = 0; i < points.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
    const MatX<double> b0 = query_materials(m0.model, pts);
    const MatX<double> b1 = query_materials(m1.model, pts);
    return fit_transform_pairs(b0, b1, cfg);
}

}  // namespace matxfer
