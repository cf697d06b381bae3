#include "matxfer/autodiff/gradcheck.hpp"
#include "matxfer/core/rng.hpp"
#include "matxfer/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace matxfer;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    ModelConfig& m = c.model;
    m.field.grid_res = 8;
    m.field.app_channels = 4;
    m.field.embed_dim = 6;
    m.field.fuse_hidden = 8;
    m.field.decoder_hidden = 8;
    m.light.hidden = 8;
    m.light.layers = 2;
    m.light.embed_dim = 6;
    m.light.l_max = 2;
    m.light.pos_freq = 2;
    m.transform_hidden = 8;
    m.visibility_steps = 8;
    c.n_samples = 8;
    c.batch_rays = 32;
    c.iterations = 12;
    c.log_every = 4;
    c.val_every = 0;
    return c;
}

DatasetSpec tiny_spec() {
    DatasetSpec s;
    s.scene = named_scene_spec("sphere_pair");
    s.transform = TransformTag::T2;
    s.poses.resolution = 12;
    s.poses.views = 12;
    s.spp = 2;
    return s;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("matxfer_trainer_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST(TrainConfig, JsonRoundTripAndHash) {
    TrainConfig c = tiny_config();
    c.no_reduce_grad = true;
    const TrainConfig back = TrainConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_EQ(back.hash(), c.hash());
    TrainConfig d = c;
    d.sg_light = true;
    EXPECT_NE(d.hash(), c.hash());
    EXPECT_EQ(d.effective_model().light_kind, LightKind::Lobes);
    EXPECT_EQ(c.effective_model().light.reduce_grad, 1.0);
    EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"iterations", "many"}}), ConfigError);
}

TEST(Loss, JointLossGradcheckInDouble) {
    ad::GradCheckOptions opt;
    opt.max_coords_per_block = 6;
    const auto res = joint_loss_gradcheck(tiny_config(), 8, 3, opt);
    EXPECT_LT(res.max_rel_error, 1e-4) << res.worst.block << "[" << res.worst.index << "] analytic "
                                       << res.worst.analytic << " numeric " << res.worst.numeric;
    bool saw_f = false, saw_embed = false, saw_grid = false, saw_light = false;
    for (const auto& e : res.per_block_worst) {
        saw_f |= e.block.rfind("F.", 0) == 0;
        saw_embed |= e.block.rfind("embed.", 0) == 0;
        saw_grid |= e.block.rfind("grid.", 0) == 0;
        saw_light |= e.block.rfind("g_indir", 0) == 0;
    }
    EXPECT_TRUE(saw_f && saw_embed && saw_grid && saw_light);
}

// The appearance embedding of condition 1 does receive gradient: beta is
// decoded from the mean of both appearance branches.
TEST(Loss, ConditionZeroBatchLeavesTransformAndOtherLightEmbeddingsUntouched) {
    const TrainConfig cfg = tiny_config();
    auto m = Model<float>::create(cfg.model, 6);
    const SceneDataset d0 = render_condition(tiny_spec(), 0);
    const RayPool pool = make_pool(d0);
    LossBatch b;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 32; ++i) idx.push_back(i * 37 % pool.size());
    pool.gather(idx, b.rays, b.rgb, b.mask);
    ad::Tape<float> t;
    const auto g = t.backward(ad::batch_loss(t, m, b, cfg, 1.0));
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        const std::string& n = m.params.name(i);
        const bool untouched = n.rfind("F.", 0) == 0 || n == "embed.dir.1" || n == "embed.indir.1";
        if (untouched) {
            EXPECT_EQ(g.blocks[i].cwiseAbs().maxCoeff(), 0.0f) << n;
        }
    }
    EXPECT_GT(g.blocks[m.params.index_of("embed.app.0")].cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_GT(g.blocks[m.params.index_of("embed.app.1")].cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_GT(g.blocks[m.params.index_of("embed.dir.0")].cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Pool, GatherMatchesViews) {
    const SceneDataset d0 = render_condition(tiny_spec(), 0);
    const RayPool pool = make_pool(d0);
    const int w = d0.intrinsics.width, h = d0.intrinsics.height;
    ASSERT_EQ(pool.size(), d0.train.size() * static_cast<std::size_t>(w * h));
    const std::size_t p = static_cast<std::size_t>(w * h) + 3 * w + 5;  // view 1, x 5, y 3
    RayBatch r;
    MatX<double> rgb, mask;
    pool.gather({p}, r, rgb, mask);
    EXPECT_FLOAT_EQ(static_cast<float>(rgb(0, 1)), d0.train[1].rgb.at(5, 3, 1));
    EXPECT_FLOAT_EQ(static_cast<float>(mask(0, 0)), d0.train[1].mask.at(5, 3));
    EXPECT_LE((r.dirs.row(0).transpose() - d0.train[1].camera.pixel_dir(5, 3)).norm(), 1e-15);
}

TEST(Training, JointRunIsDeterministicAndCheckpointsRoundTrip) {
    const auto spec = tiny_spec();
    const SceneDataset s0 = render_condition(spec, 0), s1 = render_condition(spec, 1);
    const TrainConfig cfg = tiny_config();
    std::ostringstream log_a, log_b;
    TrainHooks ha, hb;
    ha.log = &log_a;
    hb.log = &log_b;
    const Checkpoint a = train_joint(s0, s1, cfg, ha);
    const Checkpoint b = train_joint(s0, s1, cfg, hb);
    EXPECT_EQ(log_a.str(), log_b.str());
    EXPECT_EQ(a.log_tail.size(), 3u);

    const fs::path dir = temp_dir("ckpt");
    save_checkpoint(a, dir / "a.ckpt");
    save_checkpoint(b, dir / "b.ckpt");
    EXPECT_EQ(file_bytes(dir / "a.ckpt"), file_bytes(dir / "b.ckpt"));
    const Checkpoint back = load_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(back.kind, "joint");
    EXPECT_EQ(back.config.hash(), cfg.hash());
    EXPECT_EQ(back.log_tail, a.log_tail);
    ASSERT_EQ(back.model.params.size(), a.model.params.size());
    for (std::size_t i = 0; i < a.model.params.size(); ++i) {
        EXPECT_EQ(back.model.params.name(i), a.model.params.name(i));
        EXPECT_EQ(back.model.params.block(i), a.model.params.block(i));
    }
    save_checkpoint(back, dir / "c.ckpt");
    EXPECT_EQ(file_bytes(dir / "a.ckpt"), file_bytes(dir / "c.ckpt"));
}

TEST(Training, CheckpointVersionAndCorruptionAreRejected) {
    const fs::path dir = temp_dir("bad");
    Checkpoint c;
    c.kind = "target";
    c.config = tiny_config();
    c.model = Model<float>::create(c.config.model, 1);
    save_checkpoint(c, dir / "ok.ckpt");
    std::string bytes = file_bytes(dir / "ok.ckpt");
    std::string v2 = bytes;
    v2[4] = 2;
    std::ofstream(dir / "v2.ckpt", std::ios::binary) << v2;
    try {
        load_checkpoint(dir / "v2.ckpt");
        FAIL() << "version 2 accepted";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
    }
    std::ofstream(dir / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    EXPECT_THROW(load_checkpoint(dir / "cut.ckpt"), IoError);
    std::ofstream(dir / "junk.ckpt", std::ios::binary) << "hello";
    EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), IoError);
}

TEST(Training, NonFiniteLossAbortsWithLastGoodCheckpoint) {
    SceneDataset d0 = render_condition(tiny_spec(), 0);
    for (auto& v : d0.train) std::fill(v.rgb.data.begin(), v.rgb.data.end(), std::nanf(""));
    const fs::path dir = temp_dir("nan");
    TrainHooks h;
    h.last_good = dir / "last_good.ckpt";
    EXPECT_THROW(train_target(d0, tiny_config(), h), NumericError);
    EXPECT_TRUE(fs::exists(h.last_good));
    EXPECT_EQ(load_checkpoint(h.last_good).kind, "target");
}

TEST(Training, TargetModelHasNoEmbeddingsOrTransform) {
    const SceneDataset d0 = render_condition(tiny_spec(), 0);
    TrainConfig cfg = tiny_config();
    cfg.iterations = 2;
    const Checkpoint t = train_target(d0, cfg);
    EXPECT_FALSE(has_transform(t.model.params));
    EXPECT_FALSE(t.model.params.contains("embed.app.0"));
    Checkpoint src;
    src.config = cfg;
    src.model = Model<float>::create(cfg.model, 9);
    const Model<float> moved = apply_transfer(t, src);
    EXPECT_TRUE(has_transform(moved.params));
    EXPECT_EQ(moved.params["F.w0"], src.model.params["F.w0"]);
    EXPECT_EQ(moved.params[field_blocks::kDensity], t.model.params[field_blocks::kDensity]);
    EXPECT_THROW(apply_transfer(src, t), ContractError);
}

TEST(Training, RenderViewAlphaEndpointsMatchSelection) {
    const TrainConfig cfg = tiny_config();
    auto m = Model<float>::create(cfg.model, 10);
    const SceneDataset d0 = render_condition(tiny_spec(), 0);
    ViewRenderOptions o;
    o.n_samples = 8;
    o.chunk = 50;
    const ViewRender a = render_view(m, d0.test[0].camera, o);
    o.chunk = 1000;
    const ViewRender b = render_view(m, d0.test[0].camera, o);
    EXPECT_EQ(a.pbr, b.pbr);
    EXPECT_EQ(a.depth, b.depth);
}

TEST(TransformFit, SupervisedFitReducesError) {
    const MaterialMap t2 = [](const MaterialSample& b) {
        return apply_named_transform(TransformTag::T2, b, TransformConstants{});
    };
    TransformFitConfig cfg;
    cfg.steps = 2000;
    cfg.batch = 256;
    cfg.lr = 1e-2;
    cfg.hidden = 32;
    ad::ParamStore<float> init;
    init_transform(init, cfg.seed, cfg.hidden);
    const double before = transform_max_error(init, t2);
    const double after = transform_max_error(fit_transform_supervised(t2, cfg), t2);
    EXPECT_LT(after, 0.5 * before);
}
