#include "matxfer/core/rng.hpp"
#include "matxfer/eval.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

using namespace matxfer;
namespace fs = std::filesystem;

namespace {

Image noise_image(int w, int h, int c, std::uint64_t seed) {
    Image img(w, h, c);
    Rng rng(seed);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

}  // namespace

TEST(Psnr, IdenticalImagesHitTheCap) {
    const Image a = noise_image(16, 16, 3, 1);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
}

TEST(Psnr, KnownMse) {
    Image a(8, 8, 3, 0.5f), b(8, 8, 3, 0.6f);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);  // mse 1e-2
}

TEST(Psnr, MaskRestrictsPixels) {
    Image a(4, 4, 1, 0.f), b(4, 4, 1, 0.f), m(4, 4, 1, 0.f);
    b.at(0, 0) = 1.0f;      // outside the mask
    b.at(2, 2) = 0.1f;      // inside
    m.at(2, 2) = 1.0f;
    m.at(3, 3) = 1.0f;
    EXPECT_NEAR(psnr(a, b, &m), -10 * std::log10(0.01 / 2), 1e-4);
    Image empty(4, 4, 1, 0.f);
    EXPECT_THROW(psnr(a, b, &empty), ContractError);
    EXPECT_THROW(psnr(a, Image(3, 4, 1)), ShapeError);
}

TEST(Ssim, IdentitySymmetryAndNoise) {
    const Image a = noise_image(32, 32, 3, 2);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    Image b = a;
    Rng rng(3);
    for (auto& v : b.data) v = static_cast<float>(v + rng.uniform(-0.2, 0.2));
    const double s = ssim(a, b);
    EXPECT_LT(s, 0.95);
    EXPECT_NEAR(s, ssim(b, a), 1e-12);
    Image c = a;
    for (auto& v : c.data) v = static_cast<float>(v + rng.uniform(-0.05, 0.05));
    EXPECT_GT(ssim(a, c), s);
    EXPECT_THROW(ssim(Image(8, 8, 3), Image(8, 8, 3)), ShapeError);
}

TEST(Normals, RightAngleIsNinetyDegrees) {
    Image a(2, 1, 3, 0.f), b(2, 1, 3, 0.f), m(2, 1, 1, 1.f);
    a.at(0, 0, 2) = 1;
    b.at(0, 0, 0) = 1;
    a.at(1, 0, 1) = 1;
    b.at(1, 0, 1) = 2;  // unnormalized, same direction
    EXPECT_NEAR(mae_normals(a, b, m), 45.0, 1e-9);
}

TEST(Albedo, ScaleRecoversPerChannelFactors) {
    const Image ref = noise_image(8, 8, 3, 4);
    Image pred = ref;
    for (std::size_t i = 0; i < pred.pixels(); ++i) {
        pred.data[i * 3 + 0] *= 0.5f;
        pred.data[i * 3 + 2] *= 2.0f;
    }
    Image mask(8, 8, 1, 1.f);
    const auto s = albedo_scale({&pred}, {&ref}, {&mask});
    EXPECT_NEAR(s[0], 2.0, 1e-6);
    EXPECT_NEAR(s[1], 1.0, 1e-6);
    EXPECT_NEAR(s[2], 0.5, 1e-6);
    EXPECT_GT(psnr(apply_scale(pred, s), ref), 80.0);
}

TEST(Report, MetricsCsvRoundTrip) {
    const fs::path dir = fs::temp_directory_path() / "matxfer_eval_test";
    fs::remove_all(dir);
    std::vector<MetricRow> rows{{"sphere_pair", "box_checker", "T2", 1, "albedo_psnr", 21.5, "none"},
                                {"sphere_pair", "box_checker", "T2", 0, "psnr", 30.25, "no_transfer"}};
    write_metrics_csv(rows, dir / "metrics.csv");
    const auto back = read_metrics_csv(dir / "metrics.csv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].ablation, "no_transfer");
    EXPECT_DOUBLE_EQ(back[0].value, 21.5);
    std::ifstream is(dir / "metrics.csv");
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header, "source,target,transform,alpha,metric,value,ablation");

    Image map(3, 2, 1, 0.25f);
    write_heatmap_csv(map, dir / "h.csv");
    std::ifstream hs(dir / "h.csv");
    std::string line;
    int lines = 0;
    while (std::getline(hs, line)) {
        EXPECT_EQ(line, "0.25,0.25,0.25");
        ++lines;
    }
    EXPECT_EQ(lines, 2);
}
