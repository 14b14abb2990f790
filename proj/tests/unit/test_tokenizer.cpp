#include <gtest/gtest.h>

#include <random>

#include "ilrm/tokenizer.hpp"

using namespace ilrm;

namespace {

Camera test_camera(double x) {
    Camera c;
    c.intrinsics = {20, 20, 8, 8, 16, 16};
    c.pose = look_at(Vec3(x, 0, -3), Vec3::Zero());
    return c;
}

Image random_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0, 1);
    Image img(h, w);
    for (auto& v : img.data) v = u(rng);
    return img;
}

} // namespace

TEST(Tokenizer, ViewpointShapeFullScale) {
    std::mt19937_64 rng(0);
    const auto w = TokenizerWeights<float>::init(8, 768, 0.02, rng);
    EXPECT_EQ(w.image_proj.dim(0), 576u);
    Camera c;
    c.intrinsics = {300, 300, 128, 128, 256, 256};
    const auto v = tokenize_viewpoint(plucker_rays(c, 128, 128), w, 8);
    EXPECT_EQ(v.tokens.shape(), (Shape{256, 768}));
    const auto s = tokenize_image(Image(256, 256, 0.5f), plucker_rays(c, 256, 256), w, 8);
    EXPECT_EQ(s.tokens.shape(), (Shape{1024, 768}));
}

TEST(Tokenizer, NonSquareTokenCount) {
    std::mt19937_64 rng(0);
    const auto w = TokenizerWeights<float>::init(8, 16, 0.02, rng);
    Camera c;
    c.intrinsics = {300, 300, 224, 128, 448, 256};
    const auto s = tokenize_image(Image(256, 448), plucker_rays(c, 256, 448), w, 8);
    EXPECT_EQ(s.length(), 1792u);
}

TEST(Tokenizer, ZeroWeightsGiveZeroTokens) {
    std::mt19937_64 rng(0);
    auto w = TokenizerWeights<double>::init(4, 8, 0.0, rng);
    const auto v = tokenize_viewpoint(plucker_rays(test_camera(0.3), 8, 8), w, 4);
    for (double x : v.tokens.data()) EXPECT_EQ(x, 0.0);
}

TEST(Tokenizer, DistinctCamerasGiveDistinctTokens) {
    std::mt19937_64 rng(1);
    const auto w = TokenizerWeights<double>::init(4, 8, 0.02, rng);
    const auto a = tokenize_viewpoint(plucker_rays(test_camera(0.0), 8, 8), w, 4);
    const auto b = tokenize_viewpoint(plucker_rays(test_camera(0.7), 8, 8), w, 4);
    double diff = 0;
    for (std::size_t i = 0; i < a.tokens.numel(); ++i) diff += std::abs(a.tokens[i] - b.tokens[i]);
    EXPECT_GT(diff, 1e-3);
}

TEST(Tokenizer, SwappingPatchesSwapsRows) {
    std::mt19937_64 rng(2);
    const auto w = TokenizerWeights<double>::init(4, 8, 0.02, rng);
    const Camera c = test_camera(0.2);
    const auto rays = plucker_rays(c, 16, 16);
    Image img = random_image(16, 16, 3);
    const auto base = tokenize_image(img, rays, w, 4);
    // Swap the RGB contents of patch 0 (rows 0-3, cols 0-3) and patch 5 (rows 4-7, cols 4-7).
    Image swapped = img;
    auto rays_swapped = rays;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            for (int ch = 0; ch < 3; ++ch) std::swap(swapped.at(y, x, ch), swapped.at(y + 4, x + 4, ch));
            for (int k = 0; k < 6; ++k)
                std::swap(rays_swapped.data[(static_cast<std::size_t>(y) * 16 + x) * 6 + k],
                          rays_swapped.data[(static_cast<std::size_t>(y + 4) * 16 + x + 4) * 6 + k]);
        }
    const auto perm = tokenize_image(swapped, rays_swapped, w, 4);
    for (std::size_t r = 0; r < base.length(); ++r) {
        const std::size_t src = r == 0 ? 5 : (r == 5 ? 0 : r);
        for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(perm.tokens.at(r, k), base.tokens.at(src, k));
    }
}

TEST(Tokenizer, SpatialMismatchThrows) {
    std::mt19937_64 rng(0);
    const auto w = TokenizerWeights<double>::init(4, 8, 0.02, rng);
    EXPECT_THROW(tokenize_image(Image(16, 16), plucker_rays(test_camera(0), 8, 8), w, 4), ValidationError);
}

TEST(Tokenizer, ProjectionMismatchThrows) {
    std::mt19937_64 rng(0);
    const auto w = TokenizerWeights<double>::init(4, 8, 0.02, rng);
    EXPECT_THROW(tokenize_viewpoint(plucker_rays(test_camera(0), 8, 8), w, 2), DimensionError);
}

TEST(Tokenizer, NonFinitePixelThrows) {
    std::mt19937_64 rng(0);
    const auto w = TokenizerWeights<double>::init(4, 8, 0.02, rng);
    Image img(8, 8);
    img.at(3, 3, 1) = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(tokenize_image(img, plucker_rays(test_camera(0), 8, 8), w, 4), ValidationError);
}
