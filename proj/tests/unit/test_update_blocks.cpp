#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "ilrm/update_blocks.hpp"
#include "support/gradcheck.hpp"

using namespace ilrm;
using ilrm::testing::random_tensor;

namespace {

template <class T>
AttentionWeights<T> weights(int d, int k, int heads, std::uint64_t seed, double std = 0.3) {
    std::mt19937_64 rng(seed);
    return AttentionWeights<T>::init(d, d * k, d / heads, 4 * d, std, rng);
}

Tensor<float> random_f(Shape s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return random_tensor(std::move(s), rng).cast<float>();
}

} // namespace

TEST(CrossAttention, UpliftShapes) {
    std::mt19937_64 rng(0);
    const auto w = weights<float>(16, 2, 4, 1);
    const auto v = random_f({8, 16}, 2), s = random_f({32, 16}, 3);
    EXPECT_EQ(cross_attention_uplifted(v, s, w, 2, 4).shape(), (Shape{8, 16}));
}

TEST(CrossAttention, UpliftExceedingImageTokensIsConfigError) {
    const auto w = weights<float>(8, 2, 2, 1);
    EXPECT_THROW(cross_attention_uplifted(random_f({5, 8}, 1), random_f({9, 8}, 2), w, 2, 2), ConfigError);
}

TEST(CrossAttention, UpliftOneBitMatchesPlain) {
    const auto w = weights<float>(16, 1, 4, 7);
    const auto v = random_f({6, 16}, 8), s = random_f({20, 16}, 9);
    const auto a = cross_attention_uplifted(v, s, w, 1, 4);
    const auto b = cross_attention_plain(v, s, w, 4);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

// With Wq = 0 every query scores every key equally, so the attended value is
// the mean of the projected image tokens.
TEST(CrossAttention, ZeroQueryGivesMeanOfValues) {
    auto w = weights<double>(8, 2, 2, 3);
    std::fill(w.wq.mutable_data().begin(), w.wq.mutable_data().end(), 0.0);
    std::mt19937_64 rng(4);
    const auto v = random_tensor({3, 8}, rng), s = random_tensor({10, 8}, rng);
    const auto out = cross_attention_uplifted(v, s, w, 2, 2);

    const auto values = matmul(s, w.wv);
    std::vector<double> mean_v(8, 0.0);
    for (std::size_t r = 0; r < 10; ++r)
        for (std::size_t c = 0; c < 8; ++c) mean_v[c] += values.at(r, c) / 10.0;
    std::vector<double> folded;
    for (int rep = 0; rep < 2; ++rep) folded.insert(folded.end(), mean_v.begin(), mean_v.end());
    const Tensor<double> proj = matmul(Tensor<double>({1, 16}, folded), w.wout);
    std::vector<double> resid(24);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 8; ++c) resid[r * 8 + c] = v.at(r, c) + proj[c];
    const auto expected = mlp_residual(Tensor<double>({3, 8}, resid), w);
    for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-12);
}

TEST(SelfAttention, PermutationEquivariant) {
    const auto w = weights<float>(16, 1, 4, 11);
    const auto x = random_f({12, 16}, 12);
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(13);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto a = gather_rows(self_attention_viewpoints(x, w, 4), perm);
    const auto b = self_attention_viewpoints(gather_rows(x, perm), w, 4);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(SelfAttention, SingleTokenClosedForm) {
    const auto w = weights<double>(8, 1, 2, 5);
    std::mt19937_64 rng(6);
    const auto x = random_tensor({1, 8}, rng);
    const auto out = self_attention_viewpoints(x, w, 2);
    // Softmax over one key is 1: attention output is the projected value.
    const auto val = matmul(layer_norm(x, w.norm, kLayerNormEps), w.wv);
    const auto expected = mlp_residual(add(x, matmul(val, w.wout)), w);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(out[i], expected[i], 1e-12);
}

TEST(GroupAttention, SingleViewMatchesPerView) {
    const auto w = weights<float>(16, 2, 4, 21);
    const auto v = random_f({4, 16}, 22), s = random_f({16, 16}, 23);
    const auto a = group_attention(v, s, w, 2, 4);
    const auto b = cross_attention_uplifted(v, s, w, 2, 4);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Minibatch, FullSelectsEverything) {
    const auto sel = select_minibatch(7, 30, MinibatchScheme::Full, 3);
    EXPECT_EQ(sel.viewpoint.size(), 7u);
    EXPECT_EQ(sel.image.size(), 30u);
}

TEST(Minibatch, HalfIsDisjointAndCovering) {
    const auto a = select_minibatch(256, 1024, MinibatchScheme::Half, 0);
    const auto b = select_minibatch(256, 1024, MinibatchScheme::Half, 1);
    std::set<std::size_t> v(a.viewpoint.begin(), a.viewpoint.end());
    for (auto i : b.viewpoint) EXPECT_TRUE(v.insert(i).second);
    EXPECT_EQ(v.size(), 256u);
    std::set<std::size_t> im(a.image.begin(), a.image.end());
    for (auto i : b.image) EXPECT_TRUE(im.insert(i).second);
    EXPECT_EQ(im.size(), 1024u);
}

TEST(Minibatch, StructuredCoverageOverConsecutiveLayers) {
    for (auto [scheme, blocks] : {std::pair{MinibatchScheme::Half, 2}, std::pair{MinibatchScheme::Quarter, 4}}) {
        for (std::size_t lv : {5u, 16u, 33u}) {
            for (std::size_t start = 0; start < 6; ++start) {
                std::set<std::size_t> seen;
                std::size_t mn = lv, mx = 0;
                for (int l = 0; l < blocks; ++l) {
                    const auto sel = select_minibatch(lv, 4 * lv, scheme, start + static_cast<std::size_t>(l));
                    seen.insert(sel.viewpoint.begin(), sel.viewpoint.end());
                    mn = std::min(mn, sel.viewpoint.size());
                    mx = std::max(mx, sel.viewpoint.size());
                }
                EXPECT_EQ(seen.size(), lv);
                EXPECT_LE(mx - mn, 1u);
            }
        }
    }
}

TEST(Minibatch, RandomIsSeededQuarter) {
    const auto a = select_minibatch(64, 256, MinibatchScheme::Random, 2, 5);
    const auto b = select_minibatch(64, 256, MinibatchScheme::Random, 2, 5);
    EXPECT_EQ(a.viewpoint, b.viewpoint);
    EXPECT_EQ(a.viewpoint.size(), 16u);
    EXPECT_EQ(a.image.size(), 64u);
    std::set<std::size_t> u(a.image.begin(), a.image.end());
    EXPECT_EQ(u.size(), 64u);
}

namespace {

Camera cam_at(double x) {
    Camera c;
    c.intrinsics = {20, 20, 8, 8, 16, 16};
    c.pose = look_at(Vec3(x, 0.1 * x, -3), Vec3::Zero());
    return c;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 16;
    cfg.heads = 2;
    cfg.patch = 4;
    cfg.uplift = 2;
    cfg.viewpoint_res = ViewpointRes::H;
    return cfg;
}

} // namespace

TEST(Forward, ShapesAndZeroLayers) {
    auto cfg = tiny_config();
    const auto model = Model<float>::init(cfg);
    const std::vector<Camera> cams{cam_at(-1), cam_at(1)};
    const std::vector<Image> imgs{Image(16, 16, 0.3f), Image(16, 16, 0.6f)};
    const auto out = forward(model, std::span<const Camera>(cams), std::span<const Image>(imgs));
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].tokens.shape(), (Shape{4, 16}));

    cfg.layers = 0;
    const auto m0 = Model<float>::init(cfg);
    const auto raw = forward(m0, std::span<const Camera>(cams), std::span<const Image>(imgs));
    const auto tok = tokenize_viewpoint(plucker_rays(cams[1], 8, 8), m0.tokenizer, 4);
    for (std::size_t i = 0; i < tok.tokens.numel(); ++i) EXPECT_EQ(raw[1].tokens[i], tok.tokens[i]);
}

TEST(Forward, MinibatchLeavesUnselectedTokensUntouchedByCross) {
    auto cfg = tiny_config();
    cfg.layers = 1;
    cfg.use_self_attention = false;
    cfg.minibatch = MinibatchScheme::Half;
    const auto model = Model<double>::init(cfg);
    const std::vector<Camera> cams{cam_at(0.5)};
    const std::vector<Image> imgs{Image(16, 16, 0.4f)};
    const auto out = forward(model, std::span<const Camera>(cams), std::span<const Image>(imgs));
    const auto tok = tokenize_viewpoint(plucker_rays(cams[0], 8, 8), model.tokenizer, 4);
    const auto sel = select_minibatch(4, 16, MinibatchScheme::Half, 0);
    for (std::size_t r = 0; r < 4; ++r) {
        const bool picked = std::find(sel.viewpoint.begin(), sel.viewpoint.end(), r) != sel.viewpoint.end();
        double diff = 0;
        for (std::size_t c = 0; c < 16; ++c) diff += std::abs(out[0].tokens.at(r, c) - tok.tokens.at(r, c));
        if (picked)
            EXPECT_GT(diff, 0.0);
        else
            EXPECT_EQ(diff, 0.0);
    }
}

TEST(Forward, UpliftTooLargeIsConfigError) {
    auto cfg = tiny_config();
    cfg.viewpoint_res = ViewpointRes::F;
    const auto model = Model<float>::init(cfg);
    const std::vector<Camera> cams{cam_at(0)};
    const std::vector<Image> imgs{Image(16, 16)};
    EXPECT_THROW(forward(model, std::span<const Camera>(cams), std::span<const Image>(imgs)), ConfigError);
}

TEST(Model, ParameterNamesAreUniqueAndCountMatches) {
    const auto model = Model<float>::init(tiny_config());
    std::set<std::string> names;
    std::size_t n = 0;
    for (const auto& [name, t] : model.named_parameters()) {
        EXPECT_TRUE(names.insert(name).second) << name;
        n += t.numel();
    }
    EXPECT_EQ(n, model.parameter_count());
}

TEST(Model, InitStdIsRespected) {
    ModelConfig cfg = tiny_config();
    cfg.hidden = 64;
    cfg.heads = 4;
    const auto model = Model<double>::init(cfg);
    double s2 = 0;
    for (double v : model.layers[0].self.mlp_in.data()) s2 += v * v;
    const double sd = std::sqrt(s2 / static_cast<double>(model.layers[0].self.mlp_in.numel()));
    EXPECT_NEAR(sd, 0.02, 0.001);
    for (double v : model.layers[0].cross.norm.data()) EXPECT_EQ(v, 1.0);
}

TEST(UpdateBlocks, LayerGradientsMatchFiniteDifferences) {
    auto w = weights<double>(8, 2, 2, 31, 0.3);
    std::mt19937_64 rng(32);
    auto v = random_tensor({3, 8}, rng), s = random_tensor({8, 8}, rng);
    std::vector<std::pair<std::string, Tensor<double>>> leaves{{"v", v}, {"s", s}};
    w.for_each("cross.", [&](const std::string& n, const Tensor<double>& t) { leaves.emplace_back(n, t); });
    const auto checks = ilrm::testing::gradcheck(
        [&] {
            return ilrm::testing::weighted_sum(self_attention_viewpoints(cross_attention_uplifted(v, s, w, 2, 2),
                                                                         weights<double>(8, 1, 2, 33), 2));
        },
        leaves);
    for (const auto& c : checks) EXPECT_LE(c.rel_err, 1e-6) << c.name;
}
