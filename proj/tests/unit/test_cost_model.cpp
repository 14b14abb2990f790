#include <gtest/gtest.h>

#include "ilrm/cost_model.hpp"
#include "ilrm/update_blocks.hpp"

using namespace ilrm;

TEST(CrossAttnFlops, ReferenceValues) {
    EXPECT_EQ(cross_attn_flops(768, 256, 1024), 3825205248ull);
    EXPECT_EQ(cross_attn_flops(768, 128, 512), 1711276032ull);
    EXPECT_EQ(cross_attn_flops(768, 64, 256), 805306368ull);
    EXPECT_THROW(cross_attn_flops(0, 1, 1), ValidationError);
}

TEST(CrossAttnFlops, HalvingBothLengths) {
    const Count d = 96, lv = 40, li = 160;
    const Count proj = 4 * d * d * (lv + li), score = 4 * lv * li * d;
    EXPECT_EQ(cross_attn_flops(d, lv, li), proj + score);
    EXPECT_EQ(cross_attn_flops(d, lv / 2, li / 2), proj / 2 + score / 4);
}

TEST(SchemeScores, ReferenceRatio) {
    const auto c = scheme_score_cost(16, 256, 256, 8, 2);
    EXPECT_EQ(c.ratio_full, 1.0);
    EXPECT_EQ(c.ratio_decoupled, 1.0);
    EXPECT_EQ(c.ratio_group, 0.25);
    EXPECT_EQ(c.ratio_two_stage, 0.078125);
    EXPECT_EQ(c.two_stage, 20971520ull);
    EXPECT_EQ(c.full, 268435456ull);
}

TEST(SchemeScores, SingleViewAndRescaling) {
    const auto one = scheme_score_cost(1, 64, 64, 8, 2);
    EXPECT_EQ(one.full, one.decoupled);
    EXPECT_EQ(one.group, 16ull * 64);
    EXPECT_EQ(one.two_stage, 16ull * 64 + 16 * 16);
    const auto a = scheme_score_cost(4, 64, 96, 8, 2), b = scheme_score_cost(4, 128, 192, 16, 2);
    EXPECT_EQ(a.ratio_group, b.ratio_group);
    EXPECT_EQ(a.ratio_two_stage, b.ratio_two_stage);
    EXPECT_THROW(scheme_score_cost(4, 60, 64, 8, 2), ValidationError);
}

TEST(GaussianCount, ReferenceConfigs) {
    EXPECT_EQ(gaussian_count(8, 128, 128), 131072ull);
    EXPECT_EQ(gaussian_count(6, 128, 224), 172032ull);
    EXPECT_EQ(gaussian_count(12, 256, 480), 1474560ull);
}

TEST(ParameterCount, MatchesInstantiatedModel) {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 24;
    cfg.heads = 3;
    cfg.patch = 4;
    EXPECT_EQ(parameter_count(cfg), Model<float>::init(cfg).parameter_count());
    cfg.use_uplift = false;
    EXPECT_EQ(parameter_count(cfg), Model<float>::init(cfg).parameter_count());
}

TEST(ParameterCount, FullScaleTotals) {
    ModelConfig cfg;
    const double full = static_cast<double>(parameter_count(cfg));
    EXPECT_NEAR(full / 185e6, 1.0, 0.03);
    cfg.use_uplift = false;
    EXPECT_NEAR(static_cast<double>(parameter_count(cfg)) / 171e6, 1.0, 0.03);
}

TEST(ParameterCount, AffineInLayers) {
    ModelConfig cfg;
    std::vector<Count> counts;
    for (int l : {3, 6, 9, 12}) {
        cfg.layers = l;
        counts.push_back(parameter_count(cfg));
    }
    for (std::size_t i = 1; i < counts.size(); ++i) EXPECT_GT(counts[i], counts[i - 1]);
    EXPECT_EQ(counts[1] - counts[0], counts[2] - counts[1]);
    EXPECT_EQ(counts[2] - counts[1], counts[3] - counts[2]);
}

TEST(CostReport, TotalsAreSumsOfParts) {
    ModelConfig cfg;
    const auto r = cost_report(cfg, 8, 256, 256);
    Count total = 0;
    for (const auto& l : r.layers) total += l.total();
    EXPECT_EQ(total, r.total_flops);
    EXPECT_EQ(r.cross_flops_full, 3825205248ull);
    EXPECT_EQ(r.cross_flops_half, 1711276032ull);
    EXPECT_EQ(r.cross_flops_quarter, 805306368ull);
    EXPECT_EQ(r.gaussians, 131072ull);
    EXPECT_EQ(r.image_tokens, 1024ull);
    EXPECT_EQ(r.viewpoint_tokens, 256ull);
    EXPECT_GT(r.activation_bytes, 0ull);
}

TEST(CostReport, DoublingViewsScalesCrossAndSelf) {
    ModelConfig cfg;
    cfg.use_uplift = false;
    const auto a = cost_report(cfg, 4, 256, 256), b = cost_report(cfg, 8, 256, 256);
    EXPECT_EQ(b.layers[0].cross, 2 * a.layers[0].cross);
    // Self-attention: the score term grows 4x, projections and MLP 2x.
    const Count d = 768, nv_a = 4 * 256;
    const Count score_a = 4 * nv_a * nv_a * d;
    EXPECT_EQ(b.layers[0].self - 2 * (a.layers[0].self - score_a), 4 * score_a);
}
