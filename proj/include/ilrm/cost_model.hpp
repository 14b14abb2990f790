#pragma once

// Closed-form cost accounting: attention FLOPs, attention-score ratios of the
// four multi-view context schemes, parameter and Gaussian counts, and a rough
// activation-memory estimate. FLOPs count a multiply-add as two operations.

#include <cstdint>
#include <string>
#include <vector>

#include "ilrm/config.hpp"

namespace ilrm {

using Count = std::uint64_t;

// One per-view cross-attention without uplifting: Q/K/V/output projections
// plus the score and value products.
inline Count cross_attn_flops(Count d, Count lv, Count li) {
    if (d == 0 || lv == 0 || li == 0) throw ValidationError("cross_attn_flops: all sizes must be positive");
    return 4 * d * d * (lv + li) + 4 * lv * li * d;
}

// Query-key score pairs of each scheme, plus the ratios to scheme (a).
//  (a) full attention over all image tokens of all views
//  (b) full-resolution viewpoint tokens cross-attending to all image tokens
//  (c) reduced viewpoint tokens cross-attending to all image tokens
//  (d) per-view cross-attention followed by self-attention over viewpoint tokens
struct SchemeScoreCost {
    Count full = 0, decoupled = 0, group = 0, two_stage = 0;
    double ratio_full = 1, ratio_decoupled = 0, ratio_group = 0, ratio_two_stage = 0;
};

inline SchemeScoreCost scheme_score_cost(Count n, Count h, Count w, Count p, Count viewpoint_factor) {
    if (n == 0 || p == 0 || viewpoint_factor == 0 || h % p != 0 || w % p != 0 ||
        h % (p * viewpoint_factor) != 0 || w % (p * viewpoint_factor) != 0) {
        throw ValidationError("scheme_score_cost: image size must be divisible by patch x viewpoint factor");
    }
    const Count image_tokens = (h / p) * (w / p);
    const Count view_tokens = image_tokens / (viewpoint_factor * viewpoint_factor);
    SchemeScoreCost c;
    c.full = (n * image_tokens) * (n * image_tokens);
    c.decoupled = (n * image_tokens) * (n * image_tokens);
    c.group = (n * view_tokens) * (n * image_tokens);
    c.two_stage = n * (view_tokens * image_tokens) + (n * view_tokens) * (n * view_tokens);
    const auto base = static_cast<double>(c.full);
    c.ratio_full = 1.0;
    c.ratio_decoupled = static_cast<double>(c.decoupled) / base;
    c.ratio_group = static_cast<double>(c.group) / base;
    c.ratio_two_stage = static_cast<double>(c.two_stage) / base;
    return c;
}

inline Count gaussian_count(Count n, Count hv, Count wv) {
    if (n == 0 || hv == 0 || wv == 0) throw ValidationError("gaussian_count: dimensions must be positive");
    return n * hv * wv;
}

struct ParameterBreakdown {
    Count tokenizer = 0;
    Count cross_per_layer = 0;
    Count self_per_layer = 0;
    Count decoder = 0;
    Count total = 0;
};

inline ParameterBreakdown parameter_breakdown(const ModelConfig& cfg) {
    cfg.validate();
    const auto d = static_cast<Count>(cfg.hidden);
    const auto p2 = static_cast<Count>(cfg.patch) * static_cast<Count>(cfg.patch);
    const auto dq = d * static_cast<Count>(cfg.effective_uplift());
    const auto dm = static_cast<Count>(cfg.mlp_hidden());
    const auto hd = static_cast<Count>(cfg.head_dim());
    ParameterBreakdown b;
    b.tokenizer = 6 * p2 * d + 9 * p2 * d + 2 * d;
    const Count mlp = d + d * dm + dm * d;  // pre-LN + two linears
    b.cross_per_layer = d + d * dq + 2 * d * d + dq * d + 2 * hd + mlp;
    b.self_per_layer = d + 4 * d * d + 2 * hd + mlp;
    b.decoder = d * 16 * p2;
    b.total = b.tokenizer + static_cast<Count>(cfg.layers) * (b.cross_per_layer + b.self_per_layer) + b.decoder;
    return b;
}

inline Count parameter_count(const ModelConfig& cfg) { return parameter_breakdown(cfg).total; }

struct LayerFlops {
    Count cross = 0;  // all views, including uplift and MLP
    Count self = 0;
    Count total() const { return cross + self; }
};

struct CostReport {
    ModelConfig config;
    Count views = 0, image_h = 0, image_w = 0, viewpoint_h = 0, viewpoint_w = 0;
    Count image_tokens = 0, viewpoint_tokens = 0;  // per view
    Count cross_flops_full = 0, cross_flops_half = 0, cross_flops_quarter = 0;
    SchemeScoreCost schemes;
    std::vector<LayerFlops> layers;
    Count total_flops = 0;
    Count parameters = 0;
    Count gaussians = 0;
    Count activation_bytes = 0;
};

inline CostReport cost_report(const ModelConfig& cfg, Count views, Count image_h, Count image_w) {
    cfg.validate();
    const auto factor = static_cast<Count>(downsample_factor(cfg.viewpoint_res));
    const auto p = static_cast<Count>(cfg.patch);
    if (image_h % (p * factor) != 0 || image_w % (p * factor) != 0)
        throw ConfigError("cost_report: image size not divisible by patch x viewpoint factor");
    CostReport r;
    r.config = cfg;
    r.views = views;
    r.image_h = image_h;
    r.image_w = image_w;
    r.viewpoint_h = image_h / factor;
    r.viewpoint_w = image_w / factor;
    r.image_tokens = (image_h / p) * (image_w / p);
    r.viewpoint_tokens = (r.viewpoint_h / p) * (r.viewpoint_w / p);
    const auto d = static_cast<Count>(cfg.hidden);
    const Count lv = r.viewpoint_tokens, li = r.image_tokens;
    r.cross_flops_full = cross_attn_flops(d, lv, li);
    r.cross_flops_half = cross_attn_flops(d, std::max<Count>(1, lv / 2), std::max<Count>(1, li / 2));
    r.cross_flops_quarter = cross_attn_flops(d, std::max<Count>(1, lv / 4), std::max<Count>(1, li / 4));
    r.schemes = scheme_score_cost(views, image_h, image_w, p, factor);

    const auto k = static_cast<Count>(cfg.effective_uplift());
    const auto dm = static_cast<Count>(cfg.mlp_hidden());
    const Count frac = static_cast<Count>(minibatch_blocks(cfg.minibatch));
    const Count lv_sel = (lv + frac - 1) / frac, li_sel = (li + frac - 1) / frac;
    const Count nv = views * lv;
    for (int l = 0; l < cfg.layers; ++l) {
        LayerFlops f;
        if (cfg.use_group_attention) {
            f.cross = 2 * (nv * d * d * k + 2 * views * li * d * d + nv * d * k * d) + 4 * (nv * k) * (views * li) * d +
                      4 * nv * d * dm;
        } else {
            f.cross = views * (2 * (lv_sel * d * d * k + 2 * li_sel * d * d + lv_sel * d * k * d) +
                               4 * (lv_sel * k) * li_sel * d + 4 * lv_sel * d * dm);
        }
        if (cfg.use_self_attention) f.self = 8 * nv * d * d + 4 * nv * nv * d + 4 * nv * d * dm;
        r.layers.push_back(f);
        r.total_flops += f.total();
    }
    r.parameters = parameter_count(cfg);
    r.gaussians = gaussian_count(views, r.viewpoint_h, r.viewpoint_w);

    // Forward activations kept for backward at f32: token streams, attention
    // probabilities and MLP hidden states per layer.
    const auto heads = static_cast<Count>(cfg.heads);
    Count per_layer = 0;
    per_layer += views * (lv_sel * k * li_sel) * heads + 8 * nv * d + 2 * views * li * d + nv * dm;
    if (cfg.use_self_attention) per_layer += nv * nv * heads + 6 * nv * d + nv * dm;
    r.activation_bytes = 4 * (views * (lv + li) * d + static_cast<Count>(cfg.layers) * per_layer + r.gaussians * 16);
    return r;
}

} // namespace ilrm
