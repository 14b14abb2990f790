#pragma once

// Update layers: per-view cross-attention from viewpoint tokens to image
// tokens (with token uplifting and mini-batch sampling), followed by
// self-attention across the viewpoint tokens of all views. Pre-LN residual
// blocks, QK-RMSNorm per head, no biases anywhere.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "ilrm/config.hpp"
#include "ilrm/tokenizer.hpp"

namespace ilrm {

template <class T>
struct AttentionWeights {
    Tensor<T> norm;      // pre-LN scale, d
    Tensor<T> wq;        // d x (d * k)
    Tensor<T> wk;        // d x d
    Tensor<T> wv;        // d x d
    Tensor<T> wout;      // (d * k) x d
    Tensor<T> q_norm;    // head_dim
    Tensor<T> k_norm;    // head_dim
    Tensor<T> mlp_norm;  // d
    Tensor<T> mlp_in;    // d x (d * ratio)
    Tensor<T> mlp_out;   // (d * ratio) x d

    static AttentionWeights init(int hidden, int query_width, int head_dim, int mlp_hidden, double stddev,
                                 std::mt19937_64& rng) {
        const auto d = static_cast<std::size_t>(hidden);
        const auto dq = static_cast<std::size_t>(query_width);
        const auto dm = static_cast<std::size_t>(mlp_hidden);
        AttentionWeights w;
        w.norm = ones_parameter<T>(d);
        w.wq = normal_parameter<T>({d, dq}, stddev, rng);
        w.wk = normal_parameter<T>({d, d}, stddev, rng);
        w.wv = normal_parameter<T>({d, d}, stddev, rng);
        w.wout = normal_parameter<T>({dq, d}, stddev, rng);
        w.q_norm = ones_parameter<T>(static_cast<std::size_t>(head_dim));
        w.k_norm = ones_parameter<T>(static_cast<std::size_t>(head_dim));
        w.mlp_norm = ones_parameter<T>(d);
        w.mlp_in = normal_parameter<T>({d, dm}, stddev, rng);
        w.mlp_out = normal_parameter<T>({dm, d}, stddev, rng);
        return w;
    }

    template <class F>
    void for_each(const std::string& prefix, F&& f) const {
        f(prefix + "norm", norm);
        f(prefix + "wq", wq);
        f(prefix + "wk", wk);
        f(prefix + "wv", wv);
        f(prefix + "wout", wout);
        f(prefix + "q_norm", q_norm);
        f(prefix + "k_norm", k_norm);
        f(prefix + "mlp_norm", mlp_norm);
        f(prefix + "mlp_in", mlp_in);
        f(prefix + "mlp_out", mlp_out);
    }
};

template <class T>
struct UpdateLayerWeights {
    AttentionWeights<T> cross;
    AttentionWeights<T> self;
};

// Scaled dot-product attention with per-head RMS normalization of queries and keys.
template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                               const Tensor<T>& q_norm, const Tensor<T>& k_norm) {
    const std::size_t d = q.dim(1);
    if (k.dim(1) != d || v.dim(1) != d || k.dim(0) != v.dim(0)) {
        throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                             shape_str(v.shape()));
    }
    const auto h = static_cast<std::size_t>(heads);
    const std::size_t hd = d / h;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));
    const auto qn = reshape(rms_norm(reshape(q, {q.dim(0) * h, hd}), q_norm, T(kRmsNormEps)), {q.dim(0), d});
    const auto kn = reshape(rms_norm(reshape(k, {k.dim(0) * h, hd}), k_norm, T(kRmsNormEps)), {k.dim(0), d});
    std::vector<Tensor<T>> outs;
    outs.reserve(h);
    for (std::size_t i = 0; i < h; ++i) {
        const auto qh = slice_cols(qn, i * hd, hd);
        const auto kh = slice_cols(kn, i * hd, hd);
        const auto vh = slice_cols(v, i * hd, hd);
        const auto probs = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt));
        outs.push_back(matmul(probs, vh));
    }
    return h == 1 ? outs.front() : concat_cols(outs);
}

// x + W2 gelu(W1 LN(x))
template <class T>
Tensor<T> mlp_residual(const Tensor<T>& x, const AttentionWeights<T>& w) {
    const auto hdn = gelu(matmul(layer_norm(x, w.mlp_norm, T(kLayerNormEps)), w.mlp_in));
    return add(x, matmul(hdn, w.mlp_out));
}

// Cross-attention from one view's viewpoint tokens (Lv x d) to its image
// tokens (Li x d). The query projection widens each token to d*k, which is
// read as k consecutive d-dim queries; attended outputs are folded back to
// d*k and projected to d.
template <class T>
Tensor<T> cross_attention_uplifted(const Tensor<T>& v, const Tensor<T>& s, const AttentionWeights<T>& w,
                                   int uplift, int heads) {
    const std::size_t lv = v.dim(0), d = v.dim(1);
    const auto k = static_cast<std::size_t>(uplift);
    if (lv * k > s.dim(0)) {
        throw ConfigError("cross-attention: uplifted query length " + std::to_string(lv * k) +
                          " exceeds image token count " + std::to_string(s.dim(0)));
    }
    if (w.wq.dim(1) != d * k) {
        throw DimensionError("cross-attention: query projection " + shape_str(w.wq.shape()) +
                             " does not match uplift factor " + std::to_string(uplift));
    }
    const auto x = layer_norm(v, w.norm, T(kLayerNormEps));
    const auto q = reshape(matmul(x, w.wq), {lv * k, d});
    const auto attn = multi_head_attention(q, matmul(s, w.wk), matmul(s, w.wv), heads, w.q_norm, w.k_norm);
    const auto out = add(v, matmul(reshape(attn, {lv, d * k}), w.wout));
    return mlp_residual(out, w);
}

// Standard pre-LN cross-attention without any uplifting reshape.
template <class T>
Tensor<T> cross_attention_plain(const Tensor<T>& v, const Tensor<T>& s, const AttentionWeights<T>& w, int heads) {
    const auto x = layer_norm(v, w.norm, T(kLayerNormEps));
    const auto attn = multi_head_attention(matmul(x, w.wq), matmul(s, w.wk), matmul(s, w.wv), heads, w.q_norm,
                                           w.k_norm);
    return mlp_residual(add(v, matmul(attn, w.wout)), w);
}

// Self-attention over the viewpoint tokens of all views, concatenated in view order.
template <class T>
Tensor<T> self_attention_viewpoints(const Tensor<T>& all_v, const AttentionWeights<T>& w, int heads) {
    const auto x = layer_norm(all_v, w.norm, T(kLayerNormEps));
    const auto attn = multi_head_attention(matmul(x, w.wq), matmul(x, w.wk), matmul(x, w.wv), heads, w.q_norm,
                                           w.k_norm);
    return mlp_residual(add(all_v, matmul(attn, w.wout)), w);
}

// Ablation: one joint cross-attention from every view's viewpoint tokens to
// every view's image tokens, in place of the per-view sublayer.
template <class T>
Tensor<T> group_attention(const Tensor<T>& all_v, const Tensor<T>& all_s, const AttentionWeights<T>& w, int uplift,
                          int heads) {
    return cross_attention_uplifted(all_v, all_s, w, uplift, heads);
}

struct MinibatchSelection {
    std::vector<std::size_t> viewpoint;
    std::vector<std::size_t> image;
};

// Token subsets used by the cross sublayer of layer `layer_index`.
//
// Half and Quarter split both token sets into 2 or 4 strided blocks
// (index mod blocks) and pick block layer_index mod blocks, so any run of
// `blocks` consecutive layers touches every token. Random draws the same
// fraction as Quarter uniformly without replacement from `seed`.
inline MinibatchSelection select_minibatch(std::size_t lv, std::size_t li, MinibatchScheme scheme,
                                           std::size_t layer_index, std::uint64_t seed = 0) {
    MinibatchSelection sel;
    const auto blocks = static_cast<std::size_t>(minibatch_blocks(scheme));
    if (scheme == MinibatchScheme::Random) {
        std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (layer_index + 1)));
        auto draw = [&](std::size_t n) {
            std::vector<std::size_t> idx(n);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            const std::size_t count = (n + blocks - 1) / blocks;
            for (std::size_t i = 0; i < count; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, n - 1);
                std::swap(idx[i], idx[pick(rng)]);
            }
            idx.resize(count);
            std::sort(idx.begin(), idx.end());
            return idx;
        };
        sel.viewpoint = draw(lv);
        sel.image = draw(li);
        return sel;
    }
    const std::size_t block = layer_index % blocks;
    for (std::size_t i = block; i < lv; i += blocks) sel.viewpoint.push_back(i);
    for (std::size_t i = block; i < li; i += blocks) sel.image.push_back(i);
    return sel;
}

template <class T>
struct Model {
    ModelConfig config;
    TokenizerWeights<T> tokenizer;
    std::vector<UpdateLayerWeights<T>> layers;
    Tensor<T> head;  // d x 16p^2 Gaussian decoder

    static Model init(const ModelConfig& cfg) {
        cfg.validate();
        std::mt19937_64 rng(cfg.seed);
        Model m;
        m.config = cfg;
        m.tokenizer = TokenizerWeights<T>::init(cfg.patch, cfg.hidden, cfg.init_std, rng);
        for (int l = 0; l < cfg.layers; ++l) {
            UpdateLayerWeights<T> lw;
            lw.cross = AttentionWeights<T>::init(cfg.hidden, cfg.hidden * cfg.effective_uplift(), cfg.head_dim(),
                                                 cfg.mlp_hidden(), cfg.init_std, rng);
            lw.self = AttentionWeights<T>::init(cfg.hidden, cfg.hidden, cfg.head_dim(), cfg.mlp_hidden(),
                                                cfg.init_std, rng);
            m.layers.push_back(std::move(lw));
        }
        const auto p2 = static_cast<std::size_t>(cfg.patch * cfg.patch);
        m.head = normal_parameter<T>({static_cast<std::size_t>(cfg.hidden), 16 * p2}, cfg.init_std, rng);
        return m;
    }

    // Parameters in a fixed order, keyed by dotted names.
    std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        auto push = [&](const std::string& name, const Tensor<T>& t) { out.emplace_back(name, t); };
        push("tokenizer.viewpoint_proj", tokenizer.viewpoint_proj);
        push("tokenizer.image_proj", tokenizer.image_proj);
        push("tokenizer.viewpoint_norm", tokenizer.viewpoint_norm);
        push("tokenizer.image_norm", tokenizer.image_norm);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string base = "layers." + std::to_string(l) + ".";
            layers[l].cross.for_each(base + "cross.", push);
            layers[l].self.for_each(base + "self.", push);
        }
        push("head", head);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : named_parameters()) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : named_parameters()) t.zero_grad();
    }
};

// Viewpoint grid for a given image size: dimensions reduced by the config's
// viewpoint resolution preset.
inline std::pair<int, int> viewpoint_grid(const ModelConfig& cfg, int image_h, int image_w) {
    const int f = downsample_factor(cfg.viewpoint_res);
    if (image_h % f != 0 || image_w % f != 0)
        throw ConfigError("image size is not divisible by the viewpoint downsample factor");
    const int hv = image_h / f, wv = image_w / f;
    if (hv % cfg.patch != 0 || wv % cfg.patch != 0 || image_h % cfg.patch != 0 || image_w % cfg.patch != 0) {
        throw ConfigError("image " + std::to_string(image_h) + "x" + std::to_string(image_w) + " / viewpoint " +
                          std::to_string(hv) + "x" + std::to_string(wv) + " not divisible by patch " +
                          std::to_string(cfg.patch));
    }
    return {hv, wv};
}

// Runs tokenization and all update layers. `step` only seeds the Random
// mini-batch scheme.
template <class T>
std::vector<ViewTokens<T>> forward(const Model<T>& model, std::span<const Camera> cameras,
                                   std::span<const Image> images, std::uint64_t step = 0) {
    const auto& cfg = model.config;
    if (cameras.empty() || cameras.size() != images.size())
        throw ValidationError("forward: need one image per camera and at least one view");
    const int h = images[0].height, w = images[0].width;
    for (const auto& img : images)
        if (img.height != h || img.width != w) throw ValidationError("forward: all views must share image size");
    const auto [hv, wv] = viewpoint_grid(cfg, h, w);

    const std::size_t n = cameras.size();
    std::vector<ViewTokens<T>> views;
    std::vector<Tensor<T>> image_tokens;
    for (std::size_t i = 0; i < n; ++i) {
        views.push_back(tokenize_viewpoint(plucker_rays(cameras[i], hv, wv), model.tokenizer, cfg.patch));
        image_tokens.push_back(tokenize_image(images[i], plucker_rays(cameras[i], h, w), model.tokenizer, cfg.patch)
                                   .tokens);
    }
    if (model.layers.empty()) return views;

    const std::size_t lv = views[0].length(), li = image_tokens[0].dim(0);
    const int k = cfg.effective_uplift();
    if (lv * static_cast<std::size_t>(k) > li) {
        throw ConfigError("viewpoint tokens x uplift (" + std::to_string(lv) + " x " + std::to_string(k) +
                          ") exceed image tokens (" + std::to_string(li) + ")");
    }

    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& lw = model.layers[l];
        if (cfg.use_group_attention) {
            std::vector<Tensor<T>> vs;
            for (const auto& v : views) vs.push_back(v.tokens);
            const auto out = group_attention(concat_rows(vs), concat_rows(image_tokens), lw.cross, k, cfg.heads);
            for (std::size_t i = 0; i < n; ++i) views[i].tokens = slice_rows(out, i * lv, lv);
        } else {
            const auto sel = select_minibatch(lv, li, cfg.minibatch, l, cfg.seed ^ (step * 0xD1B54A32D192ED03ULL));
            for (std::size_t i = 0; i < n; ++i) {
                auto& v = views[i].tokens;
                if (cfg.minibatch == MinibatchScheme::Full) {
                    v = cross_attention_uplifted(v, image_tokens[i], lw.cross, k, cfg.heads);
                } else {
                    const auto upd = cross_attention_uplifted(gather_rows(v, sel.viewpoint),
                                                              gather_rows(image_tokens[i], sel.image), lw.cross, k,
                                                              cfg.heads);
                    v = scatter_rows(v, sel.viewpoint, upd);
                }
            }
        }
        if (cfg.use_self_attention) {
            std::vector<Tensor<T>> vs;
            for (const auto& v : views) vs.push_back(v.tokens);
            const auto out = self_attention_viewpoints(concat_rows(vs), lw.self, cfg.heads);
            for (std::size_t i = 0; i < n; ++i) views[i].tokens = slice_rows(out, i * lv, lv);
        }
    }
    return views;
}

} // namespace ilrm
