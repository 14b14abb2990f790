#pragma once

// Built-in verification suites: gradients against finite differences, the
// tiled rasterizer against the per-pixel oracle, and geometric / structural
// invariants. Used by `ilrm check` and the acceptance runner.

#include <algorithm>
#include <chrono>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ilrm/gradcheck.hpp"
#include "ilrm/io/scene_io.hpp"
#include "ilrm/training.hpp"

namespace ilrm::check {

struct CheckResult {
    std::string name;
    double value = 0;      // measured error or mismatch count
    double tolerance = 0;  // pass when value <= tolerance
    bool pass = false;
};

inline CheckResult make_result(std::string name, double value, double tolerance) {
    return {std::move(name), value, tolerance, value <= tolerance};
}

inline bool all_pass(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

// Random Gaussians in a cube of half-width `radius` around the origin.
inline GaussianSet random_gaussians(std::mt19937_64& rng, std::size_t n, double radius = 1.2,
                                    double min_scale = 0.01, double max_scale = 0.2) {
    std::uniform_real_distribution<double> u(-1, 1), u01(0, 1);
    std::normal_distribution<double> nrm(0, 1);
    GaussianSet g;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 mean(radius * u(rng), radius * u(rng), radius * u(rng));
        const Vec3 scale(min_scale + (max_scale - min_scale) * u01(rng), min_scale + (max_scale - min_scale) * u01(rng),
                         min_scale + (max_scale - min_scale) * u01(rng));
        Eigen::Vector4d q(nrm(rng), nrm(rng), nrm(rng), nrm(rng));
        q.normalize();
        g.push_back(mean, static_cast<float>(0.05 + 0.94 * u01(rng)), scale, q,
                    Vec3(u01(rng), u01(rng), u01(rng)));
    }
    return g;
}

// Camera at `distance` from the origin looking at it, rotated by `yaw` about the vertical.
inline Camera scene_camera(int w, int h, double distance = 3.0, double yaw = 0.0) {
    Camera c;
    c.intrinsics = {0.9 * w, 0.9 * w, 0.5 * w, 0.5 * h, w, h};
    c.pose = look_at(Vec3(distance * std::sin(yaw), 0.2, -distance * std::cos(yaw)), Vec3::Zero());
    return c;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> nrm(0, 1);
    Eigen::Quaterniond q(nrm(rng), nrm(rng), nrm(rng), nrm(rng));
    q.normalize();
    return q.toRotationMatrix();
}

// ------------------------------------------------------------------ gradients

namespace detail {

inline void add_gradcheck(std::vector<CheckResult>& out, const std::string& name,
                          const std::function<Tensor<double>()>& loss,
                          std::vector<std::pair<std::string, Tensor<double>>> leaves, double tol,
                          std::size_t max_entries = 0) {
    double worst = 0;
    for (const auto& ck : gradcheck(loss, std::move(leaves), 1e-6, max_entries)) worst = std::max(worst, ck.rel_err);
    out.push_back(make_result("grad " + name, worst, tol));
}

} // namespace detail

// Every differentiable op and composite stage, in f64.
inline std::vector<CheckResult> gradient_ops_suite(double tol = 1e-4, std::uint64_t seed = 11) {
    using TD = Tensor<double>;
    std::mt19937_64 rng(seed);
    auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), c = random_tensor({4, 2}, rng);
    auto img = random_tensor({4, 4, 2}, rng), q = random_tensor({3, 4}, rng);
    auto base = random_tensor({5, 4}, rng), vals = random_tensor({2, 4}, rng);
    auto w4 = random_tensor({4}, rng, 0.5, 1.5);
    std::vector<std::pair<std::string, TD>> leaves{{"a", a}, {"b", b}, {"c", c}, {"img", img}, {"q", q},
                                                   {"base", base}, {"v", vals}, {"w", w4}};

    const std::vector<std::pair<std::string, std::function<TD()>>> ops = {
        {"add", [&] { return weighted_sum(add(a, b)); }},
        {"sub", [&] { return weighted_sum(sub(a, b)); }},
        {"mul", [&] { return weighted_sum(mul(a, b)); }},
        {"scale", [&] { return weighted_sum(scale(a, 2.5)); }},
        {"add_scalar", [&] { return weighted_sum(add_scalar(a, 0.5)); }},
        {"square", [&] { return weighted_sum(square(a)); }},
        {"exp", [&] { return weighted_sum(exp(a)); }},
        {"tanh", [&] { return weighted_sum(tanh(a)); }},
        {"sigmoid", [&] { return weighted_sum(sigmoid(a)); }},
        {"clamp", [&] { return weighted_sum(clamp(a, -0.5, 0.5)); }},
        {"gelu", [&] { return weighted_sum(gelu(a)); }},
        {"sum", [&] { return scale(sum(square(a)), 0.3); }},
        {"mean", [&] { return mean(square(a)); }},
        {"mean_last", [&] { return weighted_sum(mean_last(a)); }},
        {"mse", [&] { return mse(a, b); }},
        {"matmul", [&] { return weighted_sum(matmul(a, c)); }},
        {"transpose", [&] { return weighted_sum(transpose(a)); }},
        {"reshape", [&] { return weighted_sum(reshape(a, {2, 6})); }},
        {"slice_cols", [&] { return weighted_sum(slice_cols(a, 1, 2)); }},
        {"concat_cols", [&] { return weighted_sum(concat_cols<double>({a, b})); }},
        {"concat_rows", [&] { return weighted_sum(concat_rows<double>({a, b})); }},
        {"slice_rows", [&] { return weighted_sum(slice_rows(a, 1, 2)); }},
        {"gather_rows", [&] { return weighted_sum(gather_rows(base, {4, 0, 4})); }},
        {"scatter_rows", [&] { return weighted_sum(scatter_rows(base, {3, 1}, vals)); }},
        {"patchify", [&] { return weighted_sum(patchify(img, 2)); }},
        {"unpatchify", [&] { return weighted_sum(unpatchify(reshape(img, {4, 8}), 4, 4, 2)); }},
        {"softmax", [&] { return weighted_sum(softmax(a)); }},
        {"normalize_rows", [&] { return weighted_sum(normalize_rows(q, {1.0, 0.0, 0.0, 0.0})); }},
        {"layer_norm", [&] { return weighted_sum(layer_norm(a, w4)); }},
        {"rms_norm", [&] { return weighted_sum(rms_norm(a, w4)); }},
    };
    std::vector<CheckResult> out;
    for (const auto& [name, f] : ops) detail::add_gradcheck(out, name, f, leaves, tol);

    // Attention sublayers, weights included.
    {
        std::mt19937_64 wr(seed + 1);
        const auto cross = AttentionWeights<double>::init(8, 16, 4, 32, 0.3, wr);
        const auto self = AttentionWeights<double>::init(8, 8, 4, 32, 0.3, wr);
        auto v = random_tensor({3, 8}, rng), s = random_tensor({8, 8}, rng);
        std::vector<std::pair<std::string, TD>> l{{"v", v}, {"s", s}};
        cross.for_each("cross.", [&](const std::string& n, const TD& t) { l.emplace_back(n, t); });
        self.for_each("self.", [&](const std::string& n, const TD& t) { l.emplace_back(n, t); });
        detail::add_gradcheck(out, "cross_attention_uplifted",
                              [&] { return weighted_sum(cross_attention_uplifted(v, s, cross, 2, 2)); }, l, tol);
        detail::add_gradcheck(out, "self_attention_viewpoints",
                              [&] { return weighted_sum(self_attention_viewpoints(v, self, 2)); }, l, tol);
        detail::add_gradcheck(out, "group_attention",
                              [&] { return weighted_sum(group_attention(v, s, cross, 2, 2)); }, l, tol);
    }

    // Decoder stages.
    {
        auto raw = random_tensor({6, 16}, rng, -2, 2);
        detail::add_gradcheck(
            out, "activate",
            [&] {
                const auto act = activate(raw, 0.5, 20.0);
                return add(add(add(weighted_sum(act.offset, 1), weighted_sum(act.depth, 2)),
                               add(weighted_sum(act.opacity, 3), weighted_sum(act.scales, 4))),
                           add(weighted_sum(act.rotations, 5), weighted_sum(act.colors, 6)));
            },
            {{"raw", raw}}, tol);
        Camera cam;
        cam.intrinsics = {5, 5, 2, 1.5, 4, 3};
        cam.pose = look_at(Vec3(0.3, -0.2, -2), Vec3(0, 0, 1));
        auto off = random_tensor({12, 2}, rng, -0.5, 0.5), depth = random_tensor({12, 1}, rng, 0.5, 5.0);
        detail::add_gradcheck(out, "unproject", [&] { return weighted_sum(unproject(off, depth, cam)); },
                              {{"offset", off}, {"depth", depth}}, tol);
        ViewTokens<double> vt{random_tensor({4, 8}, rng), 8, 8, 4};
        auto head = random_tensor({8, 256}, rng, -0.1, 0.1);
        detail::add_gradcheck(out, "decode_tokens", [&] { return weighted_sum(decode_tokens(vt, head)); },
                              {{"tokens", vt.tokens}, {"head", head}}, tol);
    }

    // Differentiable renderer stages.
    {
        const auto g = random_gaussians(rng, 12, 0.6, 0.1, 0.3);
        const Camera cam = scene_camera(12, 10);
        const RenderConfig rc{12, 10, Vec3(0.1, 0.2, 0.3), kTileSize};
        auto t = to_tensors<double>(g);
        detail::add_gradcheck(out, "project_splats",
                              [&] { return weighted_sum(project_splats(t.means, t.scales, t.rotations, cam)); },
                              {{"means", t.means}, {"scales", t.scales}, {"rotations", t.rotations}}, tol);
        auto splats = project_splats(t.means, t.scales, t.rotations, cam);
        splats.set_requires_grad(true);
        detail::add_gradcheck(out, "composite", [&] { return weighted_sum(composite(splats, t.opacity, t.colors, rc)); },
                              {{"splats", splats}, {"opacity", t.opacity}, {"colors", t.colors}}, tol);
        detail::add_gradcheck(out, "rasterize_naive_diff", [&] { return weighted_sum(rasterize_naive_diff(t, cam, rc)); },
                              {{"means", t.means}, {"opacity", t.opacity}, {"scales", t.scales},
                               {"rotations", t.rotations}, {"colors", t.colors}},
                              tol);
    }
    return out;
}

// End to end: 2 input views at 16x16, 8x8 viewpoint grid, one update layer,
// naive renderer and MSE against a held-out view. Probes `entries` sampled
// coordinates of every parameter tensor.
inline std::vector<CheckResult> micro_pipeline_suite(double tol = 1e-4, std::size_t entries = 6,
                                                     std::uint64_t seed = 5) {
    const auto synth = io::synth_scene({seed, 3, 16, 16, 24});
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.hidden = 8;
    cfg.heads = 2;
    cfg.patch = 4;
    cfg.uplift = 2;
    cfg.viewpoint_res = ViewpointRes::H;
    cfg.init_std = 0.2;
    cfg.seed = seed;
    const auto model = Model<double>::init(cfg);
    std::mt19937_64 rng(seed);
    const auto split = select_views(synth.scene, 2, 1, rng);
    const auto views = normalize_views(synth.scene, split);
    const Image& gt = *views.target_images[0];
    const auto gt_t = image_tensor<double>(gt);
    const RenderConfig rc{gt.width, gt.height, Vec3::Zero(), kTileSize};
    auto loss = [&] {
        const auto g = reconstruct(model, std::span<const Camera>(views.input_cameras),
                                   std::span<const Image>(views.input_images), views.near, views.far);
        return mse_loss(rasterize_naive_diff(g, views.target_cameras[0], rc), gt_t);
    };
    std::vector<CheckResult> out;
    for (const auto& ck : gradcheck(loss, model.named_parameters(), 1e-6, entries, seed))
        out.push_back(make_result("pipeline " + ck.name, ck.rel_err, tol));
    return out;
}

// --------------------------------------------------------------------- oracle

// Tiled rasterizer against the per-pixel oracle; value is the max abs
// per-channel difference over each scene.
inline std::vector<CheckResult> oracle_suite(int scenes = 100, int max_splats = 1000, double tol = 1e-5,
                                             std::uint64_t seed = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> count(1, max_splats), size(16, 72);
    std::uniform_real_distribution<double> u01(0, 1);
    std::vector<CheckResult> out;
    for (int s = 0; s < scenes; ++s) {
        const auto g = random_gaussians(rng, static_cast<std::size_t>(count(rng)), 1.2, 0.01, 0.3);
        const int w = size(rng), h = size(rng);
        const Camera cam = scene_camera(w, h, 2.0 + 2.0 * u01(rng), 6.283185307179586 * u01(rng));
        const RenderConfig rc{w, h, Vec3(u01(rng), u01(rng), u01(rng)), kTileSize};
        const auto splats = project(g, cam);
        out.push_back(make_result("oracle scene " + std::to_string(s) + " (" + std::to_string(g.size()) + " splats)",
                                  max_abs_diff(rasterize_tiled(splats, rc), render_oracle(splats, rc)), tol));
    }
    return out;
}

// ------------------------------------------------------------------ invariants

inline std::vector<CheckResult> geometry_suite(int cameras = 100, std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-3, 3), f(20, 200);
    std::uniform_int_distribution<int> res(4, 40);
    std::size_t rays = 0, bad_norm = 0, bad_moment = 0;
    for (int c = 0; c < cameras; ++c) {
        Camera cam;
        const int w = res(rng), h = res(rng);
        cam.intrinsics = {f(rng), f(rng), 0.5 * w + 0.1 * u(rng), 0.5 * h + 0.1 * u(rng), w, h};
        cam.pose.rotation = random_rotation(rng);
        cam.pose.translation = Vec3(u(rng), u(rng), u(rng));
        const auto map = plucker_rays(cam, h, w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double* p = map.at(y, x);
                const Vec3 d(p[0], p[1], p[2]), m(p[3], p[4], p[5]);
                ++rays;
                if (std::abs(d.norm() - 1.0) > 1e-6) ++bad_norm;
                if (std::abs(m.dot(d)) > 1e-6) ++bad_moment;
            }
        }
    }
    std::vector<CheckResult> out;
    out.push_back(make_result("plucker |d| = 1 (" + std::to_string(rays) + " rays, failures)",
                              static_cast<double>(bad_norm), 0));
    out.push_back(make_result("plucker m.d = 0 (" + std::to_string(rays) + " rays, failures)",
                              static_cast<double>(bad_moment), 0));

    std::uniform_int_distribution<int> nposes(2, 8);
    double worst_dist = 0, worst_equiv = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Pose> poses(static_cast<std::size_t>(nposes(rng)));
        for (auto& p : poses) {
            p.rotation = random_rotation(rng);
            p.translation = Vec3(u(rng), u(rng), u(rng));
        }
        const auto norm = normalize_poses(poses);
        double max_dist = 0;
        for (const auto& p : norm.poses) max_dist = std::max(max_dist, p.translation.norm());
        worst_dist = std::max(worst_dist, std::abs(max_dist - 1.0));

        const Mat3 r = random_rotation(rng);
        const Vec3 t(u(rng), u(rng), u(rng));
        std::vector<Pose> moved = poses;
        for (auto& p : moved) {
            p.rotation = r * p.rotation;
            p.translation = r * p.translation + t;
        }
        const auto norm_moved = normalize_poses(moved);
        for (std::size_t i = 0; i < poses.size(); ++i) {
            worst_equiv = std::max(worst_equiv, (norm.poses[i].rotation - norm_moved.poses[i].rotation).cwiseAbs().maxCoeff());
            worst_equiv =
                std::max(worst_equiv, (norm.poses[i].translation - norm_moved.poses[i].translation).cwiseAbs().maxCoeff());
        }
    }
    out.push_back(make_result("normalize_poses max distance |d - 1|", worst_dist, 1e-6));
    out.push_back(make_result("normalize_poses rigid equivariance", worst_equiv, 1e-5));
    return out;
}

inline std::vector<CheckResult> minibatch_suite() {
    std::vector<CheckResult> out;
    for (auto [scheme, blocks] : {std::pair{MinibatchScheme::Half, 2}, std::pair{MinibatchScheme::Quarter, 4}}) {
        std::size_t uncovered = 0, size_spread = 0;
        for (std::size_t lv : {1u, 3u, 5u, 16u, 33u, 64u, 256u}) {
            for (std::size_t li : {lv, 4 * lv + 1, 4 * lv}) {
                for (std::size_t start = 0; start < 8; ++start) {
                    std::set<std::size_t> seen_v, seen_i;
                    std::size_t v_min = lv, v_max = 0, i_min = li, i_max = 0;
                    for (int l = 0; l < blocks; ++l) {
                        const auto sel = select_minibatch(lv, li, scheme, start + static_cast<std::size_t>(l));
                        seen_v.insert(sel.viewpoint.begin(), sel.viewpoint.end());
                        seen_i.insert(sel.image.begin(), sel.image.end());
                        v_min = std::min(v_min, sel.viewpoint.size());
                        v_max = std::max(v_max, sel.viewpoint.size());
                        i_min = std::min(i_min, sel.image.size());
                        i_max = std::max(i_max, sel.image.size());
                    }
                    uncovered += (lv - seen_v.size()) + (li - seen_i.size());
                    if (lv >= static_cast<std::size_t>(blocks) && v_max - v_min > 1) ++size_spread;
                    if (li >= static_cast<std::size_t>(blocks) && i_max - i_min > 1) ++size_spread;
                }
            }
        }
        const std::string name = to_string(scheme) + " over " + std::to_string(blocks) + " layers";
        out.push_back(make_result(name + ": uncovered tokens", static_cast<double>(uncovered), 0));
        out.push_back(make_result(name + ": subsets differing by more than 1", static_cast<double>(size_spread), 0));
    }
    return out;
}

inline std::vector<CheckResult> degeneracy_suite(int trials = 10, std::uint64_t seed = 21) {
    std::size_t uplift_mismatch = 0, group_mismatch = 0, compared = 0;
    for (int t = 0; t < trials; ++t) {
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(t));
        auto rnd = [&](Shape shape) {
            std::normal_distribution<float> n(0, 1);
            std::vector<float> d(shape_numel(shape));
            for (auto& v : d) v = n(rng);
            return Tensor<float>(std::move(shape), std::move(d));
        };
        const auto plain_w = AttentionWeights<float>::init(16, 16, 4, 64, 0.3, rng);
        const auto v = rnd({6, 16}), s = rnd({24, 16});
        const auto a = cross_attention_uplifted(v, s, plain_w, 1, 4), b = cross_attention_plain(v, s, plain_w, 4);
        for (std::size_t i = 0; i < a.numel(); ++i) uplift_mismatch += a[i] != b[i];
        compared += a.numel();

        const auto up_w = AttentionWeights<float>::init(16, 32, 4, 64, 0.3, rng);
        const auto g = group_attention(v, s, up_w, 2, 4), c = cross_attention_uplifted(v, s, up_w, 2, 4);
        for (std::size_t i = 0; i < g.numel(); ++i) group_mismatch += g[i] != c[i];
    }
    return {make_result("uplift k=1 vs plain cross-attention: differing values of " + std::to_string(compared),
                        static_cast<double>(uplift_mismatch), 0),
            make_result("group attention N=1 vs per-view: differing values of " + std::to_string(compared),
                        static_cast<double>(group_mismatch), 0)};
}

} // namespace ilrm::check
