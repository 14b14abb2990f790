#pragma once

// Losses, AdamW, warmup + cosine schedule and the single-scene training step.

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ilrm/config.hpp"
#include "ilrm/renderer.hpp"
#include "ilrm/scene.hpp"

namespace ilrm {

template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
    return mse(pred, gt);
}

// Image-pair functional added with weight lambda. An empty hook contributes zero.
template <class T>
using PerceptualHook = std::function<Tensor<T>(const Tensor<T>&, const Tensor<T>&)>;

template <class T>
Tensor<T> total_loss(const std::vector<Tensor<T>>& renders, const std::vector<Tensor<T>>& gts, const LossConfig& cfg,
                     const PerceptualHook<T>& hook = {}) {
    if (renders.empty() || renders.size() != gts.size())
        throw ContractError("total_loss: need matching, non-empty render and ground-truth lists");
    if (!(cfg.lambda_perceptual >= 0)) throw ConfigError("total_loss: lambda must be >= 0");
    Tensor<T> total;
    for (std::size_t t = 0; t < renders.size(); ++t) {
        auto term = mse_loss(renders[t], gts[t]);
        if (hook) term = add(term, scale(reshape(hook(renders[t], gts[t]), {1}), static_cast<T>(cfg.lambda_perceptual)));
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

// Linear warmup from 0 to peak, then cosine decay to 0 at total_steps.
inline double lr_at(int step, const ScheduleConfig& s) {
    if (step < 0 || step > s.total_steps)
        throw ContractError("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(s.total_steps) +
                            "]");
    if (step < s.warmup_steps) return s.peak_lr * step / s.warmup_steps;
    const double progress = static_cast<double>(step - s.warmup_steps) / (s.total_steps - s.warmup_steps);
    return s.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// Normalization scales (LayerNorm and QK-RMSNorm) are exempt from weight decay.
inline bool is_norm_parameter(const std::string& name) {
    return name.size() >= 4 && name.compare(name.size() - 4, 4, "norm") == 0;
}

template <class T>
struct OptimizerState {
    std::map<std::string, std::vector<T>> m;
    std::map<std::string, std::vector<T>> v;
    long step = 0;
};

// One AdamW update with decoupled weight decay; gradients are read from the
// parameters' grad buffers (absent buffers count as zero).
template <class T>
void adamw_step(const std::vector<std::pair<std::string, Tensor<T>>>& params, OptimizerState<T>& state, double lr,
                const OptimizerConfig& cfg) {
    for (const auto& [name, p] : params) {
        if (!p.has_grad()) continue;
        for (T g : p.grad())
            if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter '" + name + "'");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (const auto& [name, param] : params) {
        Tensor<T> p = param;
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.size() != p.numel()) {
            m.assign(p.numel(), T(0));
            v.assign(p.numel(), T(0));
        }
        const bool decay = cfg.weight_decay != 0 && !is_norm_parameter(name);
        auto data = p.mutable_data();
        const auto grad = p.grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
            double x = data[i];
            if (decay) x -= lr * cfg.weight_decay * x;
            const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            x -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
            data[i] = static_cast<T>(x);
        }
    }
}

// Indices of the input and target views for one training step. Inputs are
// chosen by farthest point sampling of camera positions; targets are drawn
// uniformly from the remaining views (at most `targets`, at least one).
struct ViewSplit {
    std::vector<std::size_t> inputs;
    std::vector<std::size_t> targets;
};

inline ViewSplit select_views(const Scene& scene, int inputs, int targets, std::mt19937_64& rng) {
    const std::size_t n = scene.size();
    if (inputs < 1 || targets < 1 || n < static_cast<std::size_t>(inputs) + 1) {
        throw ValidationError("scene '" + scene.name + "' has " + std::to_string(n) + " views; need " +
                              std::to_string(inputs) + " inputs plus at least one target");
    }
    ViewSplit split;
    const auto pos = scene.positions();
    split.inputs = farthest_point_sample(pos, static_cast<std::size_t>(inputs));
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < n; ++i)
        if (std::find(split.inputs.begin(), split.inputs.end(), i) == split.inputs.end()) pool.push_back(i);
    const std::size_t want = std::min(pool.size(), static_cast<std::size_t>(targets));
    for (std::size_t i = 0; i < want; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(want);
    std::sort(pool.begin(), pool.end());
    split.targets = pool;
    return split;
}

// Scene subset re-expressed in the normalized frame of its input cameras.
struct NormalizedViews {
    std::vector<Camera> input_cameras;
    std::vector<Image> input_images;
    std::vector<Camera> target_cameras;
    std::vector<const Image*> target_images;
    double near = 0.1, far = 100.0;
    SceneNormalization transform;
};

inline NormalizedViews normalize_views(const Scene& scene, const ViewSplit& split) {
    std::vector<Pose> poses;
    for (std::size_t i : split.inputs) poses.push_back(scene.cameras[i].pose);
    const auto norm = normalize_poses(poses);
    NormalizedViews out;
    for (std::size_t k = 0; k < split.inputs.size(); ++k) {
        out.input_cameras.push_back({scene.cameras[split.inputs[k]].intrinsics, norm.poses[k]});
        out.input_images.push_back(scene.images[split.inputs[k]]);
    }
    for (std::size_t i : split.targets) {
        out.target_cameras.push_back({scene.cameras[i].intrinsics, norm.transform.apply(scene.cameras[i].pose)});
        out.target_images.push_back(&scene.images[i]);
    }
    out.transform = norm.transform;
    out.near = scene.near * norm.transform.scale;
    out.far = scene.far * norm.transform.scale;
    return out;
}

struct StepResult {
    long step = 0;
    double lr = 0;
    double loss = 0;
    double psnr = 0;
};

template <class T>
class Trainer {
public:
    Trainer(Model<T> model, RunConfig cfg)
        : model_(std::move(model)), cfg_(std::move(cfg)), rng_(cfg_.train.seed) {
        cfg_.schedule.validate();
    }

    // Forward, naive differentiable render, loss, backward and one AdamW update.
    StepResult step(const Scene& scene, const PerceptualHook<T>& hook = {}) {
        const auto split = select_views(scene, cfg_.train.input_views, cfg_.train.target_views, rng_);
        const auto views = normalize_views(scene, split);
        Tape<T> tape;
        StepResult r;
        {
            TapeScope<T> scope(tape);
            const auto gaussians = reconstruct(model_, std::span<const Camera>(views.input_cameras),
                                               std::span<const Image>(views.input_images), views.near, views.far,
                                               static_cast<std::uint64_t>(state_.step));
            std::vector<Tensor<T>> renders, gts;
            double psnr_sum = 0;
            for (std::size_t t = 0; t < views.target_cameras.size(); ++t) {
                const Image& gt = *views.target_images[t];
                const RenderConfig rc{gt.width, gt.height, Vec3::Zero(), kTileSize};
                renders.push_back(rasterize_naive_diff(gaussians, views.target_cameras[t], rc));
                gts.push_back(image_tensor<T>(gt));
                Image pred(gt.height, gt.width);
                for (std::size_t i = 0; i < pred.size(); ++i)
                    pred.data[i] = std::clamp(static_cast<float>(renders.back()[i]), 0.0f, 1.0f);
                psnr_sum += psnr(pred, gt);
            }
            const auto loss = total_loss(renders, gts, cfg_.loss, hook);
            model_.zero_grad();
            tape.backward(loss);
            r.loss = static_cast<double>(loss.item());
            r.psnr = psnr_sum / static_cast<double>(renders.size());
        }
        tape.clear();
        r.lr = lr_at(static_cast<int>(std::min<long>(state_.step + 1, cfg_.schedule.total_steps)), cfg_.schedule);
        adamw_step(model_.named_parameters(), state_, r.lr, cfg_.optimizer);
        r.step = state_.step;
        return r;
    }

    const Model<T>& model() const { return model_; }
    Model<T>& model() { return model_; }
    const OptimizerState<T>& optimizer_state() const { return state_; }
    const RunConfig& config() const { return cfg_; }

private:
    Model<T> model_;
    RunConfig cfg_;
    std::mt19937_64 rng_;
    OptimizerState<T> state_;
};

// Renders the reconstruction of `split` for each target with the tiled
// rasterizer and returns the mean PSNR.
template <class T>
double evaluate_psnr(const Model<T>& model, const Scene& scene, const ViewSplit& split) {
    const auto views = normalize_views(scene, split);
    const auto g = reconstruct(model, std::span<const Camera>(views.input_cameras),
                               std::span<const Image>(views.input_images), views.near, views.far)
                       .to_set();
    double sum = 0;
    for (std::size_t t = 0; t < views.target_cameras.size(); ++t) {
        const Image& gt = *views.target_images[t];
        sum += psnr(render(g, views.target_cameras[t], {gt.width, gt.height, Vec3::Zero(), kTileSize}), gt);
    }
    return sum / static_cast<double>(views.target_cameras.size());
}

} // namespace ilrm
