#pragma once

#include <cstdint>
#include <string>

#include "ilrm/errors.hpp"

namespace ilrm {

enum class MinibatchScheme { Full, Half, Quarter, Random };

// Viewpoint token grid relative to the image: full, half or quarter per side.
enum class ViewpointRes { F, H, Q };

inline int downsample_factor(ViewpointRes r) {
    switch (r) {
        case ViewpointRes::F: return 1;
        case ViewpointRes::H: return 2;
        case ViewpointRes::Q: return 4;
    }
    return 1;
}

inline std::string to_string(ViewpointRes r) {
    switch (r) {
        case ViewpointRes::F: return "F";
        case ViewpointRes::H: return "H";
        case ViewpointRes::Q: return "Q";
    }
    return "F";
}

inline ViewpointRes parse_viewpoint_res(const std::string& s) {
    if (s == "F" || s == "f") return ViewpointRes::F;
    if (s == "H" || s == "h") return ViewpointRes::H;
    if (s == "Q" || s == "q") return ViewpointRes::Q;
    throw ConfigError("unknown viewpoint resolution '" + s + "' (expected F, H or Q)");
}

inline std::string to_string(MinibatchScheme s) {
    switch (s) {
        case MinibatchScheme::Full: return "full";
        case MinibatchScheme::Half: return "half";
        case MinibatchScheme::Quarter: return "quarter";
        case MinibatchScheme::Random: return "random";
    }
    return "full";
}

inline MinibatchScheme parse_minibatch(const std::string& s) {
    if (s == "full") return MinibatchScheme::Full;
    if (s == "half") return MinibatchScheme::Half;
    if (s == "quarter") return MinibatchScheme::Quarter;
    if (s == "random") return MinibatchScheme::Random;
    throw ConfigError("unknown minibatch scheme '" + s + "' (expected full, half, quarter or random)");
}

inline int minibatch_blocks(MinibatchScheme scheme) {
    switch (scheme) {
        case MinibatchScheme::Full: return 1;
        case MinibatchScheme::Half: return 2;
        case MinibatchScheme::Quarter: return 4;
        case MinibatchScheme::Random: return 4;
    }
    return 1;
}

struct ModelConfig {
    int layers = 12;
    int hidden = 768;
    int heads = 12;
    int patch = 8;
    int uplift = 2;
    int mlp_ratio = 4;
    MinibatchScheme minibatch = MinibatchScheme::Full;
    ViewpointRes viewpoint_res = ViewpointRes::H;
    bool use_uplift = true;
    bool use_self_attention = true;
    bool use_group_attention = false;
    double init_std = 0.02;
    std::uint64_t seed = 0;

    int head_dim() const { return hidden / heads; }
    int effective_uplift() const { return use_uplift ? uplift : 1; }
    int mlp_hidden() const { return hidden * mlp_ratio; }

    void validate() const {
        if (layers < 0) throw ConfigError("layers must be >= 0");
        if (hidden < 1 || heads < 1 || hidden % heads != 0)
            throw ConfigError("hidden size " + std::to_string(hidden) + " is not divisible by " +
                              std::to_string(heads) + " heads");
        if (patch < 1) throw ConfigError("patch size must be >= 1");
        if (uplift < 1) throw ConfigError("uplift factor must be >= 1");
        if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
        if (!(init_std >= 0)) throw ConfigError("init_std must be >= 0");
    }
};

struct LossConfig {
    double lambda_perceptual = 0.5;
};

struct ScheduleConfig {
    double peak_lr = 2e-4;
    int warmup_steps = 2500;
    int total_steps = 100000;

    void validate() const {
        if (!(warmup_steps > 0 && warmup_steps < total_steps))
            throw ConfigError("schedule requires 0 < warmup_steps < total_steps");
        if (!(peak_lr >= 0)) throw ConfigError("peak_lr must be >= 0");
    }
};

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.05;
    double eps = 1e-8;
};

struct TrainConfig {
    int input_views = 2;
    int target_views = 6;
    int steps = 2000;
    std::uint64_t seed = 0;
    int log_every = 50;
};

// Everything a config file can hold. Scene-level fields describe the input
// regime for the cost model when no scene is attached.
struct RunConfig {
    ModelConfig model;
    LossConfig loss;
    ScheduleConfig schedule;
    OptimizerConfig optimizer;
    TrainConfig train;
    int views = 8;
    int image_height = 256;
    int image_width = 256;
};

} // namespace ilrm
