#pragma once

// JSON mapping of the run configuration. Missing keys keep their defaults.

#include <fstream>
#include <string>

#include "json.hpp"

#include "ilrm/config.hpp"

namespace ilrm::io {

using json = nlohmann::json;

inline json to_json(const ModelConfig& c) {
    return json{{"layers", c.layers},
                {"hidden", c.hidden},
                {"heads", c.heads},
                {"patch", c.patch},
                {"uplift", c.uplift},
                {"mlp_ratio", c.mlp_ratio},
                {"minibatch", to_string(c.minibatch)},
                {"viewpoint_res", to_string(c.viewpoint_res)},
                {"use_uplift", c.use_uplift},
                {"use_self_attention", c.use_self_attention},
                {"use_group_attention", c.use_group_attention},
                {"init_std", c.init_std},
                {"seed", c.seed}};
}

template <class V>
void read_if(const json& j, const char* key, V& out) {
    if (j.contains(key)) out = j.at(key).get<V>();
}

inline ModelConfig model_config_from_json(const json& j, ModelConfig c = {}) {
    read_if(j, "layers", c.layers);
    read_if(j, "hidden", c.hidden);
    read_if(j, "heads", c.heads);
    read_if(j, "patch", c.patch);
    read_if(j, "uplift", c.uplift);
    read_if(j, "mlp_ratio", c.mlp_ratio);
    if (j.contains("minibatch")) c.minibatch = parse_minibatch(j.at("minibatch").get<std::string>());
    if (j.contains("viewpoint_res")) c.viewpoint_res = parse_viewpoint_res(j.at("viewpoint_res").get<std::string>());
    read_if(j, "use_uplift", c.use_uplift);
    read_if(j, "use_self_attention", c.use_self_attention);
    read_if(j, "use_group_attention", c.use_group_attention);
    read_if(j, "init_std", c.init_std);
    read_if(j, "seed", c.seed);
    c.validate();
    return c;
}

inline json to_json(const RunConfig& c) {
    return json{{"model", to_json(c.model)},
                {"loss", {{"lambda_perceptual", c.loss.lambda_perceptual}}},
                {"schedule",
                 {{"peak_lr", c.schedule.peak_lr},
                  {"warmup_steps", c.schedule.warmup_steps},
                  {"total_steps", c.schedule.total_steps}}},
                {"optimizer",
                 {{"beta1", c.optimizer.beta1},
                  {"beta2", c.optimizer.beta2},
                  {"weight_decay", c.optimizer.weight_decay},
                  {"eps", c.optimizer.eps}}},
                {"train",
                 {{"input_views", c.train.input_views},
                  {"target_views", c.train.target_views},
                  {"steps", c.train.steps},
                  {"seed", c.train.seed},
                  {"log_every", c.train.log_every}}},
                {"data", {{"views", c.views}, {"image_height", c.image_height}, {"image_width", c.image_width}}}};
}

inline RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("loss")) read_if(j.at("loss"), "lambda_perceptual", c.loss.lambda_perceptual);
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        read_if(s, "peak_lr", c.schedule.peak_lr);
        read_if(s, "warmup_steps", c.schedule.warmup_steps);
        read_if(s, "total_steps", c.schedule.total_steps);
    }
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        read_if(o, "beta1", c.optimizer.beta1);
        read_if(o, "beta2", c.optimizer.beta2);
        read_if(o, "weight_decay", c.optimizer.weight_decay);
        read_if(o, "eps", c.optimizer.eps);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        read_if(t, "input_views", c.train.input_views);
        read_if(t, "target_views", c.train.target_views);
        read_if(t, "steps", c.train.steps);
        read_if(t, "seed", c.train.seed);
        read_if(t, "log_every", c.train.log_every);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        read_if(d, "views", c.views);
        read_if(d, "image_height", c.image_height);
        read_if(d, "image_width", c.image_width);
    }
    if (!(c.loss.lambda_perceptual >= 0)) throw ConfigError("lambda_perceptual must be >= 0");
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    try {
        return run_config_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw FormatError("config '" + path + "': " + e.what());
    }
}

} // namespace ilrm::io
