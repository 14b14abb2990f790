// ilrm: synthetic data, training, inference, rendering, cost reports and self checks.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ilrm/cost_model.hpp"
#include "ilrm/io/checkpoint.hpp"
#include "ilrm/io/config_json.hpp"
#include "ilrm/io/image_io.hpp"
#include "ilrm/io/scene_io.hpp"
#include "ilrm/selfcheck.hpp"
#include "ilrm/training.hpp"

using namespace ilrm;
namespace fs = std::filesystem;
using io::json;

namespace {

std::pair<int, int> parse_res(const std::string& s) {
    int h = 0, w = 0;
    char x = 0;
    std::istringstream in(s);
    if (!(in >> h >> x >> w) || (x != 'x' && x != 'X') || h < 1 || w < 1 || !in.eof())
        throw CLI::ValidationError("--res", "expected HxW, got '" + s + "'");
    return {h, w};
}

// ------------------------------------------------------------------- synth

struct SynthArgs {
    std::uint64_t seed = 0;
    int views = 4;
    std::string res = "32x32";
    int gaussians = 64;
    std::string out;
};

int run_synth(const SynthArgs& a) {
    io::SynthOptions opt;
    opt.seed = a.seed;
    opt.views = a.views;
    std::tie(opt.height, opt.width) = parse_res(a.res);
    opt.gaussians = a.gaussians;
    const auto s = io::synth_scene(opt);
    io::write_synthetic_scene(s, a.out);
    std::cout << json{{"scene", s.scene.name},
                      {"views", s.scene.size()},
                      {"gaussians", s.ground_truth.size()},
                      {"out", a.out}}
                     .dump()
              << "\n";
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string scene, config, out;
    int steps = -1;
    long long seed = -1;
    int log_every = -1;
    int save_every = 0;
};

int run_train(const TrainArgs& a) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : io::load_run_config(a.config);
    if (a.steps >= 0) cfg.train.steps = a.steps;
    if (a.seed >= 0) {
        cfg.train.seed = static_cast<std::uint64_t>(a.seed);
        cfg.model.seed = static_cast<std::uint64_t>(a.seed);
    }
    if (a.log_every > 0) cfg.train.log_every = a.log_every;
    const Scene scene = io::load_scene(a.scene);
    Trainer<float> trainer(Model<float>::init(cfg.model), cfg);
    for (int s = 0; s < cfg.train.steps; ++s) {
        const auto r = trainer.step(scene);
        if (r.step % cfg.train.log_every == 0 || s == 0 || s + 1 == cfg.train.steps)
            std::cout << json{{"step", r.step}, {"lr", r.lr}, {"loss", r.loss}, {"psnr", r.psnr}}.dump() << std::endl;
        if (a.save_every > 0 && r.step % a.save_every == 0) io::save_checkpoint(trainer.model(), a.out);
    }
    io::save_checkpoint(trainer.model(), a.out);
    return 0;
}

// ------------------------------------------------------------------- infer

struct InferArgs {
    std::string ckpt, scene, viewpoint_res, minibatch, out_splat, render_targets;
    int views = 2;
};

int run_infer(const InferArgs& a) {
    auto stored = io::load_checkpoint<float>(a.ckpt).config;
    if (!a.viewpoint_res.empty()) stored.viewpoint_res = parse_viewpoint_res(a.viewpoint_res);
    if (!a.minibatch.empty()) stored.minibatch = parse_minibatch(a.minibatch);
    const auto model = io::load_checkpoint<float>(a.ckpt, stored);
    const Scene scene = io::load_scene(a.scene);
    if (a.views < 1 || static_cast<std::size_t>(a.views) > scene.size())
        throw ValidationError("--views " + std::to_string(a.views) + " but scene has " + std::to_string(scene.size()) +
                              " views");

    ViewSplit split;
    const auto pos = scene.positions();
    split.inputs = farthest_point_sample(pos, static_cast<std::size_t>(a.views));
    for (std::size_t i = 0; i < scene.size(); ++i)
        if (std::find(split.inputs.begin(), split.inputs.end(), i) == split.inputs.end()) split.targets.push_back(i);
    const auto views = normalize_views(scene, split);
    const auto local = reconstruct(model, std::span<const Camera>(views.input_cameras),
                                   std::span<const Image>(views.input_images), views.near, views.far)
                           .to_set();
    json report{{"inputs", split.inputs}, {"gaussians", local.size()}};
    if (!a.out_splat.empty()) {
        io::save_ply(io::to_splat_file(to_world(local, views.transform)), a.out_splat);
        report["splat"] = a.out_splat;
    }
    if (!a.render_targets.empty()) {
        fs::create_directories(a.render_targets);
        json targets = json::array();
        for (std::size_t t = 0; t < views.target_cameras.size(); ++t) {
            const Image& gt = *views.target_images[t];
            const Image img = render(local, views.target_cameras[t], {gt.width, gt.height, Vec3::Zero(), kTileSize});
            char name[32];
            std::snprintf(name, sizeof name, "target_%03zu.png", split.targets[t]);
            io::write_png(img, (fs::path(a.render_targets) / name).string());
            targets.push_back({{"view", split.targets[t]}, {"psnr", psnr(img, gt)}});
        }
        report["targets"] = targets;
    }
    std::cout << report.dump() << "\n";
    return 0;
}

// ------------------------------------------------------------------ render

struct RenderArgs {
    std::string splat, manifest, out;
    int view = 0;
};

int run_render(const RenderArgs& a) {
    const auto g = io::to_gaussian_set(io::load_ply(a.splat));
    const Scene scene = io::load_scene(a.manifest, false);
    if (a.view < 0 || static_cast<std::size_t>(a.view) >= scene.size())
        throw ValidationError("--view " + std::to_string(a.view) + " out of range for " +
                              std::to_string(scene.size()) + " cameras");
    const Camera& cam = scene.cameras[static_cast<std::size_t>(a.view)];
    RenderStats stats;
    const Image img =
        render(g, cam, {cam.intrinsics.width, cam.intrinsics.height, Vec3::Zero(), kTileSize}, &stats);
    io::write_png(img, a.out);
    std::cout << json{{"out", a.out}, {"gaussians", g.size()}, {"non_psd", stats.non_psd}}.dump() << "\n";
    return 0;
}

// -------------------------------------------------------------------- cost

json report_json(const CostReport& r) {
    json layers = json::array();
    for (const auto& l : r.layers) layers.push_back({{"cross", l.cross}, {"self", l.self}});
    return json{{"config", io::to_json(r.config)},
                {"views", r.views},
                {"image", {r.image_h, r.image_w}},
                {"viewpoint", {r.viewpoint_h, r.viewpoint_w}},
                {"image_tokens", r.image_tokens},
                {"viewpoint_tokens", r.viewpoint_tokens},
                {"cross_attn_flops", {{"full", r.cross_flops_full}, {"half", r.cross_flops_half}, {"quarter", r.cross_flops_quarter}}},
                {"scheme_scores",
                 {{"full", r.schemes.full},
                  {"decoupled", r.schemes.decoupled},
                  {"group", r.schemes.group},
                  {"two_stage", r.schemes.two_stage},
                  {"ratios",
                   {r.schemes.ratio_full, r.schemes.ratio_decoupled, r.schemes.ratio_group, r.schemes.ratio_two_stage}}}},
                {"layers", layers},
                {"total_flops", r.total_flops},
                {"parameters", r.parameters},
                {"gaussians", r.gaussians},
                {"activation_bytes", r.activation_bytes}};
}

void print_table(const CostReport& r) {
    auto row = [](const std::string& k, const std::string& v) {
        std::cout << std::left << std::setw(34) << k << std::right << std::setw(22) << v << "\n";
    };
    auto gflops = [](Count c) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(2) << static_cast<double>(c) / 1e9 << " GFLOPs";
        return s.str();
    };
    auto ratio = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(2) << v;
        return s.str();
    };
    row("cross-attention (Lv, Li)", gflops(r.cross_flops_full));
    row("cross-attention (Lv/2, Li/2)", gflops(r.cross_flops_half));
    row("cross-attention (Lv/4, Li/4)", gflops(r.cross_flops_quarter));
    row("scheme score ratios (a:b:c:d), N=" + std::to_string(r.views), ratio(r.schemes.ratio_full) + ":" + ratio(r.schemes.ratio_decoupled) + ":" +
                                             ratio(r.schemes.ratio_group) + ":" + ratio(r.schemes.ratio_two_stage));
    row("forward FLOPs (all layers)", gflops(r.total_flops));
    row("parameters", std::to_string(r.parameters));
    row("gaussians", std::to_string(r.gaussians));
    row("activation memory (MiB)", ratio(static_cast<double>(r.activation_bytes) / (1 << 20)));
}

// "layers=3,6,9,12;views=4,8" -> cartesian product of assignments.
std::vector<std::map<std::string, std::string>> parse_sweep(const std::string& spec) {
    std::vector<std::map<std::string, std::string>> combos{{}};
    std::stringstream ss(spec);
    for (std::string axis; std::getline(ss, axis, ';');) {
        if (axis.empty()) continue;
        const auto eq = axis.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--sweep", "expected key=v1,v2 in '" + axis + "'");
        const std::string key = axis.substr(0, eq);
        std::vector<std::map<std::string, std::string>> next;
        std::stringstream vs(axis.substr(eq + 1));
        std::vector<std::string> values;
        for (std::string v; std::getline(vs, v, ',');) values.push_back(v);
        if (values.empty()) throw CLI::ValidationError("--sweep", "no values for '" + key + "'");
        for (const auto& c : combos)
            for (const auto& v : values) {
                auto m = c;
                m[key] = v;
                next.push_back(m);
            }
        combos = std::move(next);
    }
    return combos;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& v) {
    auto to_int = [&] {
        try {
            return std::stoi(v);
        } catch (const std::exception&) {
            throw CLI::ValidationError("--sweep", "'" + key + "' needs an integer, got '" + v + "'");
        }
    };
    if (key == "layers") cfg.model.layers = to_int();
    else if (key == "hidden") cfg.model.hidden = to_int();
    else if (key == "heads") cfg.model.heads = to_int();
    else if (key == "patch") cfg.model.patch = to_int();
    else if (key == "uplift") cfg.model.uplift = to_int();
    else if (key == "use_uplift") cfg.model.use_uplift = v == "1" || v == "true";
    else if (key == "viewpoint_res") cfg.model.viewpoint_res = parse_viewpoint_res(v);
    else if (key == "minibatch") cfg.model.minibatch = parse_minibatch(v);
    else if (key == "views") cfg.views = to_int();
    else if (key == "height") cfg.image_height = to_int();
    else if (key == "width") cfg.image_width = to_int();
    else throw CLI::ValidationError("--sweep", "unknown key '" + key + "'");
}

struct CostArgs {
    std::string config, sweep, out;
};

int run_cost(const CostArgs& a) {
    const RunConfig base = a.config.empty() ? RunConfig{} : io::load_run_config(a.config);
    auto report_for = [](const RunConfig& c) {
        return cost_report(c.model, static_cast<Count>(c.views), static_cast<Count>(c.image_height),
                           static_cast<Count>(c.image_width));
    };
    if (a.sweep.empty()) {
        const auto r = report_for(base);
        print_table(r);
        if (!a.out.empty()) std::ofstream(a.out) << report_json(r).dump(2) << "\n";
        else std::cout << report_json(r).dump() << "\n";
        return 0;
    }
    std::ostringstream csv;
    csv << "layers,hidden,heads,patch,uplift,use_uplift,viewpoint_res,minibatch,views,height,width,"
           "cross_flops,total_flops,parameters,gaussians,activation_bytes,ratio_group,ratio_two_stage\n";
    for (const auto& combo : parse_sweep(a.sweep)) {
        RunConfig cfg = base;
        for (const auto& [k, v] : combo) apply_setting(cfg, k, v);
        const auto r = report_for(cfg);
        const auto& m = cfg.model;
        csv << m.layers << "," << m.hidden << "," << m.heads << "," << m.patch << "," << m.uplift << ","
            << (m.use_uplift ? 1 : 0) << "," << to_string(m.viewpoint_res) << "," << to_string(m.minibatch) << ","
            << cfg.views << "," << cfg.image_height << "," << cfg.image_width << "," << r.cross_flops_full << ","
            << r.total_flops << "," << r.parameters << "," << r.gaussians << "," << r.activation_bytes << ","
            << r.schemes.ratio_group << "," << r.schemes.ratio_two_stage << "\n";
    }
    if (a.out.empty()) std::cout << csv.str();
    else std::ofstream(a.out) << csv.str();
    return 0;
}

// ------------------------------------------------------------------- check

struct CheckArgs {
    std::string suite = "all";
    int scenes = 100;
    bool verbose = false;
};

int run_check(const CheckArgs& a) {
    std::vector<std::pair<std::string, std::vector<check::CheckResult>>> suites;
    if (a.suite == "all" || a.suite == "gradient") {
        auto r = check::gradient_ops_suite();
        const auto p = check::micro_pipeline_suite();
        r.insert(r.end(), p.begin(), p.end());
        suites.emplace_back("gradient", r);
    }
    if (a.suite == "all" || a.suite == "oracle") suites.emplace_back("oracle", check::oracle_suite(a.scenes));
    if (a.suite == "all" || a.suite == "invariant") {
        auto r = check::geometry_suite();
        for (auto&& s : {check::minibatch_suite(), check::degeneracy_suite()}) r.insert(r.end(), s.begin(), s.end());
        suites.emplace_back("invariant", r);
    }
    bool ok = true;
    for (const auto& [name, results] : suites) {
        std::size_t failed = 0;
        for (const auto& r : results) {
            if (!r.pass) ++failed;
            if (a.verbose || !r.pass)
                std::cout << "  " << (r.pass ? "ok   " : "FAIL ") << r.name << ": " << r.value << " (tol "
                          << r.tolerance << ")\n";
        }
        std::cout << (failed ? "FAIL " : "PASS ") << name << ": " << results.size() - failed << "/" << results.size()
                  << " checks\n";
        ok = ok && failed == 0;
    }
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ilrm: feed-forward Gaussian reconstruction toolkit"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic scene (images, manifest, ground-truth splats)");
    s->add_option("--seed", synth.seed, "Random seed");
    s->add_option("--views", synth.views, "Number of views")->check(CLI::Range(2, 1 << 20));
    s->add_option("--res", synth.res, "Image resolution HxW");
    s->add_option("--gaussians", synth.gaussians, "Number of ground-truth Gaussians")->check(CLI::NonNegativeNumber);
    s->add_option("--out", synth.out, "Output directory")->required();

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train on a scene, logging JSON lines");
    t->add_option("--scene", train.scene, "Scene directory or manifest")->required()->check(CLI::ExistingPath);
    t->add_option("--config", train.config, "Run configuration JSON")->check(CLI::ExistingFile);
    t->add_option("--steps", train.steps, "Optimization steps")->check(CLI::NonNegativeNumber);
    t->add_option("--seed", train.seed, "Seed for initialization and view sampling")->check(CLI::NonNegativeNumber);
    t->add_option("--log-every", train.log_every, "Log interval in steps")->check(CLI::PositiveNumber);
    t->add_option("--save-every", train.save_every, "Also write the checkpoint every N steps")
        ->check(CLI::NonNegativeNumber);
    t->add_option("--out", train.out, "Checkpoint path")->required();

    InferArgs infer;
    auto* i = app.add_subcommand("infer", "Reconstruct Gaussians from K input views");
    i->add_option("--ckpt", infer.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    i->add_option("--scene", infer.scene, "Scene directory or manifest")->required()->check(CLI::ExistingPath);
    i->add_option("--views", infer.views, "Number of input views (farthest point sampled)");
    i->add_option("--viewpoint-res", infer.viewpoint_res, "Viewpoint resolution")
        ->check(CLI::IsMember({"F", "H", "Q"}));
    i->add_option("--minibatch", infer.minibatch, "Mini-batch cross-attention scheme")
        ->check(CLI::IsMember({"full", "half", "quarter", "random"}));
    i->add_option("--out-splat", infer.out_splat, "Write splats (PLY) in world coordinates");
    i->add_option("--render-targets", infer.render_targets, "Render the non-input views into this directory");

    RenderArgs rend;
    auto* r = app.add_subcommand("render", "Render a splat file from a manifest camera");
    r->add_option("--splat", rend.splat, "Splat PLY")->required()->check(CLI::ExistingFile);
    r->add_option("--camera-from-manifest", rend.manifest, "Scene manifest providing the camera")
        ->required()
        ->check(CLI::ExistingPath);
    r->add_option("--view", rend.view, "Camera index in the manifest");
    r->add_option("--out", rend.out, "Output PNG")->required();

    CostArgs cost;
    auto* c = app.add_subcommand("cost", "Closed-form FLOPs, parameter and Gaussian counts");
    c->add_option("--config", cost.config, "Run configuration JSON")->check(CLI::ExistingFile);
    c->add_option("--sweep", cost.sweep, "Sweep spec, e.g. 'layers=3,6,9,12;views=4,8' (writes CSV)");
    c->add_option("--out", cost.out, "Write JSON (or CSV for --sweep) here");

    CheckArgs chk;
    auto* k = app.add_subcommand("check", "Run gradient, oracle and invariant suites");
    k->add_option("--suite", chk.suite, "Suite to run")->check(CLI::IsMember({"all", "gradient", "oracle", "invariant"}));
    k->add_option("--scenes", chk.scenes, "Random scenes for the oracle suite")->check(CLI::PositiveNumber);
    k->add_flag("--verbose", chk.verbose, "Print every check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*s) return run_synth(synth);
        if (*t) return run_train(train);
        if (*i) return run_infer(infer);
        if (*r) return run_render(rend);
        if (*c) return run_cost(cost);
        if (*k) return run_check(chk);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
