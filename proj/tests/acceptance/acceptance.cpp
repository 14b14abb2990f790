// Acceptance runner: one PASS/FAIL line per criterion, exit 1 if any fail.
//
//   acceptance [--only N[,N...]] [--verbose]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ilrm/cost_model.hpp"
#include "ilrm/io/checkpoint.hpp"
#include "ilrm/io/ply.hpp"
#include "ilrm/io/scene_io.hpp"
#include "ilrm/selfcheck.hpp"
#include "ilrm/training.hpp"

using namespace ilrm;
using check::CheckResult;

namespace {

bool verbose = false;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Summarizes a suite: worst value relative to tolerance, failures listed.
Outcome from_suite(const std::vector<CheckResult>& results) {
    Outcome o{check::all_pass(results), ""};
    double worst = 0;
    std::size_t failed = 0;
    for (const auto& r : results) {
        if (verbose || !r.pass)
            std::cout << "    " << (r.pass ? "ok   " : "FAIL ") << r.name << ": " << r.value << " (tol " << r.tolerance
                      << ")\n";
        if (!r.pass) ++failed;
        worst = std::max(worst, r.value);
    }
    o.detail = std::to_string(results.size()) + " checks, " + std::to_string(failed) + " failed, worst " +
               fmt("%.3g", worst);
    return o;
}

Outcome flops_fidelity() {
    const Count a = cross_attn_flops(768, 256, 1024), b = cross_attn_flops(768, 128, 512),
                c = cross_attn_flops(768, 64, 256);
    const bool pass = a == 3825205248ull && b == 1711276032ull && c == 805306368ull;
    return {pass, std::to_string(a) + " / " + std::to_string(b) + " / " + std::to_string(c)};
}

Outcome scheme_ratios() {
    const auto s = scheme_score_cost(16, 256, 256, 8, 2);
    const bool pass =
        s.ratio_full == 1.0 && s.ratio_decoupled == 1.0 && s.ratio_group == 0.25 && s.ratio_two_stage == 0.078125;
    std::ostringstream d;
    d << "(" << s.ratio_full << ", " << s.ratio_decoupled << ", " << s.ratio_group << ", " << s.ratio_two_stage << ")";
    return {pass, d.str()};
}

Outcome parameter_counts() {
    ModelConfig cfg;
    const double full = static_cast<double>(parameter_count(cfg));
    ModelConfig no_uplift = cfg;
    no_uplift.use_uplift = false;
    const double plain = static_cast<double>(parameter_count(no_uplift));
    bool pass = std::abs(full / 185e6 - 1) <= 0.03 && std::abs(plain / 171e6 - 1) <= 0.03;
    const double table[4] = {48e6, 94e6, 139e6, 185e6};
    double prev = 0;
    std::ostringstream d;
    d << fmt("%.1fM", full / 1e6) << " / " << fmt("%.1fM", plain / 1e6) << "; L=3,6,9,12:";
    for (int i = 0; i < 4; ++i) {
        ModelConfig c = cfg;
        c.layers = 3 * (i + 1);
        const double n = static_cast<double>(parameter_count(c));
        pass = pass && n > prev && std::abs(n / table[i] - 1) <= 0.05;
        prev = n;
        d << " " << fmt("%.1fM", n / 1e6);
    }
    return {pass, d.str()};
}

Outcome gaussian_counts() {
    ModelConfig cfg;
    struct Case {
        int views;
        ViewpointRes res;
        Count h, w, expected;
    };
    const Case cases[] = {{2, ViewpointRes::F, 256, 256, 131072},
                          {4, ViewpointRes::H, 256, 256, 65536},
                          {8, ViewpointRes::H, 256, 256, 131072},
                          {6, ViewpointRes::H, 256, 448, 172032},
                          {12, ViewpointRes::H, 512, 960, 1474560}};
    bool pass = true;
    std::ostringstream d;
    for (const auto& c : cases) {
        cfg.viewpoint_res = c.res;
        const Count n = cost_report(cfg, static_cast<Count>(c.views), c.h, c.w).gaussians;
        pass = pass && n == c.expected;
        d << n << " ";
    }
    return {pass, d.str()};
}

Outcome gradient_suite() {
    auto results = check::gradient_ops_suite(1e-4);
    const auto pipeline = check::micro_pipeline_suite(1e-4);
    results.insert(results.end(), pipeline.begin(), pipeline.end());
    return from_suite(results);
}

Outcome renderer_oracle() { return from_suite(check::oracle_suite(100, 1000, 1e-5)); }
Outcome geometry_invariants() { return from_suite(check::geometry_suite()); }
Outcome minibatch_coverage() { return from_suite(check::minibatch_suite()); }
Outcome ablation_degeneracy() { return from_suite(check::degeneracy_suite()); }

RunConfig toy_config() {
    RunConfig cfg;
    cfg.model.layers = 2;
    cfg.model.hidden = 32;
    cfg.model.heads = 4;
    cfg.model.patch = 4;
    cfg.model.uplift = 2;
    cfg.model.viewpoint_res = ViewpointRes::H;
    cfg.model.seed = 1;
    cfg.loss.lambda_perceptual = 0;
    cfg.schedule = {1e-3, 100, 2000};
    cfg.optimizer.weight_decay = 0;
    cfg.train = {2, 1, 2000, 1, 100};
    return cfg;
}

Outcome toy_overfit() {
    const auto synth = io::synth_scene({42, 3, 32, 32, 48});
    const auto cfg = toy_config();
    Trainer<float> trainer(Model<float>::init(cfg.model), cfg);
    std::mt19937_64 rng(0);
    const auto split = select_views(synth.scene, 2, 1, rng);
    const double psnr0 = evaluate_psnr(trainer.model(), synth.scene, split);
    double first = 0, last = 0;
    for (int s = 0; s < cfg.train.steps; ++s) {
        const auto r = trainer.step(synth.scene);
        if (s == 0) first = r.loss;
        last = r.loss;
        if (verbose && (r.step % cfg.train.log_every == 0 || s == 0))
            std::cout << "    step " << r.step << " loss " << r.loss << " psnr " << r.psnr << "\n";
    }
    const double psnr1 = evaluate_psnr(trainer.model(), synth.scene, split);
    const bool pass = last <= 0.1 * first && psnr1 - psnr0 >= 10.0;
    return {pass, "loss " + fmt("%.4g", first) + " -> " + fmt("%.4g", last) + " (ratio " + fmt("%.2e", last / first) +
                      "), psnr " + fmt("%.2f", psnr0) + " -> " + fmt("%.2f", psnr1) + " dB"};
}

std::string train_checkpoint(const io::SyntheticScene& synth, std::uint64_t seed, int steps) {
    auto cfg = toy_config();
    cfg.model.seed = seed;
    cfg.train.seed = seed;
    Trainer<float> trainer(Model<float>::init(cfg.model), cfg);
    for (int s = 0; s < steps; ++s) trainer.step(synth.scene);
    return io::serialize_checkpoint(trainer.model());
}

Outcome reproducibility() {
    const auto synth = io::synth_scene({7, 4, 32, 32, 48});
    const auto a = train_checkpoint(synth, 7, 25), b = train_checkpoint(synth, 7, 25);
    const bool same = a == b;
    const auto model = io::deserialize_checkpoint<float>(a);
    const bool ckpt_round_trip = io::serialize_checkpoint(model) == a;
    const auto splats = reconstruct(model, std::span<const Camera>(synth.scene.cameras.data(), 2),
                                    std::span<const Image>(synth.scene.images.data(), 2), synth.scene.near,
                                    synth.scene.far)
                            .to_set();
    const auto ply = io::serialize_ply(io::to_splat_file(splats));
    const bool ply_round_trip = io::serialize_ply(io::parse_ply(ply)) == ply;
    return {same && ckpt_round_trip && ply_round_trip,
            std::string("seed 7 checkpoints ") + (same ? "identical" : "DIFFER") + " (" + std::to_string(a.size()) +
                " bytes), checkpoint round trip " + (ckpt_round_trip ? "identical" : "DIFFERS") +
                ", splat round trip " + (ply_round_trip ? "identical" : "DIFFERS")};
}

struct Criterion {
    int id;
    std::string name;
    double time_limit_s;  // 0 = none
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--verbose") == 0) {
            verbose = true;
        } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
        } else {
            std::cerr << "usage: acceptance [--only N[,N...]] [--verbose]\n";
            return 2;
        }
    }

    const std::vector<Criterion> criteria = {
        {1, "FLOPs fidelity", 1, flops_fidelity},
        {2, "Scheme-ratio fidelity", 0, scheme_ratios},
        {3, "Parameter-count fidelity", 0, parameter_counts},
        {4, "Gaussian-count fidelity", 0, gaussian_counts},
        {5, "Gradient suite", 60, gradient_suite},
        {6, "Renderer oracle", 60, renderer_oracle},
        {7, "Geometry invariants", 0, geometry_invariants},
        {8, "Minibatch coverage", 0, minibatch_coverage},
        {9, "Ablation degeneracy", 0, ablation_degeneracy},
        {10, "Toy overfit", 1800, toy_overfit},
        {11, "Reproducibility", 0, reproducibility},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.time_limit_s > 0 && secs >= c.time_limit_s) {
            o.pass = false;
            o.detail += "; over time limit " + fmt("%.0f s", c.time_limit_s);
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << ": " << o.detail << " ["
                  << fmt("%.2f", secs) << " s]" << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << "\n";
    return failed ? 1 : 0;
}
