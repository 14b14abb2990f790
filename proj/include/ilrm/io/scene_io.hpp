#pragma once

// Scene manifests and the synthetic scene generator.
//
// Manifest (scene.json):
//   {"name": str, "near": f, "far": f,
//    "views": [{"image_path": str, "fx", "fy", "cx", "cy", "width", "height",
//               "c2w": [16 floats, row-major 4x4 camera-to-world]}]}
// image_path is relative to the manifest's directory.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "ilrm/io/image_io.hpp"
#include "ilrm/io/ply.hpp"
#include "ilrm/renderer.hpp"
#include "ilrm/scene.hpp"

namespace ilrm::io {

namespace fs = std::filesystem;

inline json camera_to_json(const Camera& c) {
    std::vector<double> m(16, 0.0);
    for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) m[static_cast<std::size_t>(r * 4 + k)] = c.pose.rotation(r, k);
        m[static_cast<std::size_t>(r * 4 + 3)] = c.pose.translation[r];
    }
    m[15] = 1.0;
    const auto& in = c.intrinsics;
    return json{{"fx", in.fx}, {"fy", in.fy}, {"cx", in.cx}, {"cy", in.cy},
                {"width", in.width}, {"height", in.height}, {"c2w", m}};
}

inline Camera camera_from_json(const json& j) {
    Camera c;
    c.intrinsics = {j.at("fx").get<double>(),  j.at("fy").get<double>(),    j.at("cx").get<double>(),
                    j.at("cy").get<double>(),  j.at("width").get<int>(), j.at("height").get<int>()};
    const auto m = j.at("c2w").get<std::vector<double>>();
    if (m.size() != 16) throw FormatError("manifest: c2w must have 16 entries");
    for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) c.pose.rotation(r, k) = m[static_cast<std::size_t>(r * 4 + k)];
        c.pose.translation[r] = m[static_cast<std::size_t>(r * 4 + 3)];
    }
    c.intrinsics.validate();
    c.pose.validate(1e-4);
    return c;
}

inline json scene_manifest(const Scene& scene, const std::vector<std::string>& image_paths) {
    json views = json::array();
    for (std::size_t i = 0; i < scene.size(); ++i) {
        auto v = camera_to_json(scene.cameras[i]);
        v["image_path"] = image_paths[i];
        views.push_back(v);
    }
    return json{{"name", scene.name}, {"near", scene.near}, {"far", scene.far}, {"views", views}};
}

inline fs::path manifest_path(const std::string& dir_or_file) {
    fs::path p(dir_or_file);
    return fs::is_directory(p) ? p / "scene.json" : p;
}

// Reads a manifest. With load_images = false only cameras are populated.
inline Scene load_scene(const std::string& dir_or_file, bool load_images = true) {
    const fs::path path = manifest_path(dir_or_file);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("manifest '" + path.string() + "': " + e.what());
    }
    Scene s;
    s.name = j.value("name", std::string("scene"));
    s.near = j.value("near", 0.1);
    s.far = j.value("far", 100.0);
    for (const auto& v : j.at("views")) {
        s.cameras.push_back(camera_from_json(v));
        if (!load_images) continue;
        const fs::path img = path.parent_path() / v.at("image_path").get<std::string>();
        if (!fs::exists(img)) throw std::runtime_error("manifest image not found: '" + img.string() + "'");
        s.images.push_back(read_png(img.string()));
        const auto& in = s.cameras.back().intrinsics;
        if (s.images.back().width != in.width || s.images.back().height != in.height)
            throw ValidationError("image '" + img.string() + "' does not match its intrinsics size");
    }
    return s;
}

struct SynthOptions {
    std::uint64_t seed = 0;
    int views = 3;
    int height = 32;
    int width = 32;
    int gaussians = 64;
    double arc_radius = 2.5;
    double arc_degrees = 50.0;
    double fov_degrees = 50.0;
    double scene_radius = 0.6;
};

struct SyntheticScene {
    Scene scene;
    GaussianSet ground_truth;  // exactly representable in the PLY encoding
};

inline SyntheticScene synth_scene(const SynthOptions& opt) {
    if (opt.views < 2) throw ValidationError("synth_scene: need at least two views");
    if (opt.gaussians < 0) throw ValidationError("synth_scene: gaussian count must be >= 0");
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    GaussianSet g;
    for (int i = 0; i < opt.gaussians; ++i) {
        Vec3 dir(normal(rng), normal(rng), normal(rng));
        dir.normalize();
        const Vec3 mean = dir * opt.scene_radius * std::cbrt(unit(rng));
        const double base = std::exp(std::log(0.04) + unit(rng) * (std::log(0.15) - std::log(0.04)));
        const Vec3 scale(base * (0.6 + 0.8 * unit(rng)), base * (0.6 + 0.8 * unit(rng)), base * (0.6 + 0.8 * unit(rng)));
        Eigen::Vector4d q(normal(rng), normal(rng), normal(rng), normal(rng));
        q.normalize();
        const float alpha = static_cast<float>(0.6 + 0.35 * unit(rng));
        const Vec3 color(0.1 + 0.85 * unit(rng), 0.1 + 0.85 * unit(rng), 0.1 + 0.85 * unit(rng));
        g.push_back(mean, alpha, scale, q, color);
    }
    // Quantize through the file encoding so the saved splats reproduce the renders.
    g = to_gaussian_set(to_splat_file(g));

    SyntheticScene out;
    out.ground_truth = g;
    out.scene.name = "synthetic-" + std::to_string(opt.seed);
    out.scene.near = 0.5;
    out.scene.far = 8.0;
    const double f = 0.5 * opt.width / std::tan(0.5 * opt.fov_degrees * std::numbers::pi / 180.0);
    for (int v = 0; v < opt.views; ++v) {
        const double t = opt.views == 1 ? 0.5 : static_cast<double>(v) / (opt.views - 1);
        const double angle = (t - 0.5) * opt.arc_degrees * std::numbers::pi / 180.0 + 0.05 * (unit(rng) - 0.5);
        const double height = 0.15 * (unit(rng) - 0.5);
        const Vec3 eye(opt.arc_radius * std::sin(angle), height, -opt.arc_radius * std::cos(angle));
        Camera cam;
        cam.intrinsics = {f, f, 0.5 * opt.width, 0.5 * opt.height, opt.width, opt.height};
        cam.pose = look_at(eye, Vec3::Zero());
        out.scene.cameras.push_back(cam);
        out.scene.images.push_back(render(g, cam, {opt.width, opt.height, Vec3::Zero(), kTileSize}));
    }
    return out;
}

// Writes scene.json, view_XXX.png and gt.ply into `dir`.
inline void write_synthetic_scene(const SyntheticScene& s, const std::string& dir) {
    fs::create_directories(dir);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < s.scene.size(); ++i) {
        std::ostringstream name;
        name << "view_" << std::setw(3) << std::setfill('0') << i << ".png";
        names.push_back(name.str());
        write_png(s.scene.images[i], (fs::path(dir) / names.back()).string());
    }
    std::ofstream(fs::path(dir) / "scene.json") << scene_manifest(s.scene, names).dump(2) << "\n";
    save_ply(to_splat_file(s.ground_truth), (fs::path(dir) / "gt.ply").string());
}

} // namespace ilrm::io
