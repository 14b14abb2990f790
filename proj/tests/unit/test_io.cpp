#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "ilrm/io/checkpoint.hpp"
#include "ilrm/io/scene_io.hpp"
#include "support/scenes.hpp"

using namespace ilrm;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("ilrm_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ModelConfig small_model() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 16;
    cfg.heads = 2;
    cfg.patch = 4;
    cfg.seed = 3;
    return cfg;
}

} // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const auto model = Model<float>::init(small_model());
    const auto bytes = io::serialize_checkpoint(model);
    const auto loaded = io::deserialize_checkpoint<float>(bytes);
    EXPECT_EQ(io::serialize_checkpoint(loaded), bytes);
    const auto path = temp_dir("ckpt") / "m.ckpt";
    io::save_checkpoint(loaded, path.string());
    EXPECT_EQ(io::detail::read_file(path.string()), bytes);
}

TEST(Checkpoint, LoadedModelGivesIdenticalForward) {
    const auto model = Model<float>::init(small_model());
    const auto loaded = io::deserialize_checkpoint<float>(io::serialize_checkpoint(model));
    auto synth = io::synth_scene({1, 2, 16, 16, 10});
    const auto a = reconstruct(model, std::span<const Camera>(synth.scene.cameras),
                               std::span<const Image>(synth.scene.images), 0.5, 8.0);
    const auto b = reconstruct(loaded, std::span<const Camera>(synth.scene.cameras),
                               std::span<const Image>(synth.scene.images), 0.5, 8.0);
    ASSERT_EQ(a.means.numel(), b.means.numel());
    for (std::size_t i = 0; i < a.means.numel(); ++i) EXPECT_EQ(a.means[i], b.means[i]);
    for (std::size_t i = 0; i < a.colors.numel(); ++i) EXPECT_EQ(a.colors[i], b.colors[i]);
}

TEST(Checkpoint, OverrideConfigShapeConflict) {
    const auto bytes = io::serialize_checkpoint(Model<float>::init(small_model()));
    auto other = small_model();
    other.hidden = 32;
    try {
        io::deserialize_checkpoint<float>(bytes, other);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("shape conflict"), std::string::npos);
    }
    auto same = small_model();
    same.minibatch = MinibatchScheme::Half;
    EXPECT_NO_THROW(io::deserialize_checkpoint<float>(bytes, same));
}

TEST(Checkpoint, CorruptionIsFormatError) {
    const auto bytes = io::serialize_checkpoint(Model<float>::init(small_model()));
    EXPECT_THROW(io::deserialize_checkpoint<float>(bytes.substr(0, 4)), FormatError);
    EXPECT_THROW(io::deserialize_checkpoint<float>(bytes.substr(0, bytes.size() - 4)), FormatError);
    EXPECT_THROW(io::deserialize_checkpoint<float>(bytes + "x"), FormatError);
    std::string bad = bytes;
    bad[9] = '#';
    EXPECT_THROW(io::deserialize_checkpoint<float>(bad), FormatError);
}

TEST(Ply, HeaderOrder) {
    const std::string h = io::ply_header(3);
    EXPECT_EQ(h.rfind("ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\n", 0), 0u);
    const auto opacity = h.find("property float opacity"), dc = h.find("property float f_dc_2"),
               s0 = h.find("property float scale_0"), r3 = h.find("property float rot_3");
    EXPECT_LT(dc, opacity);
    EXPECT_LT(opacity, s0);
    EXPECT_LT(s0, r3);
    EXPECT_EQ(h.substr(h.size() - 11), "end_header\n");
}

TEST(Ply, RoundTripBytesAndValues) {
    std::mt19937_64 rng(4);
    const auto g = ilrm::testing::random_gaussians(rng, 25);
    const auto file = io::to_splat_file(g);
    const auto bytes = io::serialize_ply(file);
    EXPECT_EQ(io::serialize_ply(io::parse_ply(bytes)), bytes);
    const auto back = io::to_gaussian_set(io::parse_ply(bytes));
    ASSERT_EQ(back.size(), g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_LT((back.means[i] - g.means[i]).norm(), 1e-6);
        EXPECT_LT((back.colors[i] - g.colors[i]).norm(), 1e-6);
        EXPECT_NEAR(back.opacity[i], g.opacity[i], 1e-6);
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(back.scales[i][k] / g.scales[i][k], 1.0, 1e-6);
    }
    // Quantized sets are fixed points of the encoding.
    EXPECT_EQ(io::serialize_ply(io::to_splat_file(back)), bytes);
}

TEST(Ply, MalformedFiles) {
    const auto bytes = io::serialize_ply(io::to_splat_file(GaussianSet{}));
    EXPECT_NO_THROW(io::parse_ply(bytes));
    EXPECT_THROW(io::parse_ply("plx\n"), FormatError);
    EXPECT_THROW(io::parse_ply(bytes + "abcd"), FormatError);
    std::string swapped = bytes;
    swapped.replace(swapped.find("property float y"), 16, "property float q");
    EXPECT_THROW(io::parse_ply(swapped), FormatError);
}

TEST(ImageIo, PngRoundTripIsExactOnEightBitValues) {
    Image img(5, 7);
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<float>((i * 37) % 256) / 255.0f;
    const auto path = (temp_dir("png") / "a.png").string();
    io::write_png(img, path);
    const auto back = io::read_png(path);
    ASSERT_EQ(back.width, 7);
    ASSERT_EQ(back.height, 5);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(back.data[i], img.data[i]);
}

TEST(ImageIo, RawRoundTripIsExact) {
    Image img(3, 4);
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = 0.123f * static_cast<float>(i) - 0.5f;
    const auto path = (temp_dir("raw") / "a.f32").string();
    io::write_raw(img, path);
    const auto back = io::read_raw(path);
    EXPECT_EQ(back.data, img.data);
    EXPECT_EQ(fs::file_size(path), 12u + img.size() * 4);
    io::detail::write_file(path, "short");
    EXPECT_THROW(io::read_raw(path), FormatError);
}

TEST(Synth, DeterministicAndSavedSplatsReproduceRenders) {
    const auto a = io::synth_scene({11, 3, 24, 24, 30});
    const auto b = io::synth_scene({11, 3, 24, 24, 30});
    for (std::size_t v = 0; v < a.scene.size(); ++v) EXPECT_EQ(a.scene.images[v].data, b.scene.images[v].data);
    const auto dir = temp_dir("synth");
    io::write_synthetic_scene(a, dir.string());
    const auto splats = io::to_gaussian_set(io::load_ply((dir / "gt.ply").string()));
    for (std::size_t v = 0; v < a.scene.size(); ++v) {
        const auto& cam = a.scene.cameras[v];
        const auto img = render(splats, cam, {24, 24, Vec3::Zero(), kTileSize});
        EXPECT_EQ(img.data, a.scene.images[v].data);
    }
}

TEST(Synth, ZeroGaussiansRenderBackground) {
    const auto s = io::synth_scene({2, 2, 8, 8, 0});
    for (const auto& img : s.scene.images)
        for (float v : img.data) EXPECT_EQ(v, 0.0f);
}

TEST(Manifest, RoundTrip) {
    const auto synth = io::synth_scene({5, 4, 16, 16, 12});
    const auto dir = temp_dir("manifest");
    io::write_synthetic_scene(synth, dir.string());
    const auto loaded = io::load_scene(dir.string());
    ASSERT_EQ(loaded.size(), synth.scene.size());
    EXPECT_EQ(loaded.name, synth.scene.name);
    EXPECT_EQ(loaded.near, synth.scene.near);
    EXPECT_EQ(loaded.far, synth.scene.far);
    for (std::size_t v = 0; v < loaded.size(); ++v) {
        EXPECT_LT((loaded.cameras[v].pose.rotation - synth.scene.cameras[v].pose.rotation).norm(), 1e-12);
        EXPECT_LT((loaded.cameras[v].pose.translation - synth.scene.cameras[v].pose.translation).norm(), 1e-12);
        for (std::size_t i = 0; i < loaded.images[v].size(); ++i)
            EXPECT_NEAR(loaded.images[v].data[i], synth.scene.images[v].data[i], 0.5 / 255 + 1e-6);
    }
    const auto cams_only = io::load_scene((dir / "scene.json").string(), false);
    EXPECT_TRUE(cams_only.images.empty());
    EXPECT_EQ(cams_only.cameras.size(), loaded.size());
}

TEST(Manifest, MissingImageAndBadJson) {
    const auto dir = temp_dir("manifest_bad");
    io::detail::write_file((dir / "scene.json").string(), "{not json");
    EXPECT_THROW(io::load_scene(dir.string()), FormatError);
    const auto synth = io::synth_scene({5, 2, 8, 8, 4});
    io::write_synthetic_scene(synth, dir.string());
    fs::remove(dir / "view_001.png");
    EXPECT_THROW(io::load_scene(dir.string()), std::runtime_error);
}

TEST(ConfigJson, RoundTripAndValidation) {
    RunConfig c;
    c.model.layers = 3;
    c.model.minibatch = MinibatchScheme::Quarter;
    c.model.viewpoint_res = ViewpointRes::Q;
    c.train.steps = 77;
    const auto back = io::run_config_from_json(io::to_json(c));
    EXPECT_EQ(io::to_json(back), io::to_json(c));
    EXPECT_THROW(io::run_config_from_json({{"model", {{"hidden", 10}, {"heads", 3}}}}), ConfigError);
    EXPECT_THROW(io::run_config_from_json({{"model", {{"minibatch", "eighth"}}}}), ConfigError);
}
