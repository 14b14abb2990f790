#pragma once

// Viewpoint and image tokenization: patchify, linear projection, LayerNorm.
// No positional embedding is added; the Plücker channels carry geometry.

#include <random>

#include "ilrm/camera.hpp"
#include "ilrm/image.hpp"
#include "ilrm/ops.hpp"

namespace ilrm {

constexpr double kLayerNormEps = 1e-5;
constexpr double kRmsNormEps = 1e-6;

template <class T>
Tensor<T> normal_parameter(Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<T> data(shape_numel(shape));
    for (auto& v : data) v = static_cast<T>(dist(rng));
    return Tensor<T>(std::move(shape), std::move(data), true);
}

template <class T>
Tensor<T> ones_parameter(std::size_t n) {
    return Tensor<T>::full({n}, T(1), true);
}

template <class T>
struct TokenizerWeights {
    Tensor<T> viewpoint_proj;  // 6p^2 x d
    Tensor<T> image_proj;      // 9p^2 x d
    Tensor<T> viewpoint_norm;  // d
    Tensor<T> image_norm;      // d

    static TokenizerWeights init(int patch, int hidden, double stddev, std::mt19937_64& rng) {
        const auto p2 = static_cast<std::size_t>(patch * patch);
        const auto d = static_cast<std::size_t>(hidden);
        TokenizerWeights w;
        w.viewpoint_proj = normal_parameter<T>({6 * p2, d}, stddev, rng);
        w.image_proj = normal_parameter<T>({9 * p2, d}, stddev, rng);
        w.viewpoint_norm = ones_parameter<T>(d);
        w.image_norm = ones_parameter<T>(d);
        return w;
    }
};

// Token matrix of one view plus the grid it was cut from.
template <class T>
struct ViewTokens {
    Tensor<T> tokens;  // (grid_h * grid_w / p^2) x d
    int grid_h = 0;
    int grid_w = 0;
    int patch = 0;

    std::size_t length() const { return tokens.dim(0); }
};

template <class T>
Tensor<T> ray_map_tensor(const PluckerRayMap& rays) {
    return Tensor<T>({static_cast<std::size_t>(rays.height), static_cast<std::size_t>(rays.width), 6},
                     std::vector<T>(rays.data.begin(), rays.data.end()));
}

template <class T>
Tensor<T> image_tensor(const Image& image) {
    return Tensor<T>({static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width), 3},
                     std::vector<T>(image.data.begin(), image.data.end()));
}

template <class T>
ViewTokens<T> tokenize_viewpoint(const PluckerRayMap& rays, const TokenizerWeights<T>& w, int patch) {
    const auto p = static_cast<std::size_t>(patch);
    if (w.viewpoint_proj.dim(0) != 6 * p * p) {
        throw DimensionError("tokenize_viewpoint: projection " + shape_str(w.viewpoint_proj.shape()) +
                             " does not match patch size " + std::to_string(patch));
    }
    auto x = patchify(ray_map_tensor<T>(rays), p);
    x = matmul(x, w.viewpoint_proj);
    x = layer_norm(x, w.viewpoint_norm, T(kLayerNormEps));
    return {x, rays.height, rays.width, patch};
}

// Each row is [flattened RGB patch (3p^2), flattened Plücker patch (6p^2)].
template <class T>
ViewTokens<T> tokenize_image(const Image& image, const PluckerRayMap& rays, const TokenizerWeights<T>& w,
                             int patch) {
    if (image.height != rays.height || image.width != rays.width) {
        throw ValidationError("tokenize_image: image " + std::to_string(image.height) + "x" +
                              std::to_string(image.width) + " vs ray map " + std::to_string(rays.height) + "x" +
                              std::to_string(rays.width));
    }
    for (float v : image.data)
        if (!std::isfinite(v)) throw ValidationError("tokenize_image: non-finite pixel value");
    const auto p = static_cast<std::size_t>(patch);
    if (w.image_proj.dim(0) != 9 * p * p) {
        throw DimensionError("tokenize_image: projection " + shape_str(w.image_proj.shape()) +
                             " does not match patch size " + std::to_string(patch));
    }
    auto x = concat_cols<T>({patchify(image_tensor<T>(image), p), patchify(ray_map_tensor<T>(rays), p)});
    x = matmul(x, w.image_proj);
    x = layer_norm(x, w.image_norm, T(kLayerNormEps));
    return {x, image.height, image.width, patch};
}

} // namespace ilrm
