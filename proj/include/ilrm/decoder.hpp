#pragma once

// Decoding of final viewpoint tokens into pixel-aligned 3D Gaussians.
//
// Raw channel layout per viewpoint pixel (16 values):
//   [0,2)  xy offset      [2,5)  depth (averaged)   [5]   opacity
//   [6,9)  log scale      [9,13) quaternion wxyz    [13,16) color

#include <cmath>
#include <span>
#include <vector>

#include "ilrm/camera.hpp"
#include "ilrm/update_blocks.hpp"

namespace ilrm {

constexpr std::size_t kRawChannels = 16;
constexpr double kMaxPixelOffset = 0.5;
constexpr double kLogScaleMin = -10.0;
constexpr double kLogScaleMax = 2.0;
constexpr double kLogScaleShift = -2.3;  // raw 0 decodes to scale ~0.1
constexpr double kQuatGuard = 1e-8;

// Plain-data Gaussian set (world frame), used by the renderer and file IO.
struct GaussianSet {
    std::vector<Vec3> means;
    std::vector<float> opacity;
    std::vector<Vec3> scales;
    std::vector<Eigen::Vector4d> rotations;  // unit quaternion (w, x, y, z)
    std::vector<Vec3> colors;

    std::size_t size() const { return means.size(); }

    void push_back(const Vec3& mean, float alpha, const Vec3& scale, const Eigen::Vector4d& rot, const Vec3& color) {
        means.push_back(mean);
        opacity.push_back(alpha);
        scales.push_back(scale);
        rotations.push_back(rot);
        colors.push_back(color);
    }
};

// Inverse of a scene normalization applied to Gaussians: positions and
// scales return to world units, orientations to world axes.
inline GaussianSet to_world(const GaussianSet& g, const SceneNormalization& tf) {
    const double inv = 1.0 / tf.scale;
    const Eigen::Quaterniond frame(tf.rotation);
    GaussianSet out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& q = g.rotations[i];
        const Eigen::Quaterniond r = (frame * Eigen::Quaterniond(q[0], q[1], q[2], q[3])).normalized();
        out.push_back(tf.rotation * g.means[i] * inv + tf.center, g.opacity[i], g.scales[i] * inv,
                      Eigen::Vector4d(r.w(), r.x(), r.y(), r.z()), g.colors[i]);
    }
    return out;
}

// Gaussian parameters as differentiable tensors (one row per Gaussian).
template <class T>
struct GaussianTensors {
    Tensor<T> means;      // n x 3
    Tensor<T> opacity;    // n x 1
    Tensor<T> scales;     // n x 3
    Tensor<T> rotations;  // n x 4
    Tensor<T> colors;     // n x 3

    std::size_t size() const { return means.dim(0); }

    GaussianSet to_set() const {
        GaussianSet g;
        for (std::size_t i = 0; i < size(); ++i) {
            g.push_back(Vec3(means.at(i, 0), means.at(i, 1), means.at(i, 2)), static_cast<float>(opacity.at(i, 0)),
                        Vec3(scales.at(i, 0), scales.at(i, 1), scales.at(i, 2)),
                        Eigen::Vector4d(rotations.at(i, 0), rotations.at(i, 1), rotations.at(i, 2), rotations.at(i, 3)),
                        Vec3(colors.at(i, 0), colors.at(i, 1), colors.at(i, 2)));
        }
        return g;
    }
};

// Tensor view of a Gaussian set with gradients enabled on every field.
template <class T>
GaussianTensors<T> to_tensors(const GaussianSet& g) {
    const std::size_t n = g.size();
    std::vector<T> m, o, s, r, c;
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            m.push_back(static_cast<T>(g.means[i][k]));
            s.push_back(static_cast<T>(g.scales[i][k]));
            c.push_back(static_cast<T>(g.colors[i][k]));
        }
        o.push_back(static_cast<T>(g.opacity[i]));
        for (int k = 0; k < 4; ++k) r.push_back(static_cast<T>(g.rotations[i][k]));
    }
    return {Tensor<T>({n, 3}, m, true), Tensor<T>({n, 1}, o, true), Tensor<T>({n, 3}, s, true),
            Tensor<T>({n, 4}, r, true), Tensor<T>({n, 3}, c, true)};
}

template <class T>
GaussianTensors<T> concat(const std::vector<GaussianTensors<T>>& parts) {
    std::vector<Tensor<T>> m, o, s, r, c;
    for (const auto& p : parts) {
        m.push_back(p.means);
        o.push_back(p.opacity);
        s.push_back(p.scales);
        r.push_back(p.rotations);
        c.push_back(p.colors);
    }
    return {concat_rows(m), concat_rows(o), concat_rows(s), concat_rows(r), concat_rows(c)};
}

// Linear head to 16 p^2 values per token, unpatchified to (Hv * Wv) x 16 in
// raster pixel order.
template <class T>
Tensor<T> decode_tokens(const ViewTokens<T>& v, const Tensor<T>& head) {
    const auto p2 = static_cast<std::size_t>(v.patch * v.patch);
    if (head.rank() != 2 || head.dim(0) != v.tokens.dim(1) || head.dim(1) != kRawChannels * p2) {
        throw DimensionError("decode_tokens: head " + shape_str(head.shape()) + " incompatible with tokens " +
                             shape_str(v.tokens.shape()) + " at patch " + std::to_string(v.patch));
    }
    const auto raw = unpatchify(matmul(v.tokens, head), static_cast<std::size_t>(v.grid_h),
                                static_cast<std::size_t>(v.grid_w), static_cast<std::size_t>(v.patch));
    return reshape(raw, {static_cast<std::size_t>(v.grid_h * v.grid_w), kRawChannels});
}

// Activated per-pixel parameters; offsets in viewpoint pixels, depth along the ray.
template <class T>
struct ActivatedGaussians {
    Tensor<T> offset;     // n x 2, within +-0.5 px
    Tensor<T> depth;      // n x 1, in (near, far)
    Tensor<T> opacity;    // n x 1
    Tensor<T> scales;     // n x 3
    Tensor<T> rotations;  // n x 4
    Tensor<T> colors;     // n x 3
};

template <class T>
ActivatedGaussians<T> activate(const Tensor<T>& raw, double near, double far) {
    if (!(near > 0 && far > near)) throw ValidationError("activate: need 0 < near < far");
    if (raw.rank() != 2 || raw.dim(1) != kRawChannels)
        throw DimensionError("activate: expected n x 16 raw channels, got " + shape_str(raw.shape()));
    ActivatedGaussians<T> a;
    a.offset = scale(tanh(slice_cols(raw, 0, 2)), T(kMaxPixelOffset));
    const auto depth_mix = sigmoid(mean_last(slice_cols(raw, 2, 3)));
    a.depth = scale(exp(scale(depth_mix, static_cast<T>(std::log(far / near)))), static_cast<T>(near));
    a.opacity = sigmoid(slice_cols(raw, 5, 1));
    a.scales = exp(clamp(add_scalar(slice_cols(raw, 6, 3), T(kLogScaleShift)), T(kLogScaleMin), T(kLogScaleMax)));
    a.rotations = normalize_rows(slice_cols(raw, 9, 4), {T(1), T(0), T(0), T(0)}, T(kQuatGuard));
    a.colors = sigmoid(slice_cols(raw, 13, 3));
    return a;
}

// Means from per-pixel rays: pixel (u, v) of the viewpoint grid is cast
// through (u + 0.5 + ox, v + 0.5 + oy) and advanced `depth` along the unit
// direction. `camera` must already be at viewpoint resolution.
template <class T>
Tensor<T> unproject(const Tensor<T>& offset, const Tensor<T>& depth, const Camera& camera) {
    const int w = camera.intrinsics.width, h = camera.intrinsics.height;
    const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (offset.rank() != 2 || offset.dim(0) != n || offset.dim(1) != 2 || depth.rank() != 2 || depth.dim(0) != n ||
        depth.dim(1) != 1) {
        throw DimensionError("unproject: offsets " + shape_str(offset.shape()) + " / depth " +
                             shape_str(depth.shape()) + " do not match a " + std::to_string(h) + "x" +
                             std::to_string(w) + " grid");
    }
    const Mat3& rot = camera.pose.rotation;
    const Vec3& o = camera.pose.translation;
    const double fx = camera.intrinsics.fx, fy = camera.intrinsics.fy;
    std::vector<T> out(n * 3);
    std::vector<double> dirs(n * 3), norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double px = static_cast<double>(i % static_cast<std::size_t>(w)) + 0.5 + offset.at(i, 0);
        const double py = static_cast<double>(i / static_cast<std::size_t>(w)) + 0.5 + offset.at(i, 1);
        const Vec3 dw = camera.direction_through(px, py);
        norms[i] = dw.norm();
        const Vec3 dir = dw / norms[i];
        for (int c = 0; c < 3; ++c) {
            dirs[i * 3 + c] = dir[c];
            out[i * 3 + c] = static_cast<T>(o[c] + static_cast<double>(depth[i]) * dir[c]);
        }
    }
    return detail::make_result<T>(
        {n, 3}, std::move(out), {offset, depth},
        [n, rot, fx, fy, dirs = std::move(dirs), norms = std::move(norms)](TensorNode<T>& node) {
            T* g_off = detail::grad_of(node, 0);
            T* g_depth = detail::grad_of(node, 1);
            const auto& zd = node.parents[1]->data;
            for (std::size_t i = 0; i < n; ++i) {
                const Vec3 g(node.grad[i * 3], node.grad[i * 3 + 1], node.grad[i * 3 + 2]);
                const Vec3 dir(dirs[i * 3], dirs[i * 3 + 1], dirs[i * 3 + 2]);
                if (g_depth) g_depth[i] += static_cast<T>(g.dot(dir));
                if (g_off) {
                    // d(dir)/d(dw) = (I - dir dir^T) / |dw|
                    const Vec3 gdw = static_cast<double>(zd[i]) * (g - dir * dir.dot(g)) / norms[i];
                    g_off[i * 2] += static_cast<T>(gdw.dot(rot.col(0)) / fx);
                    g_off[i * 2 + 1] += static_cast<T>(gdw.dot(rot.col(1)) / fy);
                }
            }
        });
}

// Full decode for one view: head, activations, unprojection.
template <class T>
GaussianTensors<T> decode_view(const ViewTokens<T>& v, const Tensor<T>& head, const Camera& camera, double near,
                               double far) {
    const auto act = activate(decode_tokens(v, head), near, far);
    const Camera cam = camera.rescaled(v.grid_w, v.grid_h);
    return {unproject(act.offset, act.depth, cam), act.opacity, act.scales, act.rotations, act.colors};
}

// Tokenize, refine and decode all views into one Gaussian set.
template <class T>
GaussianTensors<T> reconstruct(const Model<T>& model, std::span<const Camera> cameras, std::span<const Image> images,
                               double near, double far, std::uint64_t step = 0) {
    const auto views = forward(model, cameras, images, step);
    std::vector<GaussianTensors<T>> parts;
    for (std::size_t i = 0; i < views.size(); ++i)
        parts.push_back(decode_view(views[i], model.head, cameras[i], near, far));
    return parts.size() == 1 ? parts.front() : concat(parts);
}

} // namespace ilrm
