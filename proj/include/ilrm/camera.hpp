#pragma once

// Pinhole cameras, Plücker ray maps, scene pose normalization and farthest
// point sampling of camera positions.
//
// Convention: poses are camera-to-world. The columns of the rotation are the
// camera's right, down and forward axes in world coordinates (+z forward),
// and pixel (u, v) is sampled at its center (u + 0.5, v + 0.5).

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ilrm/errors.hpp"

namespace ilrm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Intrinsics {
    double fx = 1, fy = 1;
    double cx = 0, cy = 0;
    int width = 1, height = 1;

    void validate() const {
        if (!(fx > 0 && fy > 0)) throw ValidationError("intrinsics: focal lengths must be positive");
        if (width < 1 || height < 1) throw ValidationError("intrinsics: image size must be positive");
        if (cx < 0 || cx > width || cy < 0 || cy > height)
            throw ValidationError("intrinsics: principal point outside the image");
    }

    // Intrinsics for the same field of view sampled at out_w x out_h pixels.
    Intrinsics rescaled(int out_w, int out_h) const {
        const double sx = static_cast<double>(out_w) / width;
        const double sy = static_cast<double>(out_h) / height;
        return {fx * sx, fy * sy, cx * sx, cy * sy, out_w, out_h};
    }
};

struct Pose {
    Mat3 rotation = Mat3::Identity();  // camera-to-world, columns right/down/forward
    Vec3 translation = Vec3::Zero();   // camera center in world coordinates

    Vec3 right() const { return rotation.col(0); }
    Vec3 down() const { return rotation.col(1); }
    Vec3 forward() const { return rotation.col(2); }

    void validate(double tol = 1e-6) const {
        const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
        if (!(ortho <= tol) || !(std::abs(rotation.determinant() - 1.0) <= tol)) {
            throw ValidationError("pose: rotation is not orthonormal with det +1 (error " + std::to_string(ortho) +
                                  ")");
        }
    }
};

struct Camera {
    Intrinsics intrinsics;
    Pose pose;

    Camera rescaled(int out_w, int out_h) const { return {intrinsics.rescaled(out_w, out_h), pose}; }

    // World-space (not normalized) direction through image point (x, y) in pixels.
    Vec3 direction_through(double x, double y) const {
        const Vec3 d_cam((x - intrinsics.cx) / intrinsics.fx, (y - intrinsics.cy) / intrinsics.fy, 1.0);
        return pose.rotation * d_cam;
    }

    Vec3 world_to_camera(const Vec3& p) const { return pose.rotation.transpose() * (p - pose.translation); }
};

// Builds a camera at `eye` looking at `target`; `world_down` fixes the roll.
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& world_down = Vec3(0, 1, 0)) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 right = world_down.cross(forward).normalized();
    const Vec3 down = forward.cross(right);
    Pose pose;
    pose.rotation.col(0) = right;
    pose.rotation.col(1) = down;
    pose.rotation.col(2) = forward;
    pose.translation = eye;
    return pose;
}

// Per-pixel (direction, moment) 6-vectors laid out H x W x 6.
struct PluckerRayMap {
    int height = 0, width = 0;
    std::vector<double> data;

    const double* at(int v, int u) const { return data.data() + (static_cast<std::size_t>(v) * width + u) * 6; }
};

inline PluckerRayMap plucker_rays(const Camera& camera, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ValidationError("plucker_rays: output size must be positive");
    camera.intrinsics.validate();
    camera.pose.validate();
    const Camera cam = camera.rescaled(out_w, out_h);
    const Vec3& o = cam.pose.translation;
    PluckerRayMap map{out_h, out_w, std::vector<double>(static_cast<std::size_t>(out_h) * out_w * 6)};
    for (int v = 0; v < out_h; ++v) {
        for (int u = 0; u < out_w; ++u) {
            const Vec3 d = cam.direction_through(u + 0.5, v + 0.5).normalized();
            const Vec3 m = o.cross(d);
            double* px = map.data.data() + (static_cast<std::size_t>(v) * out_w + u) * 6;
            for (int k = 0; k < 3; ++k) {
                px[k] = d[k];
                px[3 + k] = m[k];
            }
        }
    }
    return map;
}

// Rigid re-framing plus uniform scale: p' = scale * R^T (p - center).
struct SceneNormalization {
    Mat3 rotation = Mat3::Identity();  // reference frame axes (right, down, forward) in world
    Vec3 center = Vec3::Zero();
    double scale = 1.0;

    Pose apply(const Pose& pose) const {
        Pose out;
        out.rotation = rotation.transpose() * pose.rotation;
        out.translation = scale * (rotation.transpose() * (pose.translation - center));
        return out;
    }

    Vec3 apply_point(const Vec3& p) const { return scale * (rotation.transpose() * (p - center)); }
};

struct NormalizedPoses {
    std::vector<Pose> poses;
    SceneNormalization transform;
};

constexpr double kDegenerateDistance = 1e-8;

// Re-expresses poses in the frame of their mean position and mean axes and
// scales so that the farthest camera lies at distance 1.
inline NormalizedPoses normalize_poses(std::span<const Pose> poses) {
    if (poses.empty()) throw ValidationError("normalize_poses: no poses given");
    Vec3 center = Vec3::Zero(), fwd = Vec3::Zero(), down = Vec3::Zero();
    for (const auto& p : poses) {
        center += p.translation;
        fwd += p.forward();
        down += p.down();
    }
    const double n = static_cast<double>(poses.size());
    center /= n;
    fwd /= n;
    down /= n;

    // Averaged axes can cancel out; fall back to the first camera's axes.
    if (fwd.norm() < kDegenerateDistance) fwd = poses.front().forward();
    fwd.normalize();
    down -= down.dot(fwd) * fwd;
    if (down.norm() < kDegenerateDistance) {
        down = poses.front().down() - poses.front().down().dot(fwd) * fwd;
        if (down.norm() < kDegenerateDistance) down = fwd.unitOrthogonal();
    }
    down.normalize();
    const Vec3 right = down.cross(fwd);

    SceneNormalization tf;
    tf.rotation.col(0) = right;
    tf.rotation.col(1) = down;
    tf.rotation.col(2) = fwd;
    tf.center = center;

    NormalizedPoses out;
    double max_dist = 0;
    for (const auto& p : poses) max_dist = std::max(max_dist, (p.translation - center).norm());
    tf.scale = max_dist < kDegenerateDistance ? 1.0 : 1.0 / max_dist;
    out.transform = tf;
    out.poses.reserve(poses.size());
    for (const auto& p : poses) out.poses.push_back(tf.apply(p));
    return out;
}

// Greedy farthest point sampling seeded at index 0; ties go to the lowest index.
inline std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> positions, std::size_t count) {
    if (count < 1 || count > positions.size()) {
        throw ValidationError("farthest_point_sample: count " + std::to_string(count) + " outside [1, " +
                              std::to_string(positions.size()) + "]");
    }
    std::vector<std::size_t> picked{0};
    std::vector<double> min_dist(positions.size(), std::numeric_limits<double>::infinity());
    std::vector<char> taken(positions.size(), 0);
    taken[0] = 1;
    while (picked.size() < count) {
        const Vec3& last = positions[picked.back()];
        std::size_t best = positions.size();
        double best_d = -1;
        for (std::size_t i = 0; i < positions.size(); ++i) {
            min_dist[i] = std::min(min_dist[i], (positions[i] - last).norm());
            if (!taken[i] && min_dist[i] > best_d) {
                best_d = min_dist[i];
                best = i;
            }
        }
        taken[best] = 1;
        picked.push_back(best);
    }
    return picked;
}

} // namespace ilrm
