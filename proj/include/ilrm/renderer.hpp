#pragma once

// Gaussian splat rendering.
//
// Three rasterizers share one compositing rule:
//   rasterize_tiled       16x16 tile binning, early termination, float image
//   render_oracle         direct per-pixel loop over every splat; the reference
//   rasterize_naive_diff  every splat for every pixel, on the gradient tape
//
// Per pixel, splats are visited in ascending view depth (ties by Gaussian
// index). A splat contributes alpha = min(0.99, opacity * exp(-0.5 m^2))
// where m is the Mahalanobis distance of the pixel center; splats with
// m > 3 or alpha < 1/255 are skipped, and compositing stops before a splat
// would push transmittance below 1e-4. The differentiable path replaces the
// hard min with a smooth min and never stops early.

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "ilrm/camera.hpp"
#include "ilrm/decoder.hpp"
#include "ilrm/image.hpp"

namespace ilrm {

constexpr double kAlphaMax = 0.99;
constexpr double kAlphaMin = 1.0 / 255.0;
constexpr double kSigmaCutoff = 3.0;
constexpr double kCovDilation = 0.3;
constexpr double kTransmittanceMin = 1e-4;
constexpr double kNearPlane = 0.01;
constexpr double kSmoothMinSharpness = 100.0;
constexpr int kTileSize = 16;

struct RenderConfig {
    int width = 0;
    int height = 0;
    Vec3 background = Vec3::Zero();
    int tile = kTileSize;
};

struct Splat2D {
    Eigen::Vector2d mean;  // pixels
    double cov_xx = 0, cov_xy = 0, cov_yy = 0;
    double depth = 0;
    double opacity = 0;
    Vec3 color = Vec3::Zero();
    std::size_t index = 0;  // position in the source GaussianSet
};

struct RenderStats {
    std::size_t culled = 0;   // behind the near plane
    std::size_t non_psd = 0;  // degenerate 2D covariance, skipped
};

inline Mat3 quat_to_rotation(const Eigen::Vector4d& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

// EWA projection of one Gaussian. Output: u, v, cov_xx, cov_xy, cov_yy, depth.
struct ProjectedGaussian {
    std::array<double, 6> v{};
    bool visible = false;
};

inline ProjectedGaussian project_gaussian(const Camera& cam, const Vec3& mean, const Vec3& scale,
                                          const Eigen::Vector4d& quat) {
    ProjectedGaussian out;
    const Mat3 w2c = cam.pose.rotation.transpose();
    const Vec3 p = w2c * (mean - cam.pose.translation);
    out.v[5] = p.z();
    if (!(p.z() > kNearPlane)) return out;
    const double fx = cam.intrinsics.fx, fy = cam.intrinsics.fy;
    const double x = p.x(), y = p.y(), z = p.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << fx / z, 0, -fx * x / (z * z), 0, fy / z, -fy * y / (z * z);
    const double qn = quat.norm();
    const Eigen::Vector4d q = qn < 1e-12 ? Eigen::Vector4d(1, 0, 0, 0) : Eigen::Vector4d(quat / qn);
    const Mat3 m = quat_to_rotation(q) * scale.asDiagonal();
    const Eigen::Matrix<double, 2, 3> t = jac * w2c;
    const Eigen::Matrix2d cov = t * (m * m.transpose()) * t.transpose();
    out.v[0] = fx * x / z + cam.intrinsics.cx;
    out.v[1] = fy * y / z + cam.intrinsics.cy;
    out.v[2] = cov(0, 0) + kCovDilation;
    out.v[3] = 0.5 * (cov(0, 1) + cov(1, 0));
    out.v[4] = cov(1, 1) + kCovDilation;
    out.visible = true;
    return out;
}

// Vector-Jacobian product of project_gaussian for a visible Gaussian.
inline void project_gaussian_backward(const Camera& cam, const Vec3& mean, const Vec3& scale,
                                      const Eigen::Vector4d& quat, const std::array<double, 6>& g, Vec3& g_mean,
                                      Vec3& g_scale, Eigen::Vector4d& g_quat) {
    const Mat3 w2c = cam.pose.rotation.transpose();
    const Vec3 p = w2c * (mean - cam.pose.translation);
    const double fx = cam.intrinsics.fx, fy = cam.intrinsics.fy;
    const double x = p.x(), y = p.y(), z = p.z();
    if (!(z > kNearPlane)) return;
    Eigen::Matrix<double, 2, 3> jac;
    jac << fx / z, 0, -fx * x / (z * z), 0, fy / z, -fy * y / (z * z);
    const double qn = quat.norm();
    const bool degenerate_q = qn < 1e-12;
    const Eigen::Vector4d q = degenerate_q ? Eigen::Vector4d(1, 0, 0, 0) : Eigen::Vector4d(quat / qn);
    const Mat3 rq = quat_to_rotation(q);
    const Mat3 m = rq * scale.asDiagonal();
    const Mat3 sigma3 = m * m.transpose();
    const Eigen::Matrix<double, 2, 3> t = jac * w2c;

    Eigen::Matrix2d g2;
    g2 << g[2], 0.5 * g[3], 0.5 * g[3], g[4];
    const Mat3 g_sigma3 = t.transpose() * g2 * t;
    const Eigen::Matrix<double, 2, 3> g_t = 2.0 * g2 * t * sigma3;
    const Eigen::Matrix<double, 2, 3> g_j = g_t * w2c.transpose();

    const double z2 = z * z, z3 = z2 * z;
    Vec3 g_p;
    g_p.x() = g[0] * fx / z + g_j(0, 2) * (-fx / z2);
    g_p.y() = g[1] * fy / z + g_j(1, 2) * (-fy / z2);
    g_p.z() = g[0] * (-fx * x / z2) + g[1] * (-fy * y / z2) + g_j(0, 0) * (-fx / z2) + g_j(0, 2) * (2 * fx * x / z3) +
              g_j(1, 1) * (-fy / z2) + g_j(1, 2) * (2 * fy * y / z3) + g[5];
    g_mean += cam.pose.rotation * g_p;

    const Mat3 g_m = 2.0 * g_sigma3 * m;
    for (int j = 0; j < 3; ++j) g_scale[j] += g_m.col(j).dot(rq.col(j));
    const Mat3 g_r = g_m * scale.asDiagonal();
    if (degenerate_q) return;
    const double w = q[0], qx = q[1], qy = q[2], qz = q[3];
    Mat3 dw, dx, dy, dz;
    dw << 0, -2 * qz, 2 * qy, 2 * qz, 0, -2 * qx, -2 * qy, 2 * qx, 0;
    dx << 0, 2 * qy, 2 * qz, 2 * qy, -4 * qx, -2 * w, 2 * qz, 2 * w, -4 * qx;
    dy << -4 * qy, 2 * qx, 2 * w, 2 * qx, 0, 2 * qz, -2 * w, 2 * qz, -4 * qy;
    dz << -4 * qz, -2 * w, 2 * qx, 2 * w, -4 * qz, 2 * qy, 2 * qx, 2 * qy, 0;
    const Eigen::Vector4d g_qn(g_r.cwiseProduct(dw).sum(), g_r.cwiseProduct(dx).sum(), g_r.cwiseProduct(dy).sum(),
                               g_r.cwiseProduct(dz).sum());
    g_quat += (g_qn - q * q.dot(g_qn)) / qn;
}

// Projects every Gaussian; splats at or behind the near plane are dropped.
inline std::vector<Splat2D> project(const GaussianSet& g, const Camera& cam, RenderStats* stats = nullptr) {
    std::vector<Splat2D> out;
    out.reserve(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto pg = project_gaussian(cam, g.means[i], g.scales[i], g.rotations[i]);
        if (!pg.visible) {
            if (stats) ++stats->culled;
            continue;
        }
        Splat2D s;
        s.mean = {pg.v[0], pg.v[1]};
        s.cov_xx = pg.v[2];
        s.cov_xy = pg.v[3];
        s.cov_yy = pg.v[4];
        s.depth = pg.v[5];
        s.opacity = g.opacity[i];
        s.color = g.colors[i];
        s.index = i;
        out.push_back(s);
    }
    return out;
}

// Ascending depth, ties broken by source index.
inline std::vector<std::size_t> depth_order(const std::vector<Splat2D>& splats) {
    std::vector<std::size_t> order(splats.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
        return splats[a].index < splats[b].index;
    });
    return order;
}

namespace detail {

struct PreparedSplat {
    double u, v;
    double conic_xx, conic_xy, conic_yy;
    double opacity;
    Vec3 color;
    int tile_x0, tile_x1, tile_y0, tile_y1;  // inclusive tile range
};

inline void write_pixel(Image& img, int x, int y, const Vec3& c) {
    for (int k = 0; k < 3; ++k) img.at(y, x, k) = static_cast<float>(std::clamp(c[k], 0.0, 1.0));
}

} // namespace detail

inline Image rasterize_tiled(const std::vector<Splat2D>& splats, const RenderConfig& cfg,
                             RenderStats* stats = nullptr) {
    Image img(cfg.height, cfg.width);
    const int tile = cfg.tile;
    const int tiles_x = (cfg.width + tile - 1) / tile, tiles_y = (cfg.height + tile - 1) / tile;

    std::vector<detail::PreparedSplat> prepared;
    std::vector<std::vector<std::size_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::size_t idx : depth_order(splats)) {
        const Splat2D& s = splats[idx];
        const double det = s.cov_xx * s.cov_yy - s.cov_xy * s.cov_xy;
        if (!(det > 0) || !(s.cov_xx > 0)) {
            if (stats) ++stats->non_psd;
            continue;
        }
        const double mid = 0.5 * (s.cov_xx + s.cov_yy);
        const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
        const double radius = std::ceil(kSigmaCutoff * std::sqrt(lambda_max)) + 1.0;
        detail::PreparedSplat p{s.mean.x(), s.mean.y(), s.cov_yy / det, -s.cov_xy / det, s.cov_xx / det,
                                s.opacity, s.color, 0, 0, 0, 0};
        const double x0 = std::floor((p.u - radius) / tile), x1 = std::floor((p.u + radius) / tile);
        const double y0 = std::floor((p.v - radius) / tile), y1 = std::floor((p.v + radius) / tile);
        if (x1 < 0 || y1 < 0 || x0 >= tiles_x || y0 >= tiles_y) continue;
        p.tile_x0 = static_cast<int>(std::max(0.0, x0));
        p.tile_x1 = static_cast<int>(std::min<double>(tiles_x - 1, x1));
        p.tile_y0 = static_cast<int>(std::max(0.0, y0));
        p.tile_y1 = static_cast<int>(std::min<double>(tiles_y - 1, y1));
        const std::size_t id = prepared.size();
        prepared.push_back(p);
        for (int ty = p.tile_y0; ty <= p.tile_y1; ++ty)
            for (int tx = p.tile_x0; tx <= p.tile_x1; ++tx) bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(id);
    }

    const double cutoff_power = -0.5 * kSigmaCutoff * kSigmaCutoff;
    for (int ty = 0; ty < tiles_y; ++ty) {
        for (int tx = 0; tx < tiles_x; ++tx) {
            const auto& bin = bins[static_cast<std::size_t>(ty) * tiles_x + tx];
            for (int y = ty * tile; y < std::min(cfg.height, (ty + 1) * tile); ++y) {
                for (int x = tx * tile; x < std::min(cfg.width, (tx + 1) * tile); ++x) {
                    const double px = x + 0.5, py = y + 0.5;
                    double trans = 1.0;
                    Vec3 c = Vec3::Zero();
                    for (std::size_t id : bin) {
                        const auto& s = prepared[id];
                        const double dx = px - s.u, dy = py - s.v;
                        const double power =
                            -0.5 * (s.conic_xx * dx * dx + 2.0 * s.conic_xy * dx * dy + s.conic_yy * dy * dy);
                        if (power < cutoff_power || power > 0) continue;
                        const double alpha = std::min(kAlphaMax, s.opacity * std::exp(power));
                        if (alpha < kAlphaMin) continue;
                        const double next = trans * (1.0 - alpha);
                        if (next < kTransmittanceMin) break;
                        c += s.color * (alpha * trans);
                        trans = next;
                    }
                    detail::write_pixel(img, x, y, c + trans * cfg.background);
                }
            }
        }
    }
    return img;
}

// Reference renderer: every splat is tested against every pixel.
inline Image render_oracle(const std::vector<Splat2D>& splats, const RenderConfig& cfg) {
    Image img(cfg.height, cfg.width);
    const auto order = depth_order(splats);
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            const Eigen::Vector2d pixel(x + 0.5, y + 0.5);
            double trans = 1.0;
            Vec3 c = Vec3::Zero();
            for (std::size_t idx : order) {
                const Splat2D& s = splats[idx];
                Eigen::Matrix2d cov;
                cov << s.cov_xx, s.cov_xy, s.cov_xy, s.cov_yy;
                if (!(cov.determinant() > 0) || !(s.cov_xx > 0)) continue;
                const Eigen::Vector2d delta = pixel - s.mean;
                const double maha2 = delta.dot(cov.inverse() * delta);
                if (maha2 > kSigmaCutoff * kSigmaCutoff || maha2 < 0) continue;
                const double alpha = std::min(kAlphaMax, s.opacity * std::exp(-0.5 * maha2));
                if (alpha < kAlphaMin) continue;
                if (trans * (1.0 - alpha) < kTransmittanceMin) break;
                c += trans * alpha * s.color;
                trans *= 1.0 - alpha;
            }
            detail::write_pixel(img, x, y, c + trans * cfg.background);
        }
    }
    return img;
}

inline Image render(const GaussianSet& g, const Camera& cam, const RenderConfig& cfg, RenderStats* stats = nullptr) {
    return rasterize_tiled(project(g, cam, stats), cfg, stats);
}

// ------------------------------------------------------------ differentiable

// Differentiable projection: n x 6 rows of (u, v, cov_xx, cov_xy, cov_yy, depth).
// Gaussians behind the near plane produce a zero row with their true depth.
template <class T>
Tensor<T> project_splats(const Tensor<T>& means, const Tensor<T>& scales, const Tensor<T>& rotations,
                         const Camera& cam) {
    const std::size_t n = means.dim(0);
    if (means.shape() != Shape{n, 3} || scales.shape() != Shape{n, 3} || rotations.shape() != Shape{n, 4})
        throw DimensionError("project_splats: expected n x 3 means/scales and n x 4 rotations");
    std::vector<T> out(n * 6, T(0));
    for (std::size_t i = 0; i < n; ++i) {
        const auto pg = project_gaussian(cam, Vec3(means.at(i, 0), means.at(i, 1), means.at(i, 2)),
                                         Vec3(scales.at(i, 0), scales.at(i, 1), scales.at(i, 2)),
                                         Eigen::Vector4d(rotations.at(i, 0), rotations.at(i, 1), rotations.at(i, 2),
                                                         rotations.at(i, 3)));
        if (pg.visible)
            for (int k = 0; k < 6; ++k) out[i * 6 + k] = static_cast<T>(pg.v[static_cast<std::size_t>(k)]);
        else
            out[i * 6 + 5] = static_cast<T>(pg.v[5]);
    }
    return detail::make_result<T>({n, 6}, std::move(out), {means, scales, rotations}, [n, cam](TensorNode<T>& o) {
        T* gm = detail::grad_of(o, 0);
        T* gs = detail::grad_of(o, 1);
        T* gr = detail::grad_of(o, 2);
        const auto& md = o.parents[0]->data;
        const auto& sd = o.parents[1]->data;
        const auto& rd = o.parents[2]->data;
        for (std::size_t i = 0; i < n; ++i) {
            std::array<double, 6> g{};
            bool any = false;
            for (int k = 0; k < 6; ++k) {
                g[static_cast<std::size_t>(k)] = o.grad[i * 6 + k];
                any = any || g[static_cast<std::size_t>(k)] != 0;
            }
            if (!any) continue;
            Vec3 g_mean = Vec3::Zero(), g_scale = Vec3::Zero();
            Eigen::Vector4d g_quat = Eigen::Vector4d::Zero();
            project_gaussian_backward(cam, Vec3(md[i * 3], md[i * 3 + 1], md[i * 3 + 2]),
                                      Vec3(sd[i * 3], sd[i * 3 + 1], sd[i * 3 + 2]),
                                      Eigen::Vector4d(rd[i * 4], rd[i * 4 + 1], rd[i * 4 + 2], rd[i * 4 + 3]), g,
                                      g_mean, g_scale, g_quat);
            for (int k = 0; k < 3; ++k) {
                if (gm) gm[i * 3 + k] += static_cast<T>(g_mean[k]);
                if (gs) gs[i * 3 + k] += static_cast<T>(g_scale[k]);
            }
            if (gr)
                for (int k = 0; k < 4; ++k) gr[i * 4 + k] += static_cast<T>(g_quat[k]);
        }
    });
}

namespace detail {

// min(a, b) smoothed; derivative wrt a is sigmoid(k (b - a)).
inline double smooth_min(double a, double b, double k) {
    const double x = k * (a - b);
    const double softplus = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return a - softplus / k;
}

inline double smooth_min_grad(double a, double b, double k) {
    const double x = k * (b - a);
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct DiffSplat {
    double u, v, conic_xx, conic_xy, conic_yy, opacity;
    Vec3 color;
    bool valid;
};

struct PixelHit {
    std::size_t splat;
    double alpha, raw_alpha, gauss, trans, dx, dy;
};

// Front-to-back walk over `order` for one pixel center; returns final transmittance.
inline double walk_pixel(const std::vector<DiffSplat>& splats, const std::vector<std::size_t>& order, double px,
                         double py, std::vector<PixelHit>& hits, Vec3& color) {
    hits.clear();
    double trans = 1.0;
    color.setZero();
    for (std::size_t idx : order) {
        const auto& s = splats[idx];
        if (!s.valid) continue;
        const double dx = px - s.u, dy = py - s.v;
        const double power = -0.5 * (s.conic_xx * dx * dx + 2.0 * s.conic_xy * dx * dy + s.conic_yy * dy * dy);
        if (power < -0.5 * kSigmaCutoff * kSigmaCutoff || power > 0) continue;
        const double gauss = std::exp(power);
        const double raw = s.opacity * gauss;
        const double alpha = smooth_min(raw, kAlphaMax, kSmoothMinSharpness);
        if (alpha < kAlphaMin) continue;
        hits.push_back({idx, alpha, raw, gauss, trans, dx, dy});
        color += s.color * (alpha * trans);
        trans *= 1.0 - alpha;
    }
    return trans;
}

} // namespace detail

// Differentiable compositing of projected splats into an H x W x 3 image.
template <class T>
Tensor<T> composite(const Tensor<T>& splats2d, const Tensor<T>& opacity, const Tensor<T>& colors,
                    const RenderConfig& cfg) {
    const std::size_t n = splats2d.dim(0);
    if (splats2d.shape() != Shape{n, 6} || opacity.shape() != Shape{n, 1} || colors.shape() != Shape{n, 3})
        throw DimensionError("composite: expected n x 6 splats, n x 1 opacity and n x 3 colors");
    std::vector<detail::DiffSplat> splats(n);
    std::vector<Splat2D> depth_keys(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = splats2d.at(i, 2), b = splats2d.at(i, 3), c = splats2d.at(i, 4), z = splats2d.at(i, 5);
        const double det = a * c - b * b;
        auto& s = splats[i];
        s.valid = z > kNearPlane && det > 0 && a > 0;
        s.u = splats2d.at(i, 0);
        s.v = splats2d.at(i, 1);
        s.conic_xx = s.valid ? c / det : 0;
        s.conic_xy = s.valid ? -b / det : 0;
        s.conic_yy = s.valid ? a / det : 0;
        s.opacity = opacity[i];
        s.color = Vec3(colors.at(i, 0), colors.at(i, 1), colors.at(i, 2));
        depth_keys[i].depth = z;
        depth_keys[i].index = i;
    }
    auto order = depth_order(depth_keys);

    const auto h = static_cast<std::size_t>(cfg.height), w = static_cast<std::size_t>(cfg.width);
    std::vector<T> out(h * w * 3);
    std::vector<detail::PixelHit> hits;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            Vec3 c;
            const double trans = detail::walk_pixel(splats, order, x + 0.5, y + 0.5, hits, c);
            c += trans * cfg.background;
            for (int k = 0; k < 3; ++k) out[(y * w + x) * 3 + k] = static_cast<T>(c[k]);
        }
    }
    return detail::make_result<T>(
        {h, w, 3}, std::move(out), {splats2d, opacity, colors},
        [n, h, w, cfg, splats = std::move(splats), order = std::move(order)](TensorNode<T>& o) {
            T* g_splat = detail::grad_of(o, 0);
            T* g_op = detail::grad_of(o, 1);
            T* g_col = detail::grad_of(o, 2);
            std::vector<double> g_conic(n * 3, 0.0), g_uv(n * 2, 0.0), g_opacity(n, 0.0), g_color(n * 3, 0.0);
            std::vector<detail::PixelHit> hits;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    const std::size_t pix = (y * w + x) * 3;
                    const Vec3 g(o.grad[pix], o.grad[pix + 1], o.grad[pix + 2]);
                    if (g.isZero(0)) continue;
                    Vec3 c;
                    const double trans = detail::walk_pixel(splats, order, x + 0.5, y + 0.5, hits, c);
                    Vec3 behind = trans * cfg.background;
                    for (std::size_t k = hits.size(); k-- > 0;) {
                        const auto& hit = hits[k];
                        const auto& s = splats[hit.splat];
                        const double weight = hit.alpha * hit.trans;
                        for (int ch = 0; ch < 3; ++ch) g_color[hit.splat * 3 + ch] += g[ch] * weight;
                        const double g_alpha = g.dot(s.color * hit.trans - behind / (1.0 - hit.alpha));
                        behind += s.color * weight;
                        const double g_raw =
                            g_alpha * detail::smooth_min_grad(hit.raw_alpha, kAlphaMax, kSmoothMinSharpness);
                        g_opacity[hit.splat] += g_raw * hit.gauss;
                        const double g_power = g_raw * s.opacity * hit.gauss;
                        const double dx = hit.dx, dy = hit.dy;
                        g_conic[hit.splat * 3] += -0.5 * dx * dx * g_power;
                        g_conic[hit.splat * 3 + 1] += -dx * dy * g_power;
                        g_conic[hit.splat * 3 + 2] += -0.5 * dy * dy * g_power;
                        g_uv[hit.splat * 2] += (s.conic_xx * dx + s.conic_xy * dy) * g_power;
                        g_uv[hit.splat * 2 + 1] += (s.conic_xy * dx + s.conic_yy * dy) * g_power;
                    }
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                const auto& s = splats[i];
                if (g_op) g_op[i] += static_cast<T>(g_opacity[i]);
                if (g_col)
                    for (int ch = 0; ch < 3; ++ch) g_col[i * 3 + ch] += static_cast<T>(g_color[i * 3 + ch]);
                if (!g_splat || !s.valid) continue;
                g_splat[i * 6] += static_cast<T>(g_uv[i * 2]);
                g_splat[i * 6 + 1] += static_cast<T>(g_uv[i * 2 + 1]);
                // conic = cov^-1  =>  dL/dcov = -K dL/dK K
                Eigen::Matrix2d k, gk;
                k << s.conic_xx, s.conic_xy, s.conic_xy, s.conic_yy;
                gk << g_conic[i * 3], 0.5 * g_conic[i * 3 + 1], 0.5 * g_conic[i * 3 + 1], g_conic[i * 3 + 2];
                const Eigen::Matrix2d g_cov = -k * gk * k;
                g_splat[i * 6 + 2] += static_cast<T>(g_cov(0, 0));
                g_splat[i * 6 + 3] += static_cast<T>(2.0 * g_cov(0, 1));
                g_splat[i * 6 + 4] += static_cast<T>(g_cov(1, 1));
            }
        });
}

template <class T>
Tensor<T> rasterize_naive_diff(const GaussianTensors<T>& g, const Camera& cam, const RenderConfig& cfg) {
    return composite(project_splats(g.means, g.scales, g.rotations, cam), g.opacity, g.colors, cfg);
}

inline Image to_image(const Tensor<float>& t) {
    Image img(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)));
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = std::clamp(t[i], 0.0f, 1.0f);
    return img;
}

} // namespace ilrm
