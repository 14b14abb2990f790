#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include <random>

#include "ilrm/camera.hpp"

using namespace ilrm;

namespace {

Mat3 random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0, 1);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized().toRotationMatrix();
}

Camera random_camera(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-3, 3);
    Camera c;
    c.intrinsics = {40, 44, 31, 29, 64, 60};
    c.pose.rotation = random_rotation(rng);
    c.pose.translation = Vec3(u(rng), u(rng), u(rng));
    return c;
}

} // namespace

TEST(Intrinsics, Validation) {
    EXPECT_THROW((Intrinsics{0, 1, 0, 0, 4, 4}.validate()), ValidationError);
    EXPECT_THROW((Intrinsics{1, 1, 5, 0, 4, 4}.validate()), ValidationError);
    EXPECT_NO_THROW((Intrinsics{1, 1, 4, 4, 4, 4}.validate()));
}

TEST(Plucker, CameraAtOriginHasZeroMoment) {
    Camera c;
    c.intrinsics = {10, 10, 4, 4, 8, 8};
    const auto map = plucker_rays(c, 8, 8);
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u)
            for (int k = 3; k < 6; ++k) EXPECT_EQ(map.at(v, u)[k], 0.0);
}

TEST(Plucker, HandCrossProduct) {
    // 1x1 image with the principal point at the pixel center: the ray is +z.
    Camera c;
    c.intrinsics = {1, 1, 0.5, 0.5, 1, 1};
    c.pose.translation = Vec3(1, 0, 0);
    const auto map = plucker_rays(c, 1, 1);
    const double* r = map.at(0, 0);
    EXPECT_NEAR(r[2], 1.0, 1e-15);
    EXPECT_NEAR(r[3], 0.0, 1e-15);
    EXPECT_NEAR(r[4], -1.0, 1e-15);
    EXPECT_NEAR(r[5], 0.0, 1e-15);
}

TEST(Plucker, UnitDirectionAndOrthogonalMoment) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto map = plucker_rays(random_camera(rng), 15, 16);
        for (int v = 0; v < 15; ++v) {
            for (int u = 0; u < 16; ++u) {
                const double* r = map.at(v, u);
                const Vec3 d(r[0], r[1], r[2]), m(r[3], r[4], r[5]);
                EXPECT_NEAR(d.norm(), 1.0, 1e-6);
                EXPECT_NEAR(m.dot(d), 0.0, 1e-6);
            }
        }
    }
}

TEST(Plucker, CoincidentPixelCentersAgreeAcrossResolutions) {
    // Pixel (u, v) at 3x resolution shares its center with pixel (3u+1, 3v+1).
    std::mt19937_64 rng(2);
    const Camera c = random_camera(rng);
    const auto lo = plucker_rays(c, 5, 7);
    const auto hi = plucker_rays(c, 15, 21);
    for (int v = 0; v < 5; ++v)
        for (int u = 0; u < 7; ++u)
            for (int k = 0; k < 6; ++k) EXPECT_NEAR(lo.at(v, u)[k], hi.at(3 * v + 1, 3 * u + 1)[k], 1e-6);
}

TEST(Plucker, RejectsNonOrthonormalRotation) {
    Camera c;
    c.intrinsics = {10, 10, 4, 4, 8, 8};
    c.pose.rotation(0, 0) = 1.1;
    EXPECT_THROW(plucker_rays(c, 8, 8), ValidationError);
}

TEST(NormalizePoses, TwoCamerasOnXAxis) {
    Pose a, b;
    a.translation = Vec3(1, 0, 0);
    b.translation = Vec3(-1, 0, 0);
    const std::vector<Pose> poses{a, b};
    const auto out = normalize_poses(poses);
    EXPECT_NEAR(out.transform.scale, 1.0, 1e-15);
    EXPECT_NEAR((out.poses[0].translation - Vec3(1, 0, 0)).norm(), 0.0, 1e-12);
    EXPECT_NEAR((out.poses[1].translation - Vec3(-1, 0, 0)).norm(), 0.0, 1e-12);
}

TEST(NormalizePoses, SingleCameraIsDegenerate) {
    std::mt19937_64 rng(3);
    Pose p;
    p.rotation = random_rotation(rng);
    p.translation = Vec3(4, -2, 7);
    const std::vector<Pose> poses{p};
    const auto out = normalize_poses(poses);
    EXPECT_EQ(out.transform.scale, 1.0);
    EXPECT_LT(out.poses[0].translation.norm(), 1e-12);
    EXPECT_LT((out.poses[0].rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NormalizePoses, EmptyThrows) { EXPECT_THROW(normalize_poses({}), ValidationError); }

TEST(NormalizePoses, MaxDistanceOneAndIdempotent) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Pose> poses;
        for (int i = 0; i < 5; ++i) poses.push_back(random_camera(rng).pose);
        const auto once = normalize_poses(poses);
        double max_d = 0;
        for (const auto& p : once.poses) max_d = std::max(max_d, p.translation.norm());
        EXPECT_NEAR(max_d, 1.0, 1e-6);
        const auto twice = normalize_poses(once.poses);
        for (std::size_t i = 0; i < poses.size(); ++i) {
            EXPECT_LT((twice.poses[i].rotation - once.poses[i].rotation).cwiseAbs().maxCoeff(), 1e-6);
            EXPECT_LT((twice.poses[i].translation - once.poses[i].translation).norm(), 1e-6);
        }
    }
}

TEST(NormalizePoses, RigidTransformInvariant) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-10, 10);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Pose> poses;
        for (int i = 0; i < 4; ++i) poses.push_back(random_camera(rng).pose);
        const Mat3 r = random_rotation(rng);
        const Vec3 t(u(rng), u(rng), u(rng));
        std::vector<Pose> moved;
        for (const auto& p : poses) moved.push_back({r * p.rotation, r * p.translation + t});
        const auto a = normalize_poses(poses), b = normalize_poses(moved);
        for (std::size_t i = 0; i < poses.size(); ++i) {
            EXPECT_LT((a.poses[i].rotation - b.poses[i].rotation).cwiseAbs().maxCoeff(), 1e-5);
            EXPECT_LT((a.poses[i].translation - b.poses[i].translation).norm(), 1e-5);
        }
    }
}

TEST(Fps, CollinearPoints) {
    std::vector<Vec3> pts;
    for (int i = 0; i < 10; ++i) pts.emplace_back(i, 0, 0);
    EXPECT_EQ(farthest_point_sample(pts, 2), (std::vector<std::size_t>{0, 9}));
    EXPECT_EQ(farthest_point_sample(pts, 3), (std::vector<std::size_t>{0, 9, 4}));
}

TEST(Fps, AllIndicesUniqueAndDeterministic) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<Vec3> pts;
    for (int i = 0; i < 12; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
    const auto all = farthest_point_sample(pts, 12);
    auto sorted = all;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_EQ(all.front(), 0u);
    EXPECT_EQ(farthest_point_sample(pts, 5), farthest_point_sample(pts, 5));
}

TEST(Fps, CountOutOfRange) {
    std::vector<Vec3> pts(3, Vec3::Zero());
    EXPECT_THROW(farthest_point_sample(pts, 0), ValidationError);
    EXPECT_THROW(farthest_point_sample(pts, 4), ValidationError);
}

TEST(LookAt, ProducesValidPose) {
    const Pose p = look_at(Vec3(0, 0, -3), Vec3::Zero());
    EXPECT_NO_THROW(p.validate());
    EXPECT_NEAR((p.forward() - Vec3(0, 0, 1)).norm(), 0.0, 1e-12);
    EXPECT_NEAR((p.down() - Vec3(0, 1, 0)).norm(), 0.0, 1e-12);
}
