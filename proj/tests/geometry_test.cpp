#include <gtest/gtest.h>

#include <random>

#include "cadkit/geometry.hpp"

using namespace cadkit;

namespace {

CameraFrame simple_camera() {
  CameraFrame cam;
  cam.intrinsics = {100, 100, 50, 50};
  cam.image_size = {100, 100};
  return cam;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

}  // namespace

TEST(ApplyPose, Examples) {
  Pose9DoF identity;
  EXPECT_EQ(apply_pose(identity, Vec3(0.3, -0.1, 2)), Vec3(0.3, -0.1, 2));

  Pose9DoF scaled;
  scaled.scale = Vec3(2, 2, 2);
  scaled.translation = Vec3(1, 0, 0);
  EXPECT_EQ(apply_pose(scaled, Vec3(1, 1, 1)), Vec3(3, 2, 2));

  Pose9DoF rotated;
  rotated.rotation = rotation_about(Vec3::UnitZ(), kPi / 2);
  rotated.translation = Vec3(0, 0, 1);
  EXPECT_TRUE(apply_pose(rotated, Vec3(1, 0, 0)).isApprox(Vec3(0, 1, 1), 1e-12));
}

TEST(ApplyPose, ScaleIsAppliedInModelFrameBeforeRotation) {
  Pose9DoF pose;
  pose.rotation = rotation_about(Vec3::UnitZ(), kPi / 2);
  pose.scale = Vec3(3, 1, 1);
  // x is stretched first, then rotated onto y.
  EXPECT_TRUE(apply_pose(pose, Vec3(1, 0, 0)).isApprox(Vec3(0, 3, 0), 1e-12));
}

TEST(ApplyPose, OriginMapsToTranslation) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 20; ++i) {
    Pose9DoF pose;
    pose.rotation = random_rotation(rng);
    pose.translation = Vec3(u(rng), u(rng), u(rng));
    pose.scale = Vec3(1 + std::abs(u(rng)), 0.5, 2);
    EXPECT_EQ(apply_pose(pose, Vec3::Zero()), pose.translation);
  }
}

TEST(ProjectPoint, Examples) {
  const auto cam = simple_camera();
  EXPECT_EQ(*project_point(cam, Vec3(0, 0, 1)), Vec2(50, 50));
  EXPECT_EQ(*project_point(cam, Vec3(1, 1, 2)), Vec2(100, 100));
  EXPECT_FALSE(project_point(cam, Vec3(0, 0, -1)).has_value());
  EXPECT_FALSE(project_point(cam, Vec3(1, 0, 0)).has_value());
}

TEST(CameraDepth, Examples) {
  auto cam = simple_camera();
  EXPECT_EQ(camera_depth(cam, Vec3(0, 0, 3)), 3);
  EXPECT_EQ(camera_depth(cam, Vec3(5, 5, -2)), -2);
  cam.translation = Vec3(0, 0, 1);
  EXPECT_EQ(camera_depth(cam, Vec3(0, 0, 1)), 2);
}

TEST(ProjectPoint, InvariantToSimultaneousRigidRebasing) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    auto cam = look_at(Vec3(u(rng), 0.5 + u(rng), -4), Vec3::Zero(), Vec3::UnitY(), {500, 500, 400, 300},
                       {800, 600});
    Pose9DoF pose;
    pose.rotation = random_rotation(rng);
    pose.translation = Vec3(u(rng), u(rng), u(rng)) * 0.5;
    pose.scale = Vec3(1 + 0.5 * u(rng), 1 + 0.5 * u(rng), 1 + 0.5 * u(rng));
    const Vec3 p(u(rng), u(rng), u(rng));

    // World re-based by x' = A x + b.
    const Mat3 a = random_rotation(rng);
    const Vec3 b(3 * u(rng), 3 * u(rng), 3 * u(rng));
    Pose9DoF pose2 = pose;
    pose2.rotation = a * pose.rotation;
    pose2.translation = a * pose.translation + b;
    CameraFrame cam2 = cam;
    cam2.rotation = cam.rotation * a.transpose();
    cam2.translation = cam.translation - cam2.rotation * b;

    const auto px1 = project_point(cam, apply_pose(pose, p));
    const auto px2 = project_point(cam2, apply_pose(pose2, p));
    ASSERT_EQ(px1.has_value(), px2.has_value());
    if (px1) EXPECT_LT((*px1 - *px2).norm(), 1e-6);
  }
}

TEST(LookAt, ProducesValidCameraWithImageYDown) {
  const auto cam = look_at(Vec3(0, 1, -5), Vec3(0, 1, 0), Vec3::UnitY(), {500, 500, 400, 300}, {800, 600});
  EXPECT_TRUE(is_valid(cam));
  const auto above = project_point(cam, Vec3(0, 2, 0));
  ASSERT_TRUE(above);
  EXPECT_LT(above->y(), 300);
}

TEST(FitPlane, ExactPlane) {
  std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  const auto fit = fit_plane(pts);
  EXPECT_TRUE(fit.is_coplanar);
  EXPECT_FALSE(fit.plane.is_degenerate);
  EXPECT_NEAR(std::abs(fit.plane.normal.z()), 1.0, 1e-12);
  EXPECT_NEAR(fit.plane.normal.norm(), 1.0, 1e-9);
}

TEST(FitPlane, TetrahedronIsNotCoplanar) {
  std::vector<Vec3> pts{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  EXPECT_FALSE(fit_plane(pts, 0.01).is_coplanar);
}

TEST(FitPlane, ThreeNonCollinearPointsAreCoplanar) {
  std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {0, 0, 1}};
  EXPECT_TRUE(fit_plane(pts, 0.0).is_coplanar);
}

TEST(FitPlane, NoisyTiltedPlane) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-2, 2);
  std::normal_distribution<double> noise(0, 1e-4);
  const Vec3 n = Vec3(1, 1, 1).normalized();
  std::vector<Vec3> pts;
  for (int i = 0; i < 20; ++i) {
    const double x = u(rng), y = u(rng);
    pts.emplace_back(x, y, 1 - x - y);
    pts.back() += n * noise(rng);
  }
  const auto fit = fit_plane(pts, 0.01);
  EXPECT_TRUE(fit.is_coplanar);
  // Generating plane is the oracle; noise is 1e-4 so the normal is within ~1e-4 rad.
  EXPECT_GT(std::abs(fit.plane.normal.dot(n)), 1 - 1e-6);
  EXPECT_NEAR(fit.plane.rms_residual, 1e-4, 6e-5);
}

TEST(FitPlane, CollinearIsDegenerate) {
  std::vector<Vec3> pts{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
  const auto fit = fit_plane(pts);
  EXPECT_TRUE(fit.plane.is_degenerate);
  EXPECT_FALSE(fit.is_coplanar);
  std::vector<Vec3> same(5, Vec3(1, 2, 3));
  EXPECT_TRUE(fit_plane(same).plane.is_degenerate);
}

TEST(FitPlane, TooFewPointsThrows) {
  std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(fit_plane(pts), std::invalid_argument);
}

TEST(FitPlane, NormalInvariantUnderRigidTransform) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Vec3> pts;
    for (int i = 0; i < 8; ++i) pts.emplace_back(u(rng), u(rng), 0.1 * u(rng));
    const Mat3 r = random_rotation(rng);
    const Vec3 t(u(rng), u(rng), u(rng));
    std::vector<Vec3> moved;
    for (const auto& p : pts) moved.push_back(r * p + t);
    const auto a = fit_plane(pts);
    const auto b = fit_plane(moved);
    EXPECT_NEAR(std::abs((r * a.plane.normal).dot(b.plane.normal)), 1.0, 1e-9);
    EXPECT_EQ(a.is_coplanar, b.is_coplanar);
  }
}
