#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cadkit/errors.hpp"

namespace cadkit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

struct ImageSize {
  int width = 1;
  int height = 1;
};

/// Pinhole camera for one video frame. Extrinsics map world to camera: p_c = rotation * p_w + translation.
/// Camera looks along +z, pixel origin is the top-left corner.
struct CameraFrame {
  std::int64_t frame_id = 0;
  Intrinsics intrinsics;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  ImageSize image_size;
  std::int64_t timestamp_us = 0;

  Vec3 to_camera(const Vec3& p_world) const { return rotation * p_world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }
};

/// 9-DoF placement of a model: world = rotation * (scale ⊙ p) + translation.
struct Pose9DoF {
  Vec3 translation = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 scale = Vec3::Ones();
};

inline bool is_rotation(const Mat3& r, double tol = 1e-6) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

inline bool is_valid(const CameraFrame& cam) {
  return is_rotation(cam.rotation) && cam.intrinsics.fx > 0 && cam.intrinsics.fy > 0 &&
         cam.image_size.width > 0 && cam.image_size.height > 0;
}

inline bool is_valid(const Pose9DoF& pose) {
  return is_rotation(pose.rotation) && (pose.scale.array() > 0).all() && pose.translation.allFinite();
}

inline Vec3 apply_pose(const Pose9DoF& pose, const Vec3& p) {
  return pose.rotation * pose.scale.cwiseProduct(p) + pose.translation;
}

/// Signed depth of a world point along the camera's optical axis.
inline double camera_depth(const CameraFrame& cam, const Vec3& p_world) {
  return cam.rotation.row(2).dot(p_world) + cam.translation.z();
}

/// Pixel coordinates of a world point; std::nullopt when the point is not in front of the camera.
/// The pixel may fall outside the image.
inline std::optional<Vec2> project_point(const CameraFrame& cam, const Vec3& p_world) {
  const Vec3 pc = cam.to_camera(p_world);
  if (pc.z() <= 0.0) return std::nullopt;
  const auto& k = cam.intrinsics;
  return Vec2(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
}

inline bool inside_image(const CameraFrame& cam, const Vec2& px) {
  return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < cam.image_size.width &&
         px.y() < cam.image_size.height;
}

inline Mat3 rotation_about(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

/// Geodesic angle between two rotations, in degrees.
inline double rotation_angle_deg(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

/// Camera at `eye` looking at `target`; image y points along -up.
inline CameraFrame look_at(const Vec3& eye, const Vec3& target, const Vec3& up, Intrinsics k,
                           ImageSize size, std::int64_t frame_id = 0) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = (-up).cross(z).normalized();
  const Vec3 y = z.cross(x);
  CameraFrame cam;
  cam.frame_id = frame_id;
  cam.intrinsics = k;
  cam.image_size = size;
  cam.rotation.row(0) = x;
  cam.rotation.row(1) = y;
  cam.rotation.row(2) = z;
  cam.translation = -cam.rotation * eye;
  return cam;
}

// ---------------------------------------------------------------------------
// Plane fitting

struct PlaneFit {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;  ///< normal · x = offset on the plane
  double rms_residual = 0.0;
  bool is_degenerate = false;
};

struct PlaneFitResult {
  PlaneFit plane;
  bool is_coplanar = false;
  /// Singular values of the centered point matrix, descending.
  Vec3 singular_values = Vec3::Zero();
};

inline constexpr double kDefaultCoplanarTolerance = 0.02;

/// Least-squares plane through `points`. Coplanar when the smallest singular value of the
/// centered points is at most `rel_tol` times the largest. Collinear or coincident input
/// yields `plane.is_degenerate` with `is_coplanar == false`.
inline PlaneFitResult fit_plane(std::span<const Vec3> points, double rel_tol = kDefaultCoplanarTolerance) {
  if (points.size() < 3) throw std::invalid_argument("fit_plane needs at least 3 points");

  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());

  Eigen::MatrixXd centered(points.size(), 3);
  for (std::size_t i = 0; i < points.size(); ++i) centered.row(i) = (points[i] - centroid).transpose();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Vec3 sv = svd.singularValues();

  PlaneFitResult result;
  result.singular_values = sv;
  const double scale = std::max(1.0, centroid.norm());
  if (sv(0) <= 1e-12 * scale || sv(1) <= 1e-9 * sv(0)) {
    result.plane.is_degenerate = true;
    result.plane.offset = result.plane.normal.dot(centroid);
    return result;
  }

  Vec3 normal = svd.matrixV().col(2).normalized();
  // Deterministic sign: largest-magnitude component positive.
  Eigen::Index idx = 0;
  normal.cwiseAbs().maxCoeff(&idx);
  if (normal(idx) < 0) normal = -normal;

  result.plane.normal = normal;
  result.plane.offset = normal.dot(centroid);
  result.plane.rms_residual = sv(2) / std::sqrt(static_cast<double>(points.size()));
  result.is_coplanar = points.size() == 3 || sv(2) <= rel_tol * sv(0);
  return result;
}

}  // namespace cadkit
