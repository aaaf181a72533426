#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include "regpipe/error.hpp"
#include "regpipe/point_cloud.hpp"

namespace regpipe {

/// Rotation (orthonormal, det +1) plus translation: p' = R p + T.
class RigidTransform {
 public:
  static constexpr double kTolerance = 1e-9;

  RigidTransform() : rotation_(Matrix3::Identity()), translation_(Vector3::Zero()) {}

  RigidTransform(const Matrix3& rotation, const Vector3& translation)
      : rotation_(rotation), translation_(translation) {
    if (!is_valid_rotation(rotation_) || !is_finite(translation_))
      fail(ErrorCode::InvalidRotation, "rotation is not orthonormal with det +1");
  }

  static RigidTransform identity() { return {}; }

  static RigidTransform from_matrix(const Eigen::Matrix4d& m) {
    if (m.row(3) != Eigen::RowVector4d(0, 0, 0, 1))
      fail(ErrorCode::InvalidRotation, "bottom row of homogeneous matrix must be 0 0 0 1");
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }

  static bool is_valid_rotation(const Matrix3& r) {
    if (!r.allFinite()) return false;
    return (r.transpose() * r - Matrix3::Identity()).norm() <= kTolerance &&
           std::abs(r.determinant() - 1.0) <= kTolerance;
  }

  const Matrix3& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }

  Point3 operator()(const Point3& p) const { return rotation_ * p + translation_; }

  /// (Rᵀ, −Rᵀ T)
  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation_ = rotation_.transpose();
    out.translation_ = -(out.rotation_ * translation_);
    return out;
  }

  /// (*this) ∘ other: apply `other` first.
  RigidTransform operator*(const RigidTransform& other) const {
    RigidTransform out;
    out.rotation_ = rotation_ * other.rotation_;
    out.translation_ = rotation_ * other.translation_ + translation_;
    return out;
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

 private:
  Matrix3 rotation_;
  Vector3 translation_;
};

inline RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

inline RigidTransform compose(const RigidTransform& second, const RigidTransform& first) {
  return second * first;
}

/// Rotation about a unit axis, angle in radians.
inline RigidTransform axis_angle_transform(const Vector3& axis, double angle,
                                           const Vector3& translation = Vector3::Zero()) {
  return {Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(), translation};
}

/// Points move by R p + T, normals by R; the scalar channel is copied.
inline PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t) {
  if (!RigidTransform::is_valid_rotation(t.rotation()))
    fail(ErrorCode::InvalidRotation, "apply_transform: invalid rotation");
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(t(p));
  out.scalar = cloud.scalar;
  if (cloud.has_normals()) {
    out.normals.reserve(cloud.size());
    for (const auto& n : cloud.normals) out.normals.push_back(t.rotation() * n);
  }
  return out;
}

}  // namespace regpipe
