#pragma once

#include <span>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "regpipe/error.hpp"
#include "regpipe/point_cloud.hpp"
#include "regpipe/rigid_transform.hpp"

namespace regpipe {

namespace detail {

struct CenteredPairs {
  Point3 src_centroid = Point3::Zero();
  Point3 dst_centroid = Point3::Zero();
  Matrix3 cross = Matrix3::Zero();  // Σ (s - s̄)(d - d̄)ᵀ
};

inline CenteredPairs center_pairs(std::span<const Point3> src, std::span<const Point3> dst) {
  if (src.size() != dst.size()) fail(ErrorCode::TooFewPairs, "source and destination lengths differ");
  if (src.size() < 3) fail(ErrorCode::TooFewPairs, "need at least 3 point pairs");
  CenteredPairs c;
  for (std::size_t i = 0; i < src.size(); ++i) {
    c.src_centroid += src[i];
    c.dst_centroid += dst[i];
  }
  const double n = static_cast<double>(src.size());
  c.src_centroid /= n;
  c.dst_centroid /= n;

  Matrix3 scatter = Matrix3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vector3 s = src[i] - c.src_centroid;
    const Vector3 d = dst[i] - c.dst_centroid;
    c.cross.noalias() += s * d.transpose();
    scatter.noalias() += s * s.transpose();
  }
  // Collinear (or coincident) sources leave the rotation about the line free.
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Matrix3>(scatter, Eigen::EigenvaluesOnly)
                                 .eigenvalues();
  if (!(ev[2] > 0.0) || ev[1] < 1e-12 * ev[2])
    fail(ErrorCode::DegenerateConfiguration, "source points are collinear");
  return c;
}

}  // namespace detail

/// Least-squares rigid transform mapping src onto dst via SVD of the 3×3
/// cross-covariance, with reflection correction.
inline RigidTransform estimate_rigid_svd(std::span<const Point3> src, std::span<const Point3> dst) {
  const auto c = detail::center_pairs(src, dst);
  Eigen::JacobiSVD<Matrix3> svd(c.cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix3& u = svd.matrixU();
  const Matrix3& v = svd.matrixV();
  Matrix3 d = Matrix3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  Matrix3 r = v * d * u.transpose();
  // Re-orthonormalize to absorb rounding before the invariant check.
  Eigen::JacobiSVD<Matrix3> polish(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  r = polish.matrixU() * polish.matrixV().transpose();
  return {r, c.dst_centroid - r * c.src_centroid};
}

/// Closed-form absolute orientation with unit quaternions: the rotation is
/// the eigenvector of the largest eigenvalue of the symmetric 4×4 matrix
/// built from the cross-covariance. No scale is estimated.
inline RigidTransform estimate_rigid_horn(std::span<const Point3> src, std::span<const Point3> dst) {
  const auto c = detail::center_pairs(src, dst);
  const Matrix3& s = c.cross;
  const double sxx = s(0, 0), sxy = s(0, 1), sxz = s(0, 2);
  const double syx = s(1, 0), syy = s(1, 1), syz = s(1, 2);
  const double szx = s(2, 0), szy = s(2, 1), szz = s(2, 2);

  Eigen::Matrix4d n;
  n << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
       syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
       szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
       sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> solver(n);
  const Eigen::Vector4d q = solver.eigenvectors().col(3).normalized();
  const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  Matrix3 r = quat.toRotationMatrix();
  return {r, c.dst_centroid - r * c.src_centroid};
}

inline RigidTransform estimate_rigid_svd(const std::vector<Point3>& src, const std::vector<Point3>& dst) {
  return estimate_rigid_svd(std::span<const Point3>(src), std::span<const Point3>(dst));
}

inline RigidTransform estimate_rigid_horn(const std::vector<Point3>& src, const std::vector<Point3>& dst) {
  return estimate_rigid_horn(std::span<const Point3>(src), std::span<const Point3>(dst));
}

}  // namespace regpipe
