#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "regpipe/error.hpp"

namespace regpipe {

using Point3 = Eigen::Vector3d;
using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

inline bool is_finite(const Vector3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

/// Points plus two optional per-point channels. A channel is either empty or
/// holds exactly one entry per point. A zero normal marks a point whose
/// neighborhood was too small to estimate one.
struct PointCloud {
  std::vector<Point3> points;
  std::vector<double> scalar;
  std::vector<Vector3> normals;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_scalar() const { return !scalar.empty(); }
  bool has_normals() const { return !normals.empty(); }

  bool has_valid_normal(std::size_t i) const {
    return has_normals() && normals[i].squaredNorm() > 0.5;
  }

  void push_back(const Point3& p) { points.push_back(p); }

  /// Throws InvalidCloud when any channel invariant is broken.
  void validate() const {
    if (has_scalar() && scalar.size() != points.size())
      fail(ErrorCode::InvalidCloud, "scalar channel length differs from point count");
    if (has_normals() && normals.size() != points.size())
      fail(ErrorCode::InvalidCloud, "normal channel length differs from point count");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!is_finite(points[i])) fail(ErrorCode::InvalidCloud, "non-finite point " + std::to_string(i));
      if (has_scalar() && !std::isfinite(scalar[i]))
        fail(ErrorCode::InvalidCloud, "non-finite scalar " + std::to_string(i));
      if (has_normals()) {
        const double n = normals[i].norm();
        if (n != 0.0 && std::abs(n - 1.0) > 1e-6)
          fail(ErrorCode::InvalidCloud, "normal " + std::to_string(i) + " is not unit length");
      }
    }
  }

  /// Copy of the selected points with their channels.
  PointCloud subset(const std::vector<std::size_t>& indices) const {
    PointCloud out;
    out.points.reserve(indices.size());
    if (has_scalar()) out.scalar.reserve(indices.size());
    if (has_normals()) out.normals.reserve(indices.size());
    for (std::size_t i : indices) {
      out.points.push_back(points[i]);
      if (has_scalar()) out.scalar.push_back(scalar[i]);
      if (has_normals()) out.normals.push_back(normals[i]);
    }
    return out;
  }
};

struct BoundingBox {
  Point3 min = Point3::Constant(std::numeric_limits<double>::infinity());
  Point3 max = Point3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Point3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  Point3 center() const { return 0.5 * (min + max); }
  Vector3 extent() const { return max - min; }
  bool contains(const Point3& p, double margin = 0.0) const {
    return (p.array() >= min.array() - margin).all() && (p.array() <= max.array() + margin).all();
  }
};

inline BoundingBox bounding_box(const PointCloud& cloud) {
  BoundingBox box;
  for (const auto& p : cloud.points) box.extend(p);
  return box;
}

}  // namespace regpipe
