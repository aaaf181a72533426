#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "regpipe/error.hpp"
#include "regpipe/parallel.hpp"
#include "regpipe/point_cloud.hpp"
#include "regpipe/spatial_index.hpp"

namespace regpipe {

/// Eigen-decomposition of a neighborhood scatter matrix, eigenvalues sorted
/// descending (λ1 ≥ λ2 ≥ λ3 ≥ 0).
struct LocalSurfaceStats {
  Point3 centroid = Point3::Zero();
  std::array<double, 3> eigenvalues{};
  std::array<Vector3, 3> eigenvectors{Vector3::UnitX(), Vector3::UnitY(), Vector3::UnitZ()};
  std::size_t neighbor_count = 0;

  const Vector3& normal() const { return eigenvectors[2]; }
};

/// Population covariance of the given points, decomposed.
inline LocalSurfaceStats scatter_stats(const std::vector<Point3>& pts,
                                       std::span<const std::size_t> indices,
                                       std::span<const double> weights = {}) {
  LocalSurfaceStats s;
  s.neighbor_count = indices.size();
  double wsum = 0.0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const double w = weights.empty() ? 1.0 : weights[k];
    s.centroid += w * pts[indices[k]];
    wsum += w;
  }
  s.centroid /= wsum;
  Matrix3 cov = Matrix3::Zero();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const double w = weights.empty() ? 1.0 : weights[k];
    const Vector3 d = pts[indices[k]] - s.centroid;
    cov.noalias() += w * d * d.transpose();
  }
  cov /= wsum;
  Eigen::SelfAdjointEigenSolver<Matrix3> solver(cov);
  for (int i = 0; i < 3; ++i) {
    // solver sorts ascending
    s.eigenvalues[i] = std::max(0.0, solver.eigenvalues()[2 - i]);
    s.eigenvectors[i] = solver.eigenvectors().col(2 - i);
  }
  return s;
}

/// Scatter-matrix statistics of the points within `radius` of `center`.
inline LocalSurfaceStats local_pca(const PointCloud& cloud, const SpatialIndex& index,
                                   const Point3& center, double radius) {
  if (!(radius > 0.0)) fail(ErrorCode::NonPositiveRadius, "local_pca radius must be positive");
  const auto nbrs = index.radius_neighbors(center, radius);
  if (nbrs.size() < 3) fail(ErrorCode::InsufficientNeighbors, "local_pca needs at least 3 neighbors");
  return scatter_stats(cloud.points, nbrs);
}

/// Deterministic sign: +Z up, or +X when the normal is horizontal.
inline Vector3 orient_normal(Vector3 n) {
  if (std::abs(n.z()) >= 1e-6) {
    if (n.z() < 0) n = -n;
  } else if (std::abs(n.x()) >= 1e-6) {
    if (n.x() < 0) n = -n;
  } else if (n.y() < 0) {
    n = -n;
  }
  return n;
}

/// Fills normals for the listed points only; other entries are left as they
/// are (the channel is created with zero sentinels when absent).
inline void estimate_normals_at(PointCloud& cloud, const SpatialIndex& index, double radius,
                                std::span<const std::size_t> which) {
  if (!(radius > 0.0)) fail(ErrorCode::NonPositiveRadius, "normal radius must be positive");
  if (!cloud.has_normals()) cloud.normals.assign(cloud.size(), Vector3::Zero());
  parallel_chunks(which.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> nbrs;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i = which[k];
      index.radius_search(cloud.points[i], radius, nbrs);
      if (nbrs.size() < 3) {
        cloud.normals[i] = Vector3::Zero();
        continue;
      }
      cloud.normals[i] = orient_normal(scatter_stats(cloud.points, nbrs).normal());
    }
  }, 64);
}

inline PointCloud estimate_normals(PointCloud cloud, double radius) {
  if (!(radius > 0.0)) fail(ErrorCode::NonPositiveRadius, "normal radius must be positive");
  if (cloud.empty()) return cloud;
  const SpatialIndex index(cloud);
  std::vector<std::size_t> all(cloud.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  cloud.normals.assign(cloud.size(), Vector3::Zero());
  estimate_normals_at(cloud, index, radius, all);
  return cloud;
}

/// Sphericity λ3/λ1 per point into the scalar channel; 0 when undefined.
inline PointCloud compute_sphericity(PointCloud cloud, double radius) {
  if (!(radius > 0.0)) fail(ErrorCode::NonPositiveRadius, "sphericity radius must be positive");
  cloud.scalar.assign(cloud.size(), 0.0);
  if (cloud.empty()) return cloud;
  const SpatialIndex index(cloud);
  parallel_chunks(cloud.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> nbrs;
    for (std::size_t i = begin; i < end; ++i) {
      index.radius_search(cloud.points[i], radius, nbrs);
      if (nbrs.size() < 3) continue;
      const auto s = scatter_stats(cloud.points, nbrs);
      if (s.eigenvalues[0] > 0.0)
        cloud.scalar[i] = std::clamp(s.eigenvalues[2] / s.eigenvalues[0], 0.0, 1.0);
    }
  }, 64);
  return cloud;
}

}  // namespace regpipe
