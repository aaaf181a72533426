#pragma once

#include <limits>
#include <vector>

#include <Eigen/Core>

#include "regpipe/detectors/keypoint.hpp"

namespace regpipe {

struct HarrisParams : DetectorParams {
  double k = 0.04;
  double threshold = 1e-4;
};

/// Harris response of the normal field around one point. Neighbor normals
/// are projected onto the tangent plane of the center normal and their 2×2
/// structure tensor C gives det(C) − k·trace(C)².
inline double harris_response(const PointCloud& cloud, std::size_t center,
                              const std::vector<std::size_t>& neighbors, double k) {
  const Vector3& n = cloud.normals[center];
  const Vector3 u = n.unitOrthogonal();
  const Vector3 v = n.cross(u);
  Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
  std::size_t count = 0;
  for (std::size_t j : neighbors) {
    if (!cloud.has_valid_normal(j)) continue;
    const Eigen::Vector2d a(u.dot(cloud.normals[j]), v.dot(cloud.normals[j]));
    c.noalias() += a * a.transpose();
    ++count;
  }
  if (count < 3) return -std::numeric_limits<double>::infinity();
  c /= static_cast<double>(count);
  const double trace = c.trace();
  return c.determinant() - k * trace * trace;
}

inline std::vector<Keypoint> detect_harris(const PointCloud& cloud, const HarrisParams& params) {
  params.validate();
  if (!cloud.has_normals()) fail(ErrorCode::MissingNormals, "HARRIS needs normals");
  if (cloud.empty()) return {};
  const SpatialIndex index(cloud);
  std::vector<double> response(cloud.size(), -std::numeric_limits<double>::infinity());
  std::vector<char> candidate(cloud.size(), 0);
  parallel_chunks(cloud.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> nbrs;
    for (std::size_t i = begin; i < end; ++i) {
      if (!cloud.has_valid_normal(i)) continue;
      index.radius_search(cloud.points[i], params.support_radius, nbrs);
      response[i] = harris_response(cloud, i, nbrs, params.k);
      candidate[i] = response[i] > params.threshold;
    }
  }, 64);
  return detail::suppress_non_maxima(cloud, index, response, candidate, params.non_max_radius,
                                     DetectorKind::Harris);
}

}  // namespace regpipe
