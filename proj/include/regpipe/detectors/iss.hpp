#pragma once

#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>

#include "regpipe/detectors/keypoint.hpp"

namespace regpipe {

struct IssParams : DetectorParams {
  double gamma21 = 0.975;
  double gamma32 = 0.975;
  std::size_t min_neighbors = 5;

  void validate() const {
    DetectorParams::validate();
    if (!(gamma21 > 0.0 && gamma21 < 1.0 && gamma32 > 0.0 && gamma32 < 1.0))
      fail(ErrorCode::InvalidGamma, "ISS gammas must lie in (0, 1)");
  }
};

/// Intrinsic shape signature keypoints. Each point's scatter matrix is taken
/// about the point itself with neighbors weighted by the inverse of their own
/// neighbor count; saliency is the smallest eigenvalue.
inline std::vector<Keypoint> detect_iss(const PointCloud& cloud, const IssParams& params) {
  params.validate();
  if (cloud.empty()) return {};
  const SpatialIndex index(cloud);
  const double r = params.support_radius;

  std::vector<double> density_weight(cloud.size(), 0.0);
  parallel_chunks(cloud.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> nbrs;
    for (std::size_t i = begin; i < end; ++i) {
      index.radius_search(cloud.points[i], r, nbrs);
      density_weight[i] = 1.0 / static_cast<double>(nbrs.size());
    }
  }, 64);

  std::vector<double> saliency(cloud.size(), -std::numeric_limits<double>::infinity());
  std::vector<char> candidate(cloud.size(), 0);
  parallel_chunks(cloud.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> nbrs;
    for (std::size_t i = begin; i < end; ++i) {
      index.radius_search(cloud.points[i], r, nbrs);
      if (nbrs.size() < params.min_neighbors) continue;
      Matrix3 cov = Matrix3::Zero();
      double wsum = 0.0;
      for (std::size_t j : nbrs) {
        const Vector3 d = cloud.points[j] - cloud.points[i];
        cov.noalias() += density_weight[j] * d * d.transpose();
        wsum += density_weight[j];
      }
      cov /= wsum;
      const Eigen::Vector3d ev =
          Eigen::SelfAdjointEigenSolver<Matrix3>(cov, Eigen::EigenvaluesOnly).eigenvalues();
      const double l1 = std::max(ev[2], 0.0), l2 = std::max(ev[1], 0.0), l3 = std::max(ev[0], 0.0);
      saliency[i] = l3;
      // Noiseless planes leave λ3 at rounding level; those are not salient.
      if (!(l1 > 0.0 && l2 > 0.0) || l3 <= 1e-12 * l1) continue;
      candidate[i] = (l2 / l1 < params.gamma21) && (l3 / l2 < params.gamma32);
    }
  }, 64);
  return detail::suppress_non_maxima(cloud, index, saliency, candidate, params.non_max_radius,
                                     DetectorKind::Iss);
}

}  // namespace regpipe
