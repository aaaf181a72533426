#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "regpipe/descriptors/feature.hpp"
#include "regpipe/detectors/keypoint.hpp"
#include "regpipe/parallel.hpp"

namespace regpipe {

struct SpinParams {
  double support_radius = 2.0;
  std::size_t radial_bins = 8;
  std::size_t elevation_bins = 16;

  std::size_t length() const { return radial_bins * elevation_bins; }
  void validate() const {
    if (!(support_radius > 0.0)) fail(ErrorCode::NonPositiveRadius, "spin image radius must be positive");
    if (radial_bins < 2 || elevation_bins < 2) fail(ErrorCode::InvalidParams, "spin image needs at least 2x2 bins");
  }
};

/// Spin image of one oriented point: neighbors within the support radius map
/// to (α, β) = (distance from the normal line, signed height along the
/// normal), accumulated with bilinear weights into a radial × elevation grid
/// over [0, R] × [−R, R], flattened row by row and normalized to sum 1.
inline std::optional<std::vector<double>> spin_image(const PointCloud& cloud, const SpatialIndex& index,
                                                     const Point3& p, const Vector3& n, const SpinParams& params,
                                                     std::vector<std::size_t>& nbrs) {
  const double R = params.support_radius;
  const auto nr = static_cast<std::ptrdiff_t>(params.radial_bins);
  const auto ne = static_cast<std::ptrdiff_t>(params.elevation_bins);
  const double cell_a = R / static_cast<double>(nr);
  const double cell_b = 2.0 * R / static_cast<double>(ne);
  std::vector<double> grid(params.length(), 0.0);
  index.radius_search(p, R, nbrs);
  std::size_t used = 0;
  auto add = [&](std::ptrdiff_t i, std::ptrdiff_t j, double w) {
    if (w <= 0.0 || i < 0 || j < 0 || i >= nr || j >= ne) return;
    grid[static_cast<std::size_t>(i * ne + j)] += w;
  };
  for (std::size_t q : nbrs) {
    const Vector3 d = cloud.points[q] - p;
    const double d2 = d.squaredNorm();
    if (d2 < 1e-24) continue;
    const double beta = n.dot(d);
    const double alpha = std::sqrt(std::max(0.0, d2 - beta * beta));
    const double u = alpha / cell_a - 0.5;
    const double v = (beta + R) / cell_b - 0.5;
    const double fu = std::floor(u), fv = std::floor(v);
    const auto i0 = static_cast<std::ptrdiff_t>(fu), j0 = static_cast<std::ptrdiff_t>(fv);
    const double au = u - fu, av = v - fv;
    add(i0, j0, (1.0 - au) * (1.0 - av));
    add(i0 + 1, j0, au * (1.0 - av));
    add(i0, j0 + 1, (1.0 - au) * av);
    add(i0 + 1, j0 + 1, au * av);
    ++used;
  }
  double sum = 0.0;
  for (double g : grid) sum += g;
  if (used == 0 || !(sum > 0.0)) return std::nullopt;
  for (double& g : grid) g /= sum;
  return grid;
}

/// Spin images at keypoints; keypoints without a valid normal or without
/// neighbors get no descriptor.
inline DescriptorList describe_spin(const PointCloud& cloud, const SpatialIndex& index,
                                    const std::vector<Keypoint>& keypoints, const SpinParams& params = {}) {
  params.validate();
  if (!cloud.has_normals()) fail(ErrorCode::MissingNormals, "spin images need normals");
  DescriptorList out(keypoints.size());
  parallel_chunks(keypoints.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> nbrs;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i = detail::anchor_point(index, keypoints[k].position);
      if (!cloud.has_valid_normal(i)) continue;
      auto grid = spin_image(cloud, index, keypoints[k].position, cloud.normals[i], params, nbrs);
      if (grid) out[k] = FeatureVector(DescriptorKind::Spin, std::move(*grid), params.length());
    }
  }, 8);
  return out;
}

}  // namespace regpipe
