#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "regpipe/descriptors/feature.hpp"
#include "regpipe/detectors/keypoint.hpp"
#include "regpipe/local_surface.hpp"
#include "regpipe/parallel.hpp"
#include "regpipe/range_image.hpp"

namespace regpipe {

struct NarfDescriptorParams {
  double support_radius = 2.0;
  std::size_t samples_per_beam = 10;

  void validate() const {
    if (!(support_radius > 0.0)) fail(ErrorCode::NonPositiveRadius, "NARF support radius must be positive");
    if (samples_per_beam < 1) fail(ErrorCode::InvalidParams, "NARF needs at least one sample per beam");
  }
};

/// Surface patch around one keypoint in its normal-aligned frame.
struct NarfPatch {
  Vector3 normal;               // towards the camera
  Vector3 u;                    // camera x projected onto the tangent plane
  std::vector<Vector3> local;   // (u, v, height) of each support point
};

namespace detail {

/// Star pattern over a normal-aligned patch. Sample j of beam b lies at
/// radius (j+1)·R/n along angle θ0 + 10°·b; its value is the highest surface
/// point within R/n (or −R when nothing is there), clipped to [−R, R]. A beam
/// scores the mean |change| between consecutive samples from the center
/// outwards, divided by 2R. θ0 is the direction of the height-weighted first
/// moment of the patch, so the beams turn with the patch and any in-plane
/// rotation gives the same values. The result is then shifted so the strongest
/// beam comes first (ties go to the smallest angle).
inline std::vector<double> star_descriptor(const std::vector<Vector3>& local, double R, std::size_t n) {
  const double cell = R / static_cast<double>(n);
  const double cell2 = cell * cell;
  auto sample = [&](double x, double y) {
    double best = -R;
    bool any = false;
    for (const auto& q : local) {
      const double dx = q.x() - x, dy = q.y() - y;
      if (dx * dx + dy * dy > cell2) continue;
      if (!any || q.z() > best) best = q.z();
      any = true;
    }
    return std::clamp(best, -R, R);
  };
  const double center = sample(0.0, 0.0);

  double mean_z = 0.0;
  for (const auto& q : local) mean_z += q.z();
  mean_z /= static_cast<double>(std::max<std::size_t>(1, local.size()));
  double mx = 0.0, my = 0.0, scale = 0.0;
  for (const auto& q : local) {
    const double dz = q.z() - mean_z;
    mx += dz * q.x();
    my += dz * q.y();
    scale += std::abs(dz) * std::hypot(q.x(), q.y());
  }
  // A patch without a preferred direction keeps the frame's own u axis.
  const double theta0 = std::hypot(mx, my) > 1e-9 * scale ? std::atan2(my, mx) : 0.0;

  std::vector<double> beams(kNarfBeams, 0.0);
  for (std::size_t b = 0; b < kNarfBeams; ++b) {
    const double ang = theta0 + 2.0 * std::numbers::pi * static_cast<double>(b) / static_cast<double>(kNarfBeams);
    const double cx = std::cos(ang), cy = std::sin(ang);
    double prev = center, acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double r = static_cast<double>(j + 1) * cell;
      const double h = sample(r * cx, r * cy);
      acc += std::abs(h - prev);
      prev = h;
    }
    beams[b] = std::clamp(acc / (static_cast<double>(n) * 2.0 * R), 0.0, 1.0);
  }
  const auto top = static_cast<std::size_t>(std::max_element(beams.begin(), beams.end()) - beams.begin());
  std::rotate(beams.begin(), beams.begin() + static_cast<std::ptrdiff_t>(top), beams.end());
  return beams;
}

}  // namespace detail

/// Points of `cloud` within R of `p`, expressed in the keypoint's local frame.
/// Empty when fewer than three neighbors or the plane fit is degenerate.
inline std::optional<NarfPatch> narf_patch(const PointCloud& cloud, const SpatialIndex& index, const Point3& p,
                                           const RangeCameraParams& camera, double R,
                                           std::vector<std::size_t>& nbrs) {
  index.radius_search(p, R, nbrs);
  if (nbrs.size() < 3) return std::nullopt;
  const auto stats = scatter_stats(cloud.points, nbrs);
  if (!(stats.eigenvalues[1] > 0.0)) return std::nullopt;
  NarfPatch patch;
  patch.normal = stats.normal();
  if (patch.normal.dot(camera.position - p) < 0.0) patch.normal = -patch.normal;
  Vector3 u = camera.orientation.col(0);
  u -= patch.normal * patch.normal.dot(u);
  if (u.norm() < 1e-6) {
    u = camera.orientation.col(1);
    u -= patch.normal * patch.normal.dot(u);
  }
  patch.u = u.normalized();
  const Vector3 v = patch.normal.cross(patch.u);
  patch.local.reserve(nbrs.size());
  for (std::size_t q : nbrs) {
    const Vector3 d = cloud.points[q] - p;
    patch.local.emplace_back(d.dot(patch.u), d.dot(v), d.dot(patch.normal));
  }
  return patch;
}

/// True when the keypoint's support disk, in pixels at its range, lies inside
/// the image.
inline bool narf_support_in_image(const RangeImage& img, const Point3& p, double R) {
  std::size_t col, row;
  if (!project_point(img.params, img.width, img.height, p, col, row)) return false;
  const double range = (p - img.params.position).norm();
  const auto win = static_cast<std::size_t>(std::ceil(R / img.footprint(range)));
  return col >= win && row >= win && col + win < img.width && row + win < img.height;
}

/// 36-value NARF descriptors over the range image's surviving points.
/// Keypoints whose support leaves the image, or whose patch has no
/// well-defined normal, get no descriptor.
inline DescriptorList describe_narf(const RangeImage& img, const PointCloud& image_cloud,
                                    const SpatialIndex& image_index, const std::vector<Keypoint>& keypoints,
                                    const NarfDescriptorParams& params = {}) {
  params.validate();
  DescriptorList out(keypoints.size());
  const double R = params.support_radius;
  parallel_chunks(keypoints.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> nbrs;
    for (std::size_t k = begin; k < end; ++k) {
      const Point3& p = keypoints[k].position;
      if (!narf_support_in_image(img, p, R)) continue;
      const auto patch = narf_patch(image_cloud, image_index, p, img.params, R, nbrs);
      if (!patch) continue;
      out[k] = FeatureVector(DescriptorKind::Narf, detail::star_descriptor(patch->local, R, params.samples_per_beam),
                             kNarfBeams);
    }
  }, 4);
  return out;
}

inline DescriptorList describe_narf(const RangeImage& img, const std::vector<Keypoint>& keypoints,
                                    const NarfDescriptorParams& params = {}) {
  params.validate();
  const PointCloud cloud = to_point_cloud(img);
  if (cloud.empty()) return DescriptorList(keypoints.size());
  const SpatialIndex index(cloud);
  return describe_narf(img, cloud, index, keypoints, params);
}

}  // namespace regpipe
