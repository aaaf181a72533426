#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <unordered_map>
#include <vector>

#include "regpipe/descriptors/feature.hpp"
#include "regpipe/detectors/keypoint.hpp"
#include "regpipe/parallel.hpp"

namespace regpipe {

/// Darboux-frame angles between two oriented points.
struct PairFeatures {
  double alpha = 0.0;  // v · n2, in [-1, 1]
  double phi = 0.0;    // u · (p2 - p1)/|p2 - p1|, in [-1, 1]
  double theta = 0.0;  // atan2(w · n2, u · n2), in [-pi, pi]
};

/// The source point of the frame is the one whose normal makes the smaller
/// angle with the connecting line. Empty when the frame is undefined.
inline std::optional<PairFeatures> pair_features(const Point3& p1, const Vector3& n1, const Point3& p2,
                                                 const Vector3& n2) {
  Vector3 d = p2 - p1;
  const double dist = d.norm();
  if (dist == 0.0) return std::nullopt;
  double a1 = n1.dot(d) / dist;
  double a2 = n2.dot(d) / dist;
  Vector3 u = n1, other = n2;
  PairFeatures f;
  if (std::acos(std::clamp(std::abs(a1), 0.0, 1.0)) > std::acos(std::clamp(std::abs(a2), 0.0, 1.0))) {
    u = n2;
    other = n1;
    d = -d;
    f.phi = -a2;
  } else {
    f.phi = a1;
  }
  Vector3 v = d.cross(u);
  const double vn = v.norm();
  if (vn == 0.0) return std::nullopt;
  v /= vn;
  const Vector3 w = u.cross(v);
  f.alpha = v.dot(other);
  f.theta = std::atan2(w.dot(other), u.dot(other));
  return f;
}

inline std::size_t histogram_bin(double value, double lo, double hi, std::size_t bins) {
  const double t = (value - lo) / (hi - lo) * static_cast<double>(bins);
  const auto b = static_cast<std::ptrdiff_t>(std::floor(t));
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1));
}

using Histogram33 = std::array<double, kFpfhLength>;

namespace detail {

/// Simplified point feature histogram of one point: three 11-bin histograms
/// (α, φ, θ), each normalized to sum 1. Empty when no pair is defined.
inline std::optional<Histogram33> spfh(const PointCloud& cloud, const SpatialIndex& index, std::size_t i,
                                       double radius, std::vector<std::size_t>& nbrs) {
  if (!cloud.has_valid_normal(i)) return std::nullopt;
  index.radius_search(cloud.points[i], radius, nbrs);
  Histogram33 h{};
  std::size_t count = 0;
  for (std::size_t j : nbrs) {
    if (j == i || !cloud.has_valid_normal(j)) continue;
    const auto f = pair_features(cloud.points[i], cloud.normals[i], cloud.points[j], cloud.normals[j]);
    if (!f) continue;
    h[histogram_bin(f->alpha, -1.0, 1.0, kFpfhBins)] += 1.0;
    h[kFpfhBins + histogram_bin(f->phi, -1.0, 1.0, kFpfhBins)] += 1.0;
    h[2 * kFpfhBins + histogram_bin(f->theta, -std::numbers::pi, std::numbers::pi, kFpfhBins)] += 1.0;
    ++count;
  }
  if (count == 0) return std::nullopt;
  for (double& v : h) v /= static_cast<double>(count);
  return h;
}

}  // namespace detail

/// Fast point feature histograms (33 values):
///   FPFH(p) = SPFH(p) + (1/k) Σ_i SPFH(p_i) / ω_i,  ω_i = |p − p_i|,
/// over the k neighbors within `radius`, then each 11-bin block normalized to
/// sum 1. Keypoints with fewer than 5 neighbors get no descriptor.
inline DescriptorList describe_fpfh(const PointCloud& cloud, const SpatialIndex& index,
                                    const std::vector<Keypoint>& keypoints, double radius = 2.0) {
  if (!(radius > 0.0)) fail(ErrorCode::NonPositiveRadius, "FPFH radius must be positive");
  if (!cloud.has_normals()) fail(ErrorCode::MissingNormals, "FPFH needs normals");
  DescriptorList out(keypoints.size());
  if (keypoints.empty()) return out;

  // Points whose SPFH is needed: keypoint anchors and their neighbors.
  std::vector<std::size_t> anchor(keypoints.size());
  std::vector<std::vector<std::size_t>> support(keypoints.size());
  std::vector<std::size_t> needed;
  std::unordered_map<std::size_t, std::size_t> slot;
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    anchor[k] = detail::anchor_point(index, keypoints[k].position);
    index.radius_search(cloud.points[anchor[k]], radius, support[k]);
    for (std::size_t j : support[k])
      if (slot.emplace(j, needed.size()).second) needed.push_back(j);
  }
  std::vector<std::optional<Histogram33>> spfh(needed.size());
  parallel_chunks(needed.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> nbrs;
    for (std::size_t s = begin; s < end; ++s) spfh[s] = detail::spfh(cloud, index, needed[s], radius, nbrs);
  }, 32);

  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    const std::size_t i = anchor[k];
    const auto& own = spfh[slot.at(i)];
    if (!own || support[k].size() < 6) continue;  // keypoint plus >= 5 neighbors
    Histogram33 acc{};
    std::size_t used = 0;
    for (std::size_t j : support[k]) {
      if (j == i) continue;
      const auto& other = spfh[slot.at(j)];
      const double dist = (cloud.points[j] - cloud.points[i]).norm();
      ++used;
      if (!other || dist == 0.0) continue;
      for (std::size_t b = 0; b < kFpfhLength; ++b) acc[b] += (*other)[b] / dist;
    }
    std::vector<double> values(kFpfhLength);
    for (std::size_t b = 0; b < kFpfhLength; ++b) values[b] = (*own)[b] + acc[b] / static_cast<double>(used);
    bool valid = true;
    for (std::size_t block = 0; block < 3; ++block) {
      double sum = 0.0;
      for (std::size_t b = 0; b < kFpfhBins; ++b) sum += values[block * kFpfhBins + b];
      if (!(sum > 0.0)) {
        valid = false;
        break;
      }
      for (std::size_t b = 0; b < kFpfhBins; ++b) values[block * kFpfhBins + b] /= sum;
    }
    if (valid) out[k] = FeatureVector(DescriptorKind::Fpfh, std::move(values), kFpfhLength);
  }
  return out;
}

}  // namespace regpipe
