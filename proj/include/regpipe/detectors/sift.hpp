#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "regpipe/detectors/keypoint.hpp"

namespace regpipe {

struct SiftParams : DetectorParams {
  double min_scale = 0.0;  // 0: median nearest-neighbor spacing
  int n_octaves = 4;
  int scales_per_octave = 8;
  double min_contrast = 0.2;

  void validate() const {
    DetectorParams::validate();
    if (min_scale < 0.0 || n_octaves < 1 || scales_per_octave < 1)
      fail(ErrorCode::NonPositiveScale, "SIFT scale parameters must be positive");
  }
};

namespace detail {

/// Greedy Poisson-disk thinning in index order; depends only on distances,
/// so the selection commutes with rigid motions.
inline std::vector<std::size_t> thin_points(const std::vector<Point3>& pts, double radius) {
  const SpatialIndex index(pts);
  std::vector<char> removed(pts.size(), 0);
  std::vector<std::size_t> kept, nbrs;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(i);
    index.radius_search(pts[i], radius, nbrs);
    for (std::size_t j : nbrs)
      if (j > i) removed[j] = 1;
  }
  return kept;
}

}  // namespace detail

/// Difference-of-Gaussians extrema of the scalar channel (sphericity in the
/// pipeline). Scales follow min_scale·2^(o + s/S); each octave works on a
/// thinned copy of the cloud. DoG values are divided by (2^(1/S) − 1) so the
/// contrast threshold does not depend on the number of scales per octave.
inline std::vector<Keypoint> detect_sift(const PointCloud& cloud, const SiftParams& params) {
  params.validate();
  if (!cloud.has_scalar()) fail(ErrorCode::MissingScalar, "SIFT needs a scalar channel");
  for (double v : cloud.scalar)
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::MissingScalar, "SIFT scalar must lie in [0, 1]");
  if (cloud.size() < 2) return {};

  const SpatialIndex full_index(cloud);
  double min_scale = params.min_scale;
  if (min_scale == 0.0) min_scale = median_spacing(full_index);
  if (!(min_scale > 0.0)) fail(ErrorCode::NonPositiveScale, "SIFT min_scale must be positive");

  const int s_count = params.scales_per_octave;
  const int levels = s_count + 3;
  const double k = std::pow(2.0, 1.0 / s_count);

  struct Extremum {
    std::size_t point;
    double dog;
    double scale;
  };
  std::vector<Extremum> extrema;

  for (int o = 0; o < params.n_octaves; ++o) {
    const double base = min_scale * std::pow(2.0, o);
    const auto samples = detail::thin_points(cloud.points, 0.5 * base);
    std::vector<Point3> pts;
    pts.reserve(samples.size());
    for (auto i : samples) pts.push_back(cloud.points[i]);
    const SpatialIndex index(pts);

    // Sample values: mean scalar of the original points each sample stands for.
    std::vector<double> value(pts.size());
    parallel_chunks(pts.size(), [&](std::size_t begin, std::size_t end) {
      std::vector<std::size_t> nbrs;
      for (std::size_t i = begin; i < end; ++i) {
        full_index.radius_search(pts[i], 0.5 * base, nbrs);
        double sum = 0.0;
        for (auto j : nbrs) sum += cloud.scalar[j];
        value[i] = sum / static_cast<double>(nbrs.size());
      }
    }, 64);

    std::vector<double> sigma(levels);
    for (int s = 0; s < levels; ++s) sigma[s] = base * std::pow(2.0, static_cast<double>(s) / s_count);

    std::vector<std::vector<double>> smoothed(levels, std::vector<double>(pts.size(), 0.0));
    parallel_chunks(pts.size(), [&](std::size_t begin, std::size_t end) {
      std::vector<std::size_t> nbrs;
      std::vector<double> d2;
      for (std::size_t i = begin; i < end; ++i) {
        index.radius_search(pts[i], 3.0 * sigma[levels - 1], nbrs);
        d2.resize(nbrs.size());
        for (std::size_t a = 0; a < nbrs.size(); ++a) d2[a] = (pts[nbrs[a]] - pts[i]).squaredNorm();
        for (int s = 0; s < levels; ++s) {
          const double cut2 = 9.0 * sigma[s] * sigma[s];
          const double inv = -0.5 / (sigma[s] * sigma[s]);
          double num = 0.0, den = 0.0;
          for (std::size_t a = 0; a < nbrs.size(); ++a) {
            if (d2[a] > cut2) continue;
            const double g = std::exp(d2[a] * inv);
            num += g * value[nbrs[a]];
            den += g;
          }
          smoothed[s][i] = num / den;
        }
      }
    }, 16);

    const int dogs = levels - 1;
    std::vector<std::vector<double>> dog(dogs, std::vector<double>(pts.size()));
    for (int s = 0; s < dogs; ++s)
      for (std::size_t i = 0; i < pts.size(); ++i)
        dog[s][i] = (smoothed[s + 1][i] - smoothed[s][i]) / (k - 1.0);

    std::vector<std::vector<Extremum>> found(pts.size());
    parallel_chunks(pts.size(), [&](std::size_t begin, std::size_t end) {
      std::vector<std::size_t> nbrs;
      for (std::size_t i = begin; i < end; ++i) {
        for (int s = 1; s < dogs - 1; ++s) {
          const double v = dog[s][i];
          if (v == 0.0) continue;
          index.radius_search(pts[i], sigma[s], nbrs);
          bool is_max = true, is_min = true;
          for (int t = s - 1; t <= s + 1 && (is_max || is_min); ++t) {
            for (std::size_t j : nbrs) {
              if (j == i && t == s) continue;
              const double w = dog[t][j];
              if (w >= v) is_max = false;
              if (w <= v) is_min = false;
              if (!is_max && !is_min) break;
            }
          }
          if (is_max || is_min) found[i].push_back({samples[i], v, sigma[s]});
        }
      }
    }, 16);
    for (auto& f : found) extrema.insert(extrema.end(), f.begin(), f.end());
  }

  // Non-maximum suppression over all extrema by |DoG|, then the contrast cut.
  std::sort(extrema.begin(), extrema.end(), [](const Extremum& a, const Extremum& b) {
    const double fa = std::abs(a.dog), fb = std::abs(b.dog);
    if (fa != fb) return fa > fb;
    if (a.point != b.point) return a.point < b.point;
    return a.scale < b.scale;
  });
  std::vector<Keypoint> out;
  std::vector<char> dropped(extrema.size(), 0);
  std::vector<Point3> ext_pts;
  ext_pts.reserve(extrema.size());
  for (const auto& e : extrema) ext_pts.push_back(cloud.points[e.point]);
  if (extrema.empty()) return out;
  const SpatialIndex ext_index(ext_pts);
  std::vector<std::size_t> nbrs;
  for (std::size_t a = 0; a < extrema.size(); ++a) {
    if (dropped[a]) continue;
    ext_index.radius_search(ext_pts[a], params.non_max_radius, nbrs);
    for (auto b : nbrs)
      if (b > a) dropped[b] = 1;
    const auto& e = extrema[a];
    if (std::abs(e.dog) >= params.min_contrast)
      out.push_back({cloud.points[e.point], e.point, std::abs(e.dog), DetectorKind::Sift, e.scale});
  }
  std::sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) {
    return *a.source_index < *b.source_index;
  });
  return out;
}

}  // namespace regpipe
