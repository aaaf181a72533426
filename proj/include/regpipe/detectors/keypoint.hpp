#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "regpipe/error.hpp"
#include "regpipe/parallel.hpp"
#include "regpipe/point_cloud.hpp"
#include "regpipe/spatial_index.hpp"

namespace regpipe {

enum class DetectorKind { Harris, Iss, Sift, Narf };

inline constexpr DetectorKind kAllDetectors[] = {DetectorKind::Iss, DetectorKind::Harris,
                                                 DetectorKind::Sift, DetectorKind::Narf};

constexpr std::string_view to_string(DetectorKind d) {
  switch (d) {
    case DetectorKind::Harris: return "HARRIS";
    case DetectorKind::Iss: return "ISS";
    case DetectorKind::Sift: return "SIFT";
    case DetectorKind::Narf: return "NARF";
  }
  return "?";
}

inline DetectorKind parse_detector(std::string_view s) {
  for (auto d : kAllDetectors)
    if (to_string(d) == s) return d;
  fail(ErrorCode::ConfigError, "unknown detector '" + std::string(s) + "'");
}

struct Keypoint {
  Point3 position = Point3::Zero();
  std::optional<std::size_t> source_index;
  double saliency = 0.0;
  DetectorKind detector = DetectorKind::Harris;
  double scale = 0.0;  // SIFT only
};

struct DetectorParams {
  double support_radius = 2.0;
  double non_max_radius = 1.0;

  void validate() const {
    if (!(support_radius > 0.0) || !(non_max_radius > 0.0))
      fail(ErrorCode::NonPositiveRadius, "detector radii must be positive");
  }
};

namespace detail {

/// True when no point within `radius` has a strictly better (score, lower
/// index) pair. Points with -inf score never win.
inline bool is_local_max(const SpatialIndex& index, const std::vector<double>& score, std::size_t i,
                         double radius, std::vector<std::size_t>& scratch) {
  index.radius_search(index.point(i), radius, scratch);
  for (std::size_t j : scratch) {
    if (j == i) continue;
    if (score[j] > score[i] || (score[j] == score[i] && j < i)) return false;
  }
  return true;
}

/// Keypoints at candidates that are local maxima of the full score field.
inline std::vector<Keypoint> suppress_non_maxima(const PointCloud& cloud, const SpatialIndex& index,
                                                 const std::vector<double>& score,
                                                 const std::vector<char>& candidate, double radius,
                                                 DetectorKind kind) {
  std::vector<char> keep(cloud.size(), 0);
  parallel_chunks(cloud.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> scratch;
    for (std::size_t i = begin; i < end; ++i)
      if (candidate[i]) keep[i] = is_local_max(index, score, i, radius, scratch);
  });
  std::vector<Keypoint> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!keep[i]) continue;
    out.push_back({cloud.points[i], i, score[i], kind, 0.0});
  }
  return out;
}

}  // namespace detail

}  // namespace regpipe
