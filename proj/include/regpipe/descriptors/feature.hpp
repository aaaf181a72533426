#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "regpipe/error.hpp"
#include "regpipe/point_cloud.hpp"
#include "regpipe/spatial_index.hpp"

namespace regpipe {

enum class DescriptorKind { Fpfh, Spin, Narf };

inline constexpr DescriptorKind kAllDescriptors[] = {DescriptorKind::Fpfh, DescriptorKind::Spin,
                                                     DescriptorKind::Narf};

constexpr std::string_view to_string(DescriptorKind d) {
  switch (d) {
    case DescriptorKind::Fpfh: return "FPFH";
    case DescriptorKind::Spin: return "SPIN";
    case DescriptorKind::Narf: return "NARF";
  }
  return "?";
}

inline DescriptorKind parse_descriptor(std::string_view s) {
  for (auto d : kAllDescriptors)
    if (to_string(d) == s) return d;
  fail(ErrorCode::ConfigError, "unknown descriptor '" + std::string(s) + "'");
}

inline constexpr std::size_t kFpfhBins = 11;
inline constexpr std::size_t kFpfhLength = 3 * kFpfhBins;
inline constexpr std::size_t kNarfBeams = 36;

struct FeatureVector {
  DescriptorKind method = DescriptorKind::Fpfh;
  std::vector<double> values;

  FeatureVector() = default;
  FeatureVector(DescriptorKind m, std::vector<double> v, std::size_t expected_length)
      : method(m), values(std::move(v)) {
    if (values.size() != expected_length)
      fail(ErrorCode::InvalidParams, std::string(to_string(m)) + " descriptor has length " +
                                         std::to_string(values.size()) + ", expected " +
                                         std::to_string(expected_length));
  }
};

/// One entry per keypoint; empty where the support was insufficient.
using DescriptorList = std::vector<std::optional<FeatureVector>>;

namespace detail {

/// Cloud point closest to a keypoint position (keypoints are normally cloud
/// points, so the distance is zero).
inline std::size_t anchor_point(const SpatialIndex& index, const Point3& position) {
  return index.nearest(position)->index;
}

}  // namespace detail

}  // namespace regpipe
