#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "regpipe/descriptors/feature.hpp"
#include "regpipe/parallel.hpp"

namespace regpipe {

struct Correspondence {
  std::size_t src_keypoint = 0;
  std::size_t dst_keypoint = 0;
  double feature_distance = 0.0;

  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

enum class FeatureMetric { L2, L1, ChiSquared };

constexpr std::string_view to_string(FeatureMetric m) {
  switch (m) {
    case FeatureMetric::L2: return "L2";
    case FeatureMetric::L1: return "L1";
    case FeatureMetric::ChiSquared: return "CHI2";
  }
  return "?";
}

inline FeatureMetric parse_metric(std::string_view s) {
  for (auto m : {FeatureMetric::L2, FeatureMetric::L1, FeatureMetric::ChiSquared})
    if (to_string(m) == s) return m;
  fail(ErrorCode::ConfigError, "unknown feature metric '" + std::string(s) + "'");
}

inline double feature_distance(const std::vector<double>& a, const std::vector<double>& b, FeatureMetric m) {
  double acc = 0.0;
  switch (m) {
    case FeatureMetric::L2:
      for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
      return std::sqrt(acc);
    case FeatureMetric::L1:
      for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
      return acc;
    case FeatureMetric::ChiSquared:
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double s = a[i] + b[i];
        if (s > 0.0) acc += (a[i] - b[i]) * (a[i] - b[i]) / s;
      }
      return 0.5 * acc;
  }
  return acc;
}

/// For every source feature, its k nearest destination features, ascending by
/// distance (ties go to the lower destination index). Rows are streamed, so
/// the full N×M distance matrix is never stored.
inline std::vector<Correspondence> match_features(const std::vector<FeatureVector>& src,
                                                  const std::vector<FeatureVector>& dst, std::size_t k,
                                                  FeatureMetric metric = FeatureMetric::L2) {
  if (src.empty() || dst.empty()) fail(ErrorCode::EmptyFeatureSet, "feature matching needs non-empty sets");
  if (k == 0) fail(ErrorCode::InvalidParams, "k must be at least 1");
  const DescriptorKind method = src.front().method;
  const std::size_t length = src.front().values.size();
  for (const auto* set : {&src, &dst})
    for (const auto& f : *set)
      if (f.method != method || f.values.size() != length)
        fail(ErrorCode::MethodMismatch, "cannot match " + std::string(to_string(method)) + " against " +
                                            std::string(to_string(f.method)));
  const std::size_t kk = std::min(k, dst.size());
  std::vector<Correspondence> out(src.size() * kk);
  parallel_chunks(src.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<double, std::size_t>> row(dst.size());
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < dst.size(); ++j) row[j] = {feature_distance(src[i].values, dst[j].values, metric), j};
      std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(kk), row.end());
      for (std::size_t r = 0; r < kk; ++r) out[i * kk + r] = {i, row[r].second, row[r].first};
    }
  }, 8);
  return out;
}

}  // namespace regpipe
