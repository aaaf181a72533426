#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "regpipe/detectors/keypoint.hpp"
#include "regpipe/descriptors/feature.hpp"
#include "regpipe/parallel.hpp"
#include "regpipe/registration/ransac.hpp"
#include "regpipe/spatial_index.hpp"

namespace regpipe {

struct CheckSphere {
  Point3 center = Point3::Zero();
  double radius = 2.0;
};

struct SphereAccuracy {
  CheckSphere sphere;
  double mean_distance = 0.0;
  double sd_distance = 0.0;
  std::size_t matched_count = 0;
  bool failed = true;
};

/// Local cloud-to-cloud distance inside each sphere: aligned points in the
/// sphere are matched to their nearest reference point within
/// `max_match_distance`. SD is the population value.
inline std::vector<SphereAccuracy> evaluate_spheres(const PointCloud& ref, const PointCloud& aligned,
                                                    const std::vector<CheckSphere>& spheres,
                                                    double max_match_distance = 5.0) {
  if (!(max_match_distance > 0.0)) fail(ErrorCode::NonPositiveRadius, "max match distance must be positive");
  for (const auto& s : spheres)
    if (!(s.radius > 0.0)) fail(ErrorCode::NonPositiveRadius, "check sphere radius must be positive");
  std::vector<SphereAccuracy> out(spheres.size());
  for (std::size_t k = 0; k < spheres.size(); ++k) out[k].sphere = spheres[k];
  if (ref.empty() || aligned.empty()) return out;
  // Only reference points within radius + cutoff of a center can be matched,
  // so each sphere indexes that shell instead of the whole cloud.
  for (std::size_t k = 0; k < spheres.size(); ++k) {
    const Point3& c = spheres[k].center;
    const double r2 = spheres[k].radius * spheres[k].radius;
    const double reach = spheres[k].radius + max_match_distance;
    std::vector<Point3> inside, near_ref;
    for (const auto& p : aligned.points)
      if ((p - c).squaredNorm() <= r2) inside.push_back(p);
    for (const auto& p : ref.points)
      if ((p - c).squaredNorm() <= reach * reach) near_ref.push_back(p);
    std::vector<double> dist(inside.size(), -1.0);
    if (!near_ref.empty()) {
      const SpatialIndex ref_index(std::move(near_ref));
      parallel_for(inside.size(), [&](std::size_t a) {
        if (auto nn = ref_index.nearest(inside[a], max_match_distance)) dist[a] = nn->distance;
      });
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (double d : dist)
      if (d >= 0.0) {
        sum += d;
        ++n;
      }
    auto& acc = out[k];
    acc.matched_count = n;
    acc.failed = n == 0;
    if (acc.failed) continue;
    acc.mean_distance = sum / static_cast<double>(n);
    double var = 0.0;
    for (double d : dist)
      if (d >= 0.0) var += (d - acc.mean_distance) * (d - acc.mean_distance);
    acc.sd_distance = std::sqrt(var / static_cast<double>(n));
  }
  return out;
}

/// One (detector, descriptor) row of the benchmark table.
struct BenchmarkRun {
  std::string detector;
  std::string descriptor;
  std::string params;  // extra grid parameters, "key=value;..." or empty
  std::size_t ref_keypoints = 0;
  std::size_t reg_keypoints = 0;
  std::optional<AlignmentResult> alignment;  // empty when the run errored
  std::vector<SphereAccuracy> spheres;
  std::string note;
};

/// "F" when the alignment did not converge, errored, or every sphere failed.
inline bool is_failed(const BenchmarkRun& run) {
  if (!run.alignment || !run.alignment->converged) return true;
  if (run.spheres.empty()) return false;
  for (const auto& s : run.spheres)
    if (!s.failed) return false;
  return true;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace detail

inline std::string time_cell(const BenchmarkRun& run) {
  return is_failed(run) ? "F" : detail::fixed(run.alignment->elapsed, 3);
}

inline std::string sphere_cell(const SphereAccuracy& s) {
  if (s.failed) return "F";
  return detail::fixed(s.mean_distance, 3) + "(" + detail::fixed(s.sd_distance, 3) + ")";
}

/// Benchmark table as CSV: keypoint counts, alignment time (or "F") and one
/// mean(SD) column per check sphere in sphere-list order.
inline std::string benchmark_csv(const std::vector<BenchmarkRun>& runs) {
  std::size_t n_spheres = 0;
  for (const auto& r : runs) n_spheres = std::max(n_spheres, r.spheres.size());
  std::ostringstream os;
  os << "detector,descriptor,params,pref_keypoints,preg_keypoints,time";
  for (std::size_t k = 0; k < n_spheres; ++k) os << ",sphere" << k + 1;
  os << '\n';
  for (const auto& r : runs) {
    os << detail::csv_cell(r.detector) << ',' << detail::csv_cell(r.descriptor) << ',' << detail::csv_cell(r.params)
       << ',' << r.ref_keypoints << ',' << r.reg_keypoints << ',' << time_cell(r);
    for (std::size_t k = 0; k < n_spheres; ++k) os << ',' << (k < r.spheres.size() ? sphere_cell(r.spheres[k]) : "F");
    os << '\n';
  }
  return os.str();
}

}  // namespace regpipe
