#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <span>
#include <vector>

#include "regpipe/detectors/keypoint.hpp"
#include "regpipe/parallel.hpp"
#include "regpipe/pose_estimation.hpp"
#include "regpipe/random.hpp"
#include "regpipe/registration/matching.hpp"

namespace regpipe {

struct RansacParams {
  double similarity_threshold = 0.55;
  double inlier_threshold = 1.0;
  int max_iterations = 5000;
  int sample_size = 3;
  int correspondence_randomness = 5;
  double min_inlier_fraction = 0.25;
  std::uint64_t rng_seed = 42;

  void validate() const {
    if (!(similarity_threshold >= 0.0 && similarity_threshold <= 1.0))
      fail(ErrorCode::InvalidParams, "similarity threshold must lie in [0, 1]");
    if (!(inlier_threshold > 0.0)) fail(ErrorCode::NonPositiveThreshold, "inlier threshold must be positive");
    if (max_iterations < 1) fail(ErrorCode::InvalidParams, "max_iterations must be at least 1");
    if (sample_size != 3) fail(ErrorCode::InvalidParams, "sample size is fixed at 3");
    if (correspondence_randomness < 1) fail(ErrorCode::InvalidParams, "correspondence randomness must be >= 1");
    if (!(min_inlier_fraction >= 0.0 && min_inlier_fraction <= 1.0))
      fail(ErrorCode::InvalidFraction, "min_inlier_fraction must lie in [0, 1]");
  }
};

struct AlignmentResult {
  RigidTransform transform;
  std::size_t inlier_count = 0;
  double inlier_fraction = 0.0;
  bool converged = false;
  int iterations_used = 0;
  std::size_t prerejection_passed = 0;
  double elapsed = 0.0;  // seconds
};

/// Source keypoints whose nearest destination keypoint lies within
/// `threshold` once moved by `t`.
inline std::size_t count_inliers(const std::vector<Point3>& src, const SpatialIndex& dst_index,
                                 const RigidTransform& t, double threshold) {
  std::size_t n = 0;
  for (const auto& p : src) n += dst_index.nearest(t(p), threshold).has_value();
  return n;
}

struct InlierScore {
  std::size_t count = 0;
  double residual = 0.0;  // sum of squared inlier distances

  /// More inliers first; equal counts go to the tighter fit.
  bool better_than(const InlierScore& o) const {
    return count > o.count || (count == o.count && residual < o.residual);
  }
};

inline InlierScore score_inliers(const std::vector<Point3>& src, const SpatialIndex& dst_index,
                                 const RigidTransform& t, double threshold) {
  InlierScore s;
  for (const auto& p : src) {
    const Point3 q = t(p);
    if (const auto nn = dst_index.nearest(q, threshold)) {
      ++s.count;
      s.residual += (dst_index.point(nn->index) - q).squaredNorm();
    }
  }
  return s;
}

/// Edge-length pre-rejection: for every pair of sampled correspondences the
/// shorter of the source and destination edges is at least `similarity` times
/// the longer one.
inline bool passes_prerejection(const std::array<Point3, 3>& s, const std::array<Point3, 3>& d, double similarity) {
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      const double ls = (s[a] - s[b]).norm();
      const double ld = (d[a] - d[b]).norm();
      const double hi = std::max(ls, ld);
      if (hi == 0.0) continue;
      if (std::min(ls, ld) < similarity * hi) return false;
    }
  }
  return true;
}

/// Sample-consensus pose estimation with edge-length pre-rejection. Models
/// rank by inlier count, then by summed squared inlier residual. Each
/// iteration draws from its own seeded stream, so results do not depend on the
/// number of threads. Returns converged = false rather than throwing when the
/// best model is too weak.
inline AlignmentResult prerejective_ransac(const std::vector<Keypoint>& src_kps, const std::vector<Keypoint>& dst_kps,
                                           const std::vector<Correspondence>& matches, const RansacParams& params) {
  params.validate();
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::vector<std::size_t>> options(src_kps.size());
  for (const auto& m : matches) {
    if (m.src_keypoint >= src_kps.size() || m.dst_keypoint >= dst_kps.size())
      fail(ErrorCode::InvalidParams, "correspondence index out of range");
    auto& o = options[m.src_keypoint];
    if (o.size() < static_cast<std::size_t>(params.correspondence_randomness)) o.push_back(m.dst_keypoint);
  }
  std::vector<std::size_t> sources;
  for (std::size_t i = 0; i < options.size(); ++i)
    if (!options[i].empty()) sources.push_back(i);
  if (sources.size() < 3 || dst_kps.size() < 3)
    fail(ErrorCode::TooFewKeypoints, "RANSAC needs at least 3 matched keypoints on each side");

  std::vector<Point3> src_pts, dst_pts;
  src_pts.reserve(src_kps.size());
  dst_pts.reserve(dst_kps.size());
  for (const auto& k : src_kps) src_pts.push_back(k.position);
  for (const auto& k : dst_kps) dst_pts.push_back(k.position);
  const SpatialIndex dst_index(dst_pts);

  struct Best {
    InlierScore score;
    int iteration = -1;
    RigidTransform transform;
    std::size_t passed = 0;
  };
  const auto iterations = static_cast<std::size_t>(params.max_iterations);
  std::vector<Best> partial;
  std::mutex partial_mutex;
  parallel_chunks(iterations, [&](std::size_t begin, std::size_t end) {
    Best best;
    std::array<Point3, 3> s, d;
    for (std::size_t it = begin; it < end; ++it) {
      Rng rng(derive_seed(params.rng_seed, it));
      std::array<std::size_t, 3> pick{};
      for (int a = 0; a < 3; ++a) {
        bool fresh;
        do {
          pick[a] = sources[rng.below(sources.size())];
          fresh = true;
          for (int b = 0; b < a; ++b) fresh = fresh && pick[b] != pick[a];
        } while (!fresh);
        const auto& o = options[pick[a]];
        s[a] = src_pts[pick[a]];
        d[a] = dst_pts[o[rng.below(o.size())]];
      }
      if (!passes_prerejection(s, d, params.similarity_threshold)) continue;
      ++best.passed;
      RigidTransform model;
      try {
        model = estimate_rigid_svd(std::span<const Point3>(s), std::span<const Point3>(d));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::DegenerateConfiguration) continue;
        throw;
      }
      const InlierScore sc = score_inliers(src_pts, dst_index, model, params.inlier_threshold);
      if (best.iteration < 0 || sc.better_than(best.score)) best = {sc, static_cast<int>(it), model, best.passed};
    }
    std::lock_guard lock(partial_mutex);
    partial.push_back(best);
  }, 64);

  // Lowest iteration index wins ties regardless of chunk completion order.
  Best best;
  std::size_t passed = 0;
  for (const auto& b : partial) {
    passed += b.passed;
    if (b.iteration < 0) continue;
    if (best.iteration < 0 || b.score.better_than(best.score) ||
        (!best.score.better_than(b.score) && b.iteration < best.iteration))
      best = b;
  }

  AlignmentResult result;
  result.iterations_used = params.max_iterations;
  result.prerejection_passed = passed;
  if (best.iteration >= 0) {
    result.transform = best.transform;
    result.inlier_count = best.score.count;
    // Re-estimate from every inlier of the best model; keep it unless it loses support.
    std::vector<Point3> in_src, in_dst;
    for (const auto& p : src_pts) {
      const auto nn = dst_index.nearest(best.transform(p), params.inlier_threshold);
      if (!nn) continue;
      in_src.push_back(p);
      in_dst.push_back(dst_pts[nn->index]);
    }
    try {
      const RigidTransform refined = estimate_rigid_svd(in_src, in_dst);
      const InlierScore sc = score_inliers(src_pts, dst_index, refined, params.inlier_threshold);
      if (sc.count >= best.score.count) {
        result.transform = refined;
        result.inlier_count = sc.count;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateConfiguration && e.code() != ErrorCode::TooFewPairs) throw;
    }
    result.inlier_fraction = static_cast<double>(result.inlier_count) / static_cast<double>(src_kps.size());
    result.converged = result.inlier_fraction >= params.min_inlier_fraction;
  }
  result.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace regpipe
