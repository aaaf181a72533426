#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "regpipe/descriptors/fpfh.hpp"
#include "regpipe/descriptors/narf.hpp"
#include "regpipe/descriptors/spin.hpp"
#include "regpipe/detectors/harris.hpp"
#include "regpipe/detectors/iss.hpp"
#include "regpipe/detectors/narf.hpp"
#include "regpipe/detectors/sift.hpp"
#include "regpipe/local_surface.hpp"
#include "regpipe/range_image.hpp"
#include "regpipe/registration/matching.hpp"
#include "regpipe/registration/ransac.hpp"

namespace regpipe {

/// Every tunable of a registration run. Detector and descriptor support radii
/// come from `support_radius`.
struct PipelineConfig {
  DetectorKind detector = DetectorKind::Narf;
  DescriptorKind descriptor = DescriptorKind::Fpfh;
  double support_radius = 2.0;
  double normal_radius = 2.0;
  double non_max_radius = 1.0;

  double angular_resolution = 0.01;
  double border_threshold = 0.5;

  HarrisParams harris;
  IssParams iss;
  SiftParams sift;
  NarfDetectorParams narf;

  SpinParams spin;
  NarfDescriptorParams narf_descriptor;

  FeatureMetric metric = FeatureMetric::L2;
  RansacParams ransac;

  std::string sphere_file;
  double max_match_distance = 5.0;

  std::string report_path;
  std::string transform_path;
  std::string table_path;
  bool report_timings = true;

  /// Copies the shared radii into the per-method parameter blocks.
  void sync() {
    for (DetectorParams* p : {static_cast<DetectorParams*>(&harris), static_cast<DetectorParams*>(&iss),
                              static_cast<DetectorParams*>(&sift), static_cast<DetectorParams*>(&narf)}) {
      p->support_radius = support_radius;
      p->non_max_radius = non_max_radius;
    }
    spin.support_radius = support_radius;
    narf_descriptor.support_radius = support_radius;
  }
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;

  friend bool operator==(const StageTiming&, const StageTiming&) = default;
};

struct RegistrationOutcome {
  AlignmentResult alignment;
  std::size_t ref_keypoints = 0;
  std::size_t reg_keypoints = 0;
  std::size_t ref_described = 0;
  std::size_t reg_described = 0;
  std::vector<StageTiming> timings;
  std::string failure;  // why the alignment is "F", empty otherwise
};

namespace detail {

inline std::string key_of(std::initializer_list<double> values) {
  std::ostringstream os;
  os.precision(17);
  for (double v : values) os << v << ';';
  return os.str();
}

}  // namespace detail

/// Stage products of one cloud, computed on demand and reused across runs
/// with matching parameters (the grid sweep shares them).
class PreparedCloud {
 public:
  explicit PreparedCloud(const PointCloud& cloud) : original_(std::make_shared<const PointCloud>(cloud)) {
    if (cloud.empty()) fail(ErrorCode::EmptyCloud, "cannot register an empty cloud");
  }

  const PointCloud& original() const { return *original_; }

  /// Range image with borders, plus its surviving points as a cloud.
  void simplify(double resolution, double border_threshold) {
    const std::string key = detail::key_of({resolution, border_threshold});
    if (key == image_key_) return;
    image_ = detect_borders(project(original_, default_camera(*original_, resolution)), border_threshold);
    simplified_ = to_point_cloud(image_);
    simplified_.scalar.clear();
    simplified_.normals.clear();
    index_ = simplified_.empty() ? nullptr : std::make_unique<SpatialIndex>(simplified_);
    image_key_ = key;
    normal_key_.clear();
    sphericity_key_.clear();
    keypoints_.clear();
    descriptors_.clear();
  }

  const RangeImage& image() const { return image_; }
  const PointCloud& simplified() const { return simplified_; }

  const SpatialIndex& index() const {
    if (!index_) fail(ErrorCode::EmptyCloud, "range image kept no points");
    return *index_;
  }

  /// Normals for the listed points (computed once per radius).
  void ensure_normals(double radius, const std::vector<std::size_t>& which) {
    const std::string key = detail::key_of({radius});
    if (key != normal_key_) {
      simplified_.normals.assign(simplified_.size(), Vector3::Zero());
      normal_done_.assign(simplified_.size(), 0);
      normal_key_ = key;
    }
    std::vector<std::size_t> todo;
    for (std::size_t i : which)
      if (!normal_done_[i]) {
        normal_done_[i] = 1;
        todo.push_back(i);
      }
    if (!todo.empty()) estimate_normals_at(simplified_, index(), radius, todo);
  }

  void ensure_all_normals(double radius) {
    std::vector<std::size_t> all(simplified_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    ensure_normals(radius, all);
  }

  /// Points within `radius` of any keypoint.
  std::vector<std::size_t> support_of(const std::vector<Keypoint>& kps, double radius) const {
    std::vector<char> mark(simplified_.size(), 0);
    std::vector<std::size_t> nbrs, out;
    for (const auto& k : kps) {
      index().radius_search(k.position, radius, nbrs);
      for (std::size_t j : nbrs)
        if (!mark[j]) {
          mark[j] = 1;
          out.push_back(j);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  const std::vector<Keypoint>& keypoints(const PipelineConfig& cfg) {
    const std::string key = detector_key(cfg);
    if (auto it = keypoints_.find(key); it != keypoints_.end()) return it->second;
    std::vector<Keypoint> kps;
    switch (cfg.detector) {
      case DetectorKind::Harris:
        if (!simplified_.empty()) {
          ensure_all_normals(cfg.normal_radius);
          kps = detect_harris(simplified_, cfg.harris);
        }
        break;
      case DetectorKind::Iss:
        kps = detect_iss(simplified_, cfg.iss);
        break;
      case DetectorKind::Sift: {
        const std::string skey = detail::key_of({cfg.support_radius});
        if (skey != sphericity_key_) {
          sphericity_ = compute_sphericity(PointCloud{simplified_.points, {}, {}}, cfg.support_radius).scalar;
          sphericity_key_ = skey;
        }
        PointCloud with_scalar{simplified_.points, sphericity_, {}};
        kps = detect_sift(with_scalar, cfg.sift);
        break;
      }
      case DetectorKind::Narf:
        kps = detect_narf(image_, cfg.narf);
        break;
    }
    return keypoints_.emplace(key, std::move(kps)).first->second;
  }

  /// Descriptors of arbitrary keypoints on the simplified cloud.
  DescriptorList describe_keypoints(const PipelineConfig& cfg, const std::vector<Keypoint>& kps) {
    DescriptorList list(kps.size());
    if (kps.empty()) return list;
    switch (cfg.descriptor) {
      case DescriptorKind::Fpfh:
        ensure_normals(cfg.normal_radius, support_of(kps, 2.0 * cfg.support_radius));
        list = describe_fpfh(simplified_, index(), kps, cfg.support_radius);
        break;
      case DescriptorKind::Spin:
        ensure_normals(cfg.normal_radius, support_of(kps, 1e-9));  // the anchors
        list = describe_spin(simplified_, index(), kps, cfg.spin);
        break;
      case DescriptorKind::Narf:
        list = describe_narf(image_, simplified_, index(), kps, cfg.narf_descriptor);
        break;
    }
    return list;
  }

  /// Keypoints that received a descriptor, with their features.
  const std::pair<std::vector<Keypoint>, std::vector<FeatureVector>>& describe(const PipelineConfig& cfg) {
    const std::string key = detector_key(cfg) + '|' + descriptor_key(cfg);
    if (auto it = descriptors_.find(key); it != descriptors_.end()) return it->second;
    const auto& kps = keypoints(cfg);
    const DescriptorList list = describe_keypoints(cfg, kps);
    std::pair<std::vector<Keypoint>, std::vector<FeatureVector>> out;
    for (std::size_t k = 0; k < kps.size(); ++k) {
      if (!list[k]) continue;
      out.first.push_back(kps[k]);
      out.second.push_back(std::move(*list[k]));
    }
    return descriptors_.emplace(key, std::move(out)).first->second;
  }

 private:
  static std::string detector_key(const PipelineConfig& c) {
    std::string k = std::string(to_string(c.detector)) + detail::key_of({c.support_radius, c.non_max_radius});
    switch (c.detector) {
      case DetectorKind::Harris: return k + detail::key_of({c.normal_radius, c.harris.k, c.harris.threshold});
      case DetectorKind::Iss:
        return k + detail::key_of({c.iss.gamma21, c.iss.gamma32, static_cast<double>(c.iss.min_neighbors)});
      case DetectorKind::Sift:
        return k + detail::key_of({c.sift.min_scale, static_cast<double>(c.sift.n_octaves),
                                   static_cast<double>(c.sift.scales_per_octave), c.sift.min_contrast});
      case DetectorKind::Narf:
        return k + detail::key_of({c.narf.threshold, c.narf.border_weight, c.narf.surface_weight,
                                   static_cast<double>(c.narf.direction_window), static_cast<double>(c.narf.min_far_pixels)});
    }
    return k;
  }

  static std::string descriptor_key(const PipelineConfig& c) {
    std::string k = std::string(to_string(c.descriptor)) + detail::key_of({c.support_radius, c.normal_radius});
    if (c.descriptor == DescriptorKind::Spin)
      k += detail::key_of({static_cast<double>(c.spin.radial_bins), static_cast<double>(c.spin.elevation_bins)});
    if (c.descriptor == DescriptorKind::Narf)
      k += detail::key_of({static_cast<double>(c.narf_descriptor.samples_per_beam)});
    return k;
  }

  std::shared_ptr<const PointCloud> original_;
  RangeImage image_;
  PointCloud simplified_;
  std::unique_ptr<SpatialIndex> index_;
  std::string image_key_, normal_key_, sphericity_key_;
  std::vector<char> normal_done_;
  std::vector<double> sphericity_;
  std::map<std::string, std::vector<Keypoint>> keypoints_;
  std::map<std::string, std::pair<std::vector<Keypoint>, std::vector<FeatureVector>>> descriptors_;
};

namespace detail {

template <class Fn>
auto timed_stage(const std::string& stage, std::vector<StageTiming>& timings, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&] {
    timings.push_back({stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish();
    } else {
      auto r = fn();
      finish();
      return r;
    }
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

}  // namespace detail

/// Range-image simplification, detection and description of both clouds,
/// feature matching (registered → reference) and pre-rejective RANSAC. The
/// returned transform maps the registered cloud onto the reference cloud.
/// Too few keypoints or features yield a failed ("F") outcome; other errors
/// propagate tagged with their stage.
inline RegistrationOutcome coarse_register(PreparedCloud& ref, PreparedCloud& reg, PipelineConfig config) {
  config.sync();
  RegistrationOutcome out;
  auto& t = out.timings;
  detail::timed_stage("range_image", t, [&] {
    ref.simplify(config.angular_resolution, config.border_threshold);
    reg.simplify(config.angular_resolution, config.border_threshold);
  });
  detail::timed_stage("detect", t, [&] {
    out.ref_keypoints = ref.keypoints(config).size();
    out.reg_keypoints = reg.keypoints(config).size();
  });
  const auto& ref_f = detail::timed_stage("describe", t, [&] { return &ref.describe(config); });
  const auto& reg_f = *detail::timed_stage("describe", t, [&] { return &reg.describe(config); });
  t[t.size() - 2].seconds += t.back().seconds;
  t.pop_back();
  out.ref_described = ref_f->first.size();
  out.reg_described = reg_f.first.size();
  if (ref_f->second.empty() || reg_f.second.empty()) {
    out.failure = "no keypoint with a valid descriptor";
    return out;
  }
  const auto matches = detail::timed_stage("match", t, [&] {
    return match_features(reg_f.second, ref_f->second, static_cast<std::size_t>(config.ransac.correspondence_randomness),
                          config.metric);
  });
  try {
    out.alignment = detail::timed_stage("ransac", t, [&] {
      return prerejective_ransac(reg_f.first, ref_f->first, matches, config.ransac);
    });
  } catch (const StageError& e) {
    if (e.code() != ErrorCode::TooFewKeypoints) throw;
    out.failure = "too few matched keypoints";
    return out;
  }
  if (!out.alignment.converged) out.failure = "RANSAC did not converge";
  return out;
}

inline RegistrationOutcome coarse_register(const PointCloud& ref, const PointCloud& reg, const PipelineConfig& config) {
  PreparedCloud a(ref), b(reg);
  return coarse_register(a, b, config);
}

}  // namespace regpipe
