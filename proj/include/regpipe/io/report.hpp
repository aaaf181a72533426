#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "regpipe/evaluation.hpp"
#include "regpipe/io/config.hpp"
#include "regpipe/registration/pipeline.hpp"
#include "regpipe/synth.hpp"

namespace regpipe {

using Json = nlohmann::ordered_json;

/// Everything one register run produced.
struct RunReport {
  static constexpr int kSchemaVersion = 1;

  std::vector<std::pair<std::string, std::string>> config;  // effective, defaults included
  bool include_timings = true;
  std::vector<StageTiming> timings;
  std::size_t ref_keypoints = 0;
  std::size_t reg_keypoints = 0;
  AlignmentResult alignment;
  std::vector<SphereAccuracy> spheres;
  std::string failure;  // empty unless the run is "F"

  bool failed() const { return !failure.empty(); }
};

inline RunReport make_report(const PipelineConfig& cfg, const RegistrationOutcome& outcome,
                             std::vector<SphereAccuracy> spheres) {
  RunReport r;
  r.config = config_entries(cfg);
  r.include_timings = cfg.report_timings;
  if (cfg.report_timings) r.timings = outcome.timings;
  r.ref_keypoints = outcome.ref_keypoints;
  r.reg_keypoints = outcome.reg_keypoints;
  r.alignment = outcome.alignment;
  if (!cfg.report_timings) r.alignment.elapsed = 0.0;
  r.spheres = std::move(spheres);
  r.failure = outcome.failure;
  if (r.failure.empty() && !r.spheres.empty()) {
    bool all_failed = true;
    for (const auto& s : r.spheres) all_failed = all_failed && s.failed;
    if (all_failed) r.failure = "no check sphere found matching points";
  }
  return r;
}

namespace detail {

inline Json point_json(const Point3& p) { return Json::array({p.x(), p.y(), p.z()}); }

inline Point3 point_from(const Json& j) { return Point3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

inline Json matrix_json(const RigidTransform& t) {
  const Eigen::Matrix4d m = t.matrix();
  Json rows = Json::array();
  for (int r = 0; r < 4; ++r) rows.push_back(Json::array({m(r, 0), m(r, 1), m(r, 2), m(r, 3)}));
  return rows;
}

inline RigidTransform matrix_from(const Json& j) {
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = j.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
  return RigidTransform::from_matrix(m);
}

/// Runs `fn` and turns JSON access errors into ParseError.
template <class Fn>
auto parse_json_with(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, what + ": " + e.what());
  }
}

inline void check_schema(const Json& j, std::string_view name, int version) {
  if (j.at("schema").get<std::string>() != name)
    fail(ErrorCode::ParseError, "expected schema '" + std::string(name) + "'");
  if (j.at("version").get<int>() != version)
    fail(ErrorCode::ParseError, "unsupported " + std::string(name) + " version " + std::to_string(j.at("version").get<int>()));
}

}  // namespace detail

inline Json report_json(const RunReport& r) {
  Json j;
  j["schema"] = "regpipe.run_report";
  j["version"] = RunReport::kSchemaVersion;
  j["status"] = r.failed() ? "F" : "ok";
  j["failure"] = r.failure;
  Json cfg = Json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = cfg;
  j["keypoints"] = {{"reference", r.ref_keypoints}, {"registered", r.reg_keypoints}};
  Json a;
  a["converged"] = r.alignment.converged;
  a["inlier_count"] = r.alignment.inlier_count;
  a["inlier_fraction"] = r.alignment.inlier_fraction;
  a["iterations_used"] = r.alignment.iterations_used;
  a["prerejection_passed"] = r.alignment.prerejection_passed;
  if (r.include_timings) a["elapsed"] = r.alignment.elapsed;
  j["alignment"] = a;
  j["transform"] = detail::matrix_json(r.alignment.transform);
  Json spheres = Json::array();
  for (const auto& s : r.spheres) {
    Json e;
    e["center"] = detail::point_json(s.sphere.center);
    e["radius"] = s.sphere.radius;
    e["failed"] = s.failed;
    e["matched"] = s.matched_count;
    e["mean"] = s.mean_distance;
    e["sd"] = s.sd_distance;
    spheres.push_back(e);
  }
  j["spheres"] = spheres;
  if (r.include_timings) {
    Json t = Json::array();
    for (const auto& s : r.timings) t.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
    j["timings"] = t;
  }
  return j;
}

inline std::string report_text(const RunReport& r) { return report_json(r).dump(2) + '\n'; }

inline RunReport parse_report(const std::string& text) {
  return detail::parse_json_with("run report", [&] {
    const Json j = Json::parse(text);
    detail::check_schema(j, "regpipe.run_report", RunReport::kSchemaVersion);
    RunReport r;
    r.failure = j.at("failure").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
    r.ref_keypoints = j.at("keypoints").at("reference").get<std::size_t>();
    r.reg_keypoints = j.at("keypoints").at("registered").get<std::size_t>();
    const Json& a = j.at("alignment");
    r.alignment.converged = a.at("converged").get<bool>();
    r.alignment.inlier_count = a.at("inlier_count").get<std::size_t>();
    r.alignment.inlier_fraction = a.at("inlier_fraction").get<double>();
    r.alignment.iterations_used = a.at("iterations_used").get<int>();
    r.alignment.prerejection_passed = a.at("prerejection_passed").get<std::size_t>();
    r.include_timings = j.contains("timings");
    if (r.include_timings) r.alignment.elapsed = a.at("elapsed").get<double>();
    r.alignment.transform = detail::matrix_from(j.at("transform"));
    for (const auto& e : j.at("spheres")) {
      SphereAccuracy s;
      s.sphere.center = detail::point_from(e.at("center"));
      s.sphere.radius = e.at("radius").get<double>();
      s.failed = e.at("failed").get<bool>();
      s.matched_count = e.at("matched").get<std::size_t>();
      s.mean_distance = e.at("mean").get<double>();
      s.sd_distance = e.at("sd").get<double>();
      r.spheres.push_back(s);
    }
    if (r.include_timings)
      for (const auto& t : j.at("timings")) r.timings.push_back({t.at("stage").get<std::string>(), t.at("seconds").get<double>()});
    return r;
  });
}

// Benchmark table as JSON, mirroring the CSV cells.

inline std::string benchmark_json(const std::vector<BenchmarkRun>& runs) {
  Json rows = Json::array();
  for (const auto& r : runs) {
    Json e;
    e["detector"] = r.detector;
    e["descriptor"] = r.descriptor;
    e["params"] = r.params;
    e["pref_keypoints"] = r.ref_keypoints;
    e["preg_keypoints"] = r.reg_keypoints;
    e["time"] = time_cell(r);
    Json s = Json::array();
    for (const auto& a : r.spheres) s.push_back(sphere_cell(a));
    e["spheres"] = s;
    e["note"] = r.note;
    rows.push_back(e);
  }
  Json j;
  j["schema"] = "regpipe.benchmark";
  j["version"] = 1;
  j["rows"] = rows;
  return j.dump(2) + '\n';
}

// Scene description.

inline std::string scene_json(const SceneSpec& s) {
  Json j;
  j["schema"] = "regpipe.scene";
  j["version"] = 1;
  j["seed"] = s.seed;
  j["extent"] = s.extent;
  j["ground_z"] = s.ground_z;
  j["density_aerial"] = s.density_aerial;
  j["density_ground"] = s.density_ground;
  j["path"] = {{"x0", s.path_x0}, {"y0", s.path_y0}, {"x1", s.path_x1}, {"y1", s.path_y1},
               {"radius", s.path_radius}, {"sensor_height", s.sensor_height}};
  Json boxes = Json::array();
  for (const auto& b : s.boxes)
    boxes.push_back({{"x", b.x}, {"y", b.y}, {"base", b.base}, {"size_x", b.size_x}, {"size_y", b.size_y},
                     {"height", b.height}, {"yaw_deg", b.yaw_deg}});
  j["boxes"] = boxes;
  Json ell = Json::array();
  for (const auto& e : s.ellipsoids)
    ell.push_back({{"center", detail::point_json(e.center)}, {"rx", e.rx}, {"ry", e.ry}, {"rz", e.rz}});
  j["ellipsoids"] = ell;
  Json cyl = Json::array();
  for (const auto& c : s.cylinders)
    cyl.push_back({{"x", c.x}, {"y", c.y}, {"base", c.base}, {"radius", c.radius}, {"height", c.height}});
  j["cylinders"] = cyl;
  return j.dump(2) + '\n';
}

/// Missing fields keep their SceneSpec defaults; primitive lists default to empty.
inline SceneSpec parse_scene(const std::string& text) {
  SceneSpec s = detail::parse_json_with("scene", [&] {
    const Json j = Json::parse(text);
    detail::check_schema(j, "regpipe.scene", 1);
    SceneSpec s;
    auto opt = [](const Json& o, const char* key, auto& field) {
      if (o.contains(key)) field = o.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    opt(j, "seed", s.seed);
    opt(j, "extent", s.extent);
    opt(j, "ground_z", s.ground_z);
    opt(j, "density_aerial", s.density_aerial);
    opt(j, "density_ground", s.density_ground);
    if (j.contains("path")) {
      const Json& p = j.at("path");
      opt(p, "x0", s.path_x0);
      opt(p, "y0", s.path_y0);
      opt(p, "x1", s.path_x1);
      opt(p, "y1", s.path_y1);
      opt(p, "radius", s.path_radius);
      opt(p, "sensor_height", s.sensor_height);
    }
    for (const auto& b : j.value("boxes", Json::array())) {
      BoxPrimitive x;
      opt(b, "x", x.x);
      opt(b, "y", x.y);
      opt(b, "base", x.base);
      opt(b, "size_x", x.size_x);
      opt(b, "size_y", x.size_y);
      opt(b, "height", x.height);
      opt(b, "yaw_deg", x.yaw_deg);
      s.boxes.push_back(x);
    }
    for (const auto& e : j.value("ellipsoids", Json::array())) {
      EllipsoidPrimitive x;
      x.center = detail::point_from(e.at("center"));
      opt(e, "rx", x.rx);
      opt(e, "ry", x.ry);
      opt(e, "rz", x.rz);
      s.ellipsoids.push_back(x);
    }
    for (const auto& c : j.value("cylinders", Json::array())) {
      CylinderPrimitive x;
      opt(c, "x", x.x);
      opt(c, "y", x.y);
      opt(c, "base", x.base);
      opt(c, "radius", x.radius);
      opt(c, "height", x.height);
      s.cylinders.push_back(x);
    }
    return s;
  });
  s.validate();
  return s;
}

}  // namespace regpipe
