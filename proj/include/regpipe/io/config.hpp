#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "regpipe/io/files.hpp"
#include "regpipe/io/text.hpp"
#include "regpipe/registration/pipeline.hpp"

namespace regpipe {

/// One dotted configuration key bound to a PipelineConfig field.
struct ConfigKey {
  std::string_view name;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, std::string_view)> set;
};

namespace detail {

inline void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  fail(ErrorCode::ConfigError,
       std::string(key) + ": '" + std::string(value) + "' is not " + std::string(expected));
}

template <class Field>
ConfigKey real_key(std::string_view name, Field field) {
  return {name, [field](const PipelineConfig& c) { return format_double(field(const_cast<PipelineConfig&>(c))); },
          [name, field](PipelineConfig& c, std::string_view v) {
            field(c) = parse_double(v, std::string(name), ErrorCode::ConfigError);
          }};
}

template <class Field>
ConfigKey int_key(std::string_view name, Field field) {
  return {name,
          [field](const PipelineConfig& c) { return std::to_string(field(const_cast<PipelineConfig&>(c))); },
          [name, field](PipelineConfig& c, std::string_view v) {
            using T = std::remove_reference_t<decltype(field(c))>;
            if constexpr (std::is_unsigned_v<T>)
              field(c) = static_cast<T>(parse_count(v, std::string(name), ErrorCode::ConfigError));
            else
              field(c) = static_cast<T>(parse_integer(v, std::string(name), ErrorCode::ConfigError));
          }};
}

template <class Field>
ConfigKey string_key(std::string_view name, Field field) {
  return {name, [field](const PipelineConfig& c) { return field(const_cast<PipelineConfig&>(c)); },
          [field](PipelineConfig& c, std::string_view v) { field(c) = std::string(v); }};
}

}  // namespace detail

/// Every configuration key, in serialization order.
inline const std::vector<ConfigKey>& config_keys() {
  using detail::int_key;
  using detail::real_key;
  using detail::string_key;
  using C = PipelineConfig;
  static const std::vector<ConfigKey> keys = {
      {"detector", [](const C& c) { return std::string(to_string(c.detector)); },
       [](C& c, std::string_view v) { c.detector = parse_detector(v); }},
      {"descriptor", [](const C& c) { return std::string(to_string(c.descriptor)); },
       [](C& c, std::string_view v) { c.descriptor = parse_descriptor(v); }},
      real_key("support_radius", [](C& c) -> double& { return c.support_radius; }),
      real_key("normal_radius", [](C& c) -> double& { return c.normal_radius; }),
      real_key("non_max_radius", [](C& c) -> double& { return c.non_max_radius; }),
      real_key("range_image.angular_resolution", [](C& c) -> double& { return c.angular_resolution; }),
      real_key("range_image.border_threshold", [](C& c) -> double& { return c.border_threshold; }),
      real_key("harris.k", [](C& c) -> double& { return c.harris.k; }),
      real_key("harris.threshold", [](C& c) -> double& { return c.harris.threshold; }),
      real_key("iss.gamma21", [](C& c) -> double& { return c.iss.gamma21; }),
      real_key("iss.gamma32", [](C& c) -> double& { return c.iss.gamma32; }),
      int_key("iss.min_neighbors", [](C& c) -> std::size_t& { return c.iss.min_neighbors; }),
      real_key("sift.min_scale", [](C& c) -> double& { return c.sift.min_scale; }),
      int_key("sift.n_octaves", [](C& c) -> int& { return c.sift.n_octaves; }),
      int_key("sift.scales_per_octave", [](C& c) -> int& { return c.sift.scales_per_octave; }),
      real_key("sift.min_contrast", [](C& c) -> double& { return c.sift.min_contrast; }),
      real_key("narf.threshold", [](C& c) -> double& { return c.narf.threshold; }),
      real_key("narf.border_weight", [](C& c) -> double& { return c.narf.border_weight; }),
      real_key("narf.surface_weight", [](C& c) -> double& { return c.narf.surface_weight; }),
      int_key("narf.direction_window", [](C& c) -> int& { return c.narf.direction_window; }),
      int_key("narf.min_far_pixels", [](C& c) -> int& { return c.narf.min_far_pixels; }),
      int_key("spin.radial_bins", [](C& c) -> std::size_t& { return c.spin.radial_bins; }),
      int_key("spin.elevation_bins", [](C& c) -> std::size_t& { return c.spin.elevation_bins; }),
      int_key("narf_descriptor.samples_per_beam", [](C& c) -> std::size_t& { return c.narf_descriptor.samples_per_beam; }),
      {"match.metric", [](const C& c) { return std::string(to_string(c.metric)); },
       [](C& c, std::string_view v) { c.metric = parse_metric(v); }},
      real_key("ransac.similarity_threshold", [](C& c) -> double& { return c.ransac.similarity_threshold; }),
      real_key("ransac.inlier_threshold", [](C& c) -> double& { return c.ransac.inlier_threshold; }),
      int_key("ransac.max_iterations", [](C& c) -> int& { return c.ransac.max_iterations; }),
      int_key("ransac.sample_size", [](C& c) -> int& { return c.ransac.sample_size; }),
      int_key("ransac.correspondence_randomness", [](C& c) -> int& { return c.ransac.correspondence_randomness; }),
      real_key("ransac.min_inlier_fraction", [](C& c) -> double& { return c.ransac.min_inlier_fraction; }),
      int_key("ransac.rng_seed", [](C& c) -> std::uint64_t& { return c.ransac.rng_seed; }),
      string_key("evaluation.sphere_file", [](C& c) -> std::string& { return c.sphere_file; }),
      real_key("evaluation.max_match_distance", [](C& c) -> double& { return c.max_match_distance; }),
      string_key("output.report", [](C& c) -> std::string& { return c.report_path; }),
      string_key("output.transform", [](C& c) -> std::string& { return c.transform_path; }),
      string_key("output.table", [](C& c) -> std::string& { return c.table_path; }),
      {"report.timings", [](const C& c) { return std::string(c.report_timings ? "true" : "false"); },
       [](C& c, std::string_view v) {
         if (v == "true") c.report_timings = true;
         else if (v == "false") c.report_timings = false;
         else detail::bad_value("report.timings", v, "true or false");
       }},
  };
  return keys;
}

inline const ConfigKey& find_config_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return k;
  fail(ErrorCode::ConfigError, "unknown configuration key '" + std::string(name) + "'");
}

inline void apply_setting(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  find_config_key(key).set(cfg, trim(value));
}

/// Parses "key = value" lines over `base`; '#' starts a comment.
inline PipelineConfig parse_config(const std::string& text, PipelineConfig base = {}) {
  for (const auto& [n, line] : detail::content_lines(text)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::ConfigError, "line " + std::to_string(n) + ": expected 'key = value'");
    try {
      apply_setting(base, trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, "line " + std::to_string(n) + ": " + e.what());
    }
  }
  return base;
}

/// Effective configuration as ordered (key, value) pairs, defaults included.
inline std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_keys()) out.emplace_back(std::string(k.name), k.get(cfg));
  return out;
}

inline std::string serialize_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + '\n';
  return out;
}

/// Range checks for every parameter block the run could touch.
inline void validate_config(PipelineConfig cfg) {
  cfg.sync();
  if (!(cfg.support_radius > 0.0) || !(cfg.normal_radius > 0.0) || !(cfg.non_max_radius > 0.0))
    fail(ErrorCode::NonPositiveRadius, "radii must be positive");
  if (!(cfg.angular_resolution > 0.0)) fail(ErrorCode::InvalidParams, "angular resolution must be positive");
  if (!(cfg.border_threshold > 0.0)) fail(ErrorCode::NonPositiveThreshold, "border threshold must be positive");
  if (!(cfg.max_match_distance > 0.0)) fail(ErrorCode::NonPositiveRadius, "max match distance must be positive");
  cfg.harris.validate();
  cfg.iss.validate();
  cfg.sift.validate();
  cfg.narf.validate();
  cfg.spin.validate();
  cfg.narf_descriptor.validate();
  cfg.ransac.validate();
}

/// One combination of a parameter sweep.
struct GridPoint {
  PipelineConfig config;
  std::string params;  // swept keys other than detector/descriptor, "key=value;..."
};

/// Cartesian product of "key = v1, v2, ..." lines over `base`. Detector and
/// descriptor are the outer dimensions and default to every method; other
/// keys vary in file order, the last one fastest. Only keys with more than one
/// value appear in `params`.
inline std::vector<GridPoint> expand_grid(const std::string& text, const PipelineConfig& base = {}) {
  struct Dim {
    std::string key;
    std::vector<std::string> values;
  };
  std::vector<Dim> dims;
  for (const auto& [n, line] : detail::content_lines(text)) {
    const std::string where = "grid line " + std::to_string(n);
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ConfigError, where + ": expected 'key = v1, v2, ...'");
    Dim d{std::string(trim(std::string_view(line).substr(0, eq))), split(std::string_view(line).substr(eq + 1), ',')};
    for (const auto& other : dims)
      if (other.key == d.key) fail(ErrorCode::ConfigError, where + ": '" + d.key + "' listed twice");
    PipelineConfig scratch = base;
    try {
      for (const auto& v : d.values) apply_setting(scratch, d.key, v);
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, where + ": " + e.what());
    }
    dims.push_back(std::move(d));
  }
  auto take = [&](const std::string& key, std::vector<std::string> fallback) {
    for (auto it = dims.begin(); it != dims.end(); ++it)
      if (it->key == key) {
        Dim d = std::move(*it);
        dims.erase(it);
        return d;
      }
    return Dim{key, std::move(fallback)};
  };
  std::vector<std::string> all_det, all_desc;
  for (auto d : kAllDetectors) all_det.emplace_back(to_string(d));
  for (auto d : kAllDescriptors) all_desc.emplace_back(to_string(d));
  std::vector<Dim> order{take("detector", all_det), take("descriptor", all_desc)};
  for (auto& d : dims) order.push_back(std::move(d));

  std::vector<GridPoint> out;
  std::vector<std::size_t> pick(order.size(), 0);
  for (;;) {
    GridPoint g{base, {}};
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& v = order[i].values[pick[i]];
      apply_setting(g.config, order[i].key, v);
      if (i >= 2 && order[i].values.size() > 1) g.params += (g.params.empty() ? "" : ";") + order[i].key + '=' + v;
    }
    out.push_back(std::move(g));
    std::size_t i = order.size();
    while (i > 0 && ++pick[i - 1] == order[i - 1].values.size()) pick[--i] = 0;
    if (i == 0) return out;
  }
}

}  // namespace regpipe
