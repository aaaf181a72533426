#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "regpipe/evaluation.hpp"
#include "regpipe/io/cloud_io.hpp"
#include "regpipe/io/config.hpp"
#include "regpipe/io/files.hpp"
#include "regpipe/io/report.hpp"
#include "regpipe/registration/pipeline.hpp"
#include "regpipe/synth.hpp"

namespace regpipe::cli {

enum ExitCode : int { kSuccess = 0, kError = 1, kFailedAlignment = 2 };

struct Io {
  std::ostream& out;
  std::ostream& err;
};

/// Runs a subcommand body; library errors become exit code 1 with the stage
/// named when there is one.
template <class Fn>
int guarded(Io io, Fn&& body) {
  try {
    return body();
  } catch (const StageError& e) {
    io.err << "error [" << e.stage() << "]: " << e.what() << '\n';
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << '\n';
  }
  return kError;
}

/// Config file (optional) with "key=value" overrides applied on top.
inline PipelineConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  PipelineConfig cfg = path.empty() ? PipelineConfig{} : parse_config(read_text_file(path));
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ConfigError, "--set '" + s + "': expected key=value");
    apply_setting(cfg, trim(std::string_view(s).substr(0, eq)), std::string_view(s).substr(eq + 1));
  }
  return cfg;
}

/// Explicit format if given, else by extension: .xyz/.txt/.asc are text, anything else binary PLY.
inline CloudFormat output_format(const std::string& path, const std::string& requested) {
  if (!requested.empty()) return parse_cloud_format(requested);
  std::string ext = path.substr(std::min(path.size(), path.rfind('.')));
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".xyz" || ext == ".txt" || ext == ".asc" ? CloudFormat::XyzText : CloudFormat::PlyBinaryLe;
}

inline PointCloud load_cloud(const std::string& path, Io io) {
  std::vector<std::string> warnings;
  PointCloud cloud = read_cloud(path, &warnings);
  for (const auto& w : warnings) io.err << "warning: " << path << ": " << w << '\n';
  return cloud;
}

inline std::vector<CheckSphere> load_spheres(const std::string& path) {
  return path.empty() ? std::vector<CheckSphere>{} : parse_spheres(read_text_file(path));
}

/// Sphere accuracy of a run; every sphere fails when the alignment did.
inline std::vector<SphereAccuracy> evaluate_outcome(const PointCloud& ref, const PointCloud& reg,
                                                    const RegistrationOutcome& outcome,
                                                    const std::vector<CheckSphere>& spheres, double max_match) {
  if (!outcome.failure.empty() || !outcome.alignment.converged) {
    std::vector<SphereAccuracy> out(spheres.size());
    for (std::size_t k = 0; k < spheres.size(); ++k) out[k].sphere = spheres[k];
    return out;
  }
  try {
    return evaluate_spheres(ref, apply_transform(reg, outcome.alignment.transform), spheres, max_match);
  } catch (const Error& e) {
    throw StageError("evaluate", e);
  }
}

inline BenchmarkRun benchmark_row(const PipelineConfig& cfg, const std::string& params) {
  BenchmarkRun run;
  run.detector = std::string(to_string(cfg.detector));
  run.descriptor = std::string(to_string(cfg.descriptor));
  run.params = params;
  return run;
}

// register

struct RegisterArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string ref, reg;
};

/// coarse_register then evaluate_spheres. All outputs are built before any is
/// written, so an error never leaves a partial report behind.
inline int run_register(const RegisterArgs& a, Io io) {
  return guarded(io, [&] {
    const PipelineConfig cfg = load_config(a.config, a.sets);
    validate_config(cfg);
    const auto spheres = load_spheres(cfg.sphere_file);
    const PointCloud ref = load_cloud(a.ref, io);
    const PointCloud reg = load_cloud(a.reg, io);
    const RegistrationOutcome outcome = coarse_register(ref, reg, cfg);
    const RunReport report =
        make_report(cfg, outcome, evaluate_outcome(ref, reg, outcome, spheres, cfg.max_match_distance));

    BenchmarkRun row = benchmark_row(cfg, "");
    row.ref_keypoints = outcome.ref_keypoints;
    row.reg_keypoints = outcome.reg_keypoints;
    row.alignment = report.alignment;
    row.spheres = report.spheres;
    row.note = report.failure;

    const std::string json = report_text(report);
    if (cfg.report_path.empty()) io.out << json;
    else write_text_file(cfg.report_path, json);
    if (!cfg.transform_path.empty()) write_text_file(cfg.transform_path, format_transform(report.alignment.transform));
    if (!cfg.table_path.empty()) write_text_file(cfg.table_path, benchmark_csv({row}));

    io.err << to_string(cfg.detector) << '+' << to_string(cfg.descriptor) << ": keypoints " << report.ref_keypoints << '/'
           << report.reg_keypoints << ", inliers " << report.alignment.inlier_count << ", "
           << (report.failed() ? "F (" + report.failure + ")" : std::string("converged")) << '\n';
    return report.failed() ? kFailedAlignment : kSuccess;
  });
}

// grid

using GridRunner = std::function<BenchmarkRun(PreparedCloud& ref, PreparedCloud& reg, const GridPoint& point,
                                              const std::vector<CheckSphere>& spheres)>;

inline BenchmarkRun default_grid_runner(PreparedCloud& ref, PreparedCloud& reg, const GridPoint& point,
                                        const std::vector<CheckSphere>& spheres) {
  validate_config(point.config);
  BenchmarkRun run = benchmark_row(point.config, point.params);
  const RegistrationOutcome outcome = coarse_register(ref, reg, point.config);
  run.ref_keypoints = outcome.ref_keypoints;
  run.reg_keypoints = outcome.reg_keypoints;
  run.alignment = outcome.alignment;
  run.spheres = evaluate_outcome(ref.original(), reg.original(), outcome, spheres, point.config.max_match_distance);
  run.note = outcome.failure;
  return run;
}

/// One row per grid point, in grid order. A row whose run throws keeps its
/// labels, gets no alignment (so it reads "F") and carries the error as note.
inline std::vector<BenchmarkRun> grid_rows(PreparedCloud& ref, PreparedCloud& reg, const std::vector<GridPoint>& points,
                                           const std::vector<CheckSphere>& spheres, const GridRunner& runner) {
  std::vector<BenchmarkRun> rows;
  for (const auto& p : points) {
    try {
      rows.push_back(runner(ref, reg, p, spheres));
    } catch (const std::exception& e) {
      BenchmarkRun run = benchmark_row(p.config, p.params);
      run.spheres.resize(spheres.size());
      for (std::size_t k = 0; k < spheres.size(); ++k) run.spheres[k].sphere = spheres[k];
      run.note = e.what();
      rows.push_back(std::move(run));
    }
  }
  return rows;
}

struct GridArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string grid;  // empty: every detector/descriptor pair
  std::string ref, reg;
  std::string json;  // optional JSON copy of the table
};

/// Exit 0 once the table is written, whatever its rows say; 1 only when the
/// inputs cannot be read.
inline int run_grid(const GridArgs& a, Io io, const GridRunner& runner = default_grid_runner) {
  return guarded(io, [&] {
    const PipelineConfig base = load_config(a.config, a.sets);
    const auto points = expand_grid(a.grid.empty() ? std::string() : read_text_file(a.grid), base);
    const auto spheres = load_spheres(base.sphere_file);
    PreparedCloud ref(load_cloud(a.ref, io));
    PreparedCloud reg(load_cloud(a.reg, io));
    const auto rows = grid_rows(ref, reg, points, spheres, runner);
    const std::string csv = benchmark_csv(rows);
    if (base.table_path.empty()) io.out << csv;
    else write_text_file(base.table_path, csv);
    if (!a.json.empty()) write_text_file(a.json, benchmark_json(rows));
    std::size_t failed = 0;
    for (const auto& r : rows) failed += is_failed(r);
    io.err << rows.size() << " combinations, " << failed << " F\n";
    return kSuccess;
  });
}

// detect / describe / rangeimage

struct DetectArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string cloud;
  std::string output;  // empty: stdout
};

inline int run_detect(const DetectArgs& a, Io io) {
  return guarded(io, [&] {
    PipelineConfig cfg = load_config(a.config, a.sets);
    validate_config(cfg);
    cfg.sync();
    PreparedCloud cloud(load_cloud(a.cloud, io));
    cloud.simplify(cfg.angular_resolution, cfg.border_threshold);
    const auto& kps = cloud.keypoints(cfg);
    const std::string text = format_keypoints(kps);
    if (a.output.empty()) io.out << text;
    else write_text_file(a.output, text);
    io.err << kps.size() << ' ' << to_string(cfg.detector) << " keypoints\n";
    return kSuccess;
  });
}

struct DescribeArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string cloud;
  std::string keypoints;
  std::string output;
};

/// Keypoints are snapped to the nearest simplified point within the support radius first.
inline int run_describe(const DescribeArgs& a, Io io) {
  return guarded(io, [&] {
    PipelineConfig cfg = load_config(a.config, a.sets);
    validate_config(cfg);
    cfg.sync();
    PreparedCloud cloud(load_cloud(a.cloud, io));
    cloud.simplify(cfg.angular_resolution, cfg.border_threshold);
    auto kps = parse_keypoints(read_text_file(a.keypoints));
    for (auto& k : kps) {
      k.detector = cfg.detector;
      if (auto nn = cloud.index().nearest(k.position, cfg.support_radius)) {
        k.position = cloud.simplified().points[nn->index];
        k.source_index = nn->index;
      }
    }
    const auto features = cloud.describe_keypoints(cfg, kps);
    const std::string csv = descriptor_csv(kps, features);
    if (a.output.empty()) io.out << csv;
    else write_text_file(a.output, csv);
    std::size_t valid = 0;
    for (const auto& f : features) valid += f.has_value();
    io.err << valid << " of " << kps.size() << " keypoints described with " << to_string(cfg.descriptor) << '\n';
    return kSuccess;
  });
}

struct RangeImageArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string cloud;
  std::string output;
  std::string format;
  std::string pgm;
};

inline int run_rangeimage(const RangeImageArgs& a, Io io) {
  return guarded(io, [&] {
    const PipelineConfig cfg = load_config(a.config, a.sets);
    validate_config(cfg);
    PreparedCloud cloud(load_cloud(a.cloud, io));
    cloud.simplify(cfg.angular_resolution, cfg.border_threshold);
    write_cloud(cloud.simplified(), a.output, output_format(a.output, a.format));
    if (!a.pgm.empty()) write_text_file(a.pgm, range_image_pgm(cloud.image()));
    io.err << cloud.image().width << 'x' << cloud.image().height << " image, " << cloud.simplified().size() << " of "
           << cloud.original().size() << " points kept\n";
    return kSuccess;
  });
}

// synth / evaluate

struct SynthArgs {
  std::string scene;  // JSON scene file; empty: the default scene
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> pose_seed;  // defaults to the scene seed
  double noise_sigma = 0.05;
  double dropout = 0.2;
  std::string ref, reg, truth;
  std::string spheres;      // optional check-sphere file
  std::string scene_out;    // optional copy of the effective scene
  std::string format;
};

inline int run_synth(const SynthArgs& a, Io io) {
  return guarded(io, [&] {
    SceneSpec spec = a.scene.empty() ? default_scene(a.seed.value_or(1)) : parse_scene(read_text_file(a.scene));
    if (a.seed) spec.seed = *a.seed;
    const std::uint64_t pose_seed = a.pose_seed.value_or(spec.seed);
    const SyntheticPair pair = synthetic_pair(spec, pose_seed, a.noise_sigma, a.dropout);
    write_cloud(pair.reference, a.ref, output_format(a.ref, a.format));
    write_cloud(pair.registered, a.reg, output_format(a.reg, a.format));
    std::string truth = "# transform mapping the registered cloud onto the reference cloud\n";
    truth += "# scene seed " + std::to_string(spec.seed) + ", pose seed " + std::to_string(pose_seed) + ", noise sigma " +
             format_double(a.noise_sigma) + ", dropout " + format_double(a.dropout) + '\n';
    write_text_file(a.truth, truth + format_transform(pair.expected()));
    if (!a.spheres.empty()) {
      std::vector<CheckSphere> spheres;
      for (const auto& c : check_points(spec)) spheres.push_back({c, 2.0});
      write_text_file(a.spheres, format_spheres(spheres));
    }
    if (!a.scene_out.empty()) write_text_file(a.scene_out, scene_json(spec));
    io.err << "reference " << pair.reference.size() << " points, registered " << pair.registered.size() << " points\n";
    return kSuccess;
  });
}

struct EvaluateArgs {
  std::string ref;
  std::string aligned;
  std::string transform;  // optional: applied to `aligned` first
  std::string spheres;
  double max_match = 5.0;
  std::string output;
};

/// Exit 2 when every sphere fails, as a failed alignment would.
inline int run_evaluate(const EvaluateArgs& a, Io io) {
  return guarded(io, [&] {
    const auto spheres = load_spheres(a.spheres);
    if (spheres.empty()) fail(ErrorCode::ConfigError, "no check spheres given");
    const PointCloud ref = load_cloud(a.ref, io);
    PointCloud aligned = load_cloud(a.aligned, io);
    if (!a.transform.empty()) aligned = apply_transform(aligned, parse_transform(read_text_file(a.transform)));
    const auto acc = evaluate_spheres(ref, aligned, spheres, a.max_match);
    const std::string csv = sphere_accuracy_csv(acc);
    if (a.output.empty()) io.out << csv;
    else write_text_file(a.output, csv);
    const bool all_failed = std::all_of(acc.begin(), acc.end(), [](const auto& s) { return s.failed; });
    return all_failed ? kFailedAlignment : kSuccess;
  });
}

// Command line

/// Parses `args` (without the program name) and dispatches.
inline int run(const std::vector<std::string>& args, Io io) {
  CLI::App app{"Coarse registration of aerial and ground point clouds"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "regpipe 0.1.0");

  auto add_config = [](CLI::App* cmd, std::string& config, std::vector<std::string>& sets) {
    cmd->add_option("-c,--config", config, "key=value configuration file");
    cmd->add_option("--set", sets, "override one key, e.g. --set ransac.inlier_threshold=1.0");
  };

  RegisterArgs reg_args;
  auto* reg = app.add_subcommand("register", "align the registered cloud onto the reference cloud");
  add_config(reg, reg_args.config, reg_args.sets);
  reg->add_option("reference", reg_args.ref, "reference cloud")->required();
  reg->add_option("registered", reg_args.reg, "cloud to align")->required();

  GridArgs grid_args;
  auto* grid = app.add_subcommand("grid", "run a parameter sweep and write the benchmark table");
  add_config(grid, grid_args.config, grid_args.sets);
  grid->add_option("-g,--grid", grid_args.grid, "grid file, 'key = v1, v2' per line");
  grid->add_option("--json", grid_args.json, "also write the table as JSON");
  grid->add_option("reference", grid_args.ref, "reference cloud")->required();
  grid->add_option("registered", grid_args.reg, "cloud to align")->required();

  DetectArgs det_args;
  auto* det = app.add_subcommand("detect", "write the keypoints of a cloud");
  add_config(det, det_args.config, det_args.sets);
  det->add_option("-o,--output", det_args.output, "keypoint file (default stdout)");
  det->add_option("cloud", det_args.cloud)->required();

  DescribeArgs desc_args;
  auto* desc = app.add_subcommand("describe", "write descriptors of given keypoints as CSV");
  add_config(desc, desc_args.config, desc_args.sets);
  desc->add_option("-o,--output", desc_args.output, "CSV file (default stdout)");
  desc->add_option("cloud", desc_args.cloud)->required();
  desc->add_option("keypoints", desc_args.keypoints)->required();

  RangeImageArgs ri_args;
  auto* ri = app.add_subcommand("rangeimage", "simplify a cloud through its range image");
  add_config(ri, ri_args.config, ri_args.sets);
  ri->add_option("-o,--output", ri_args.output, "simplified cloud")->required();
  ri->add_option("--format", ri_args.format, "ply_ascii, ply_binary_le or xyz_text");
  ri->add_option("--pgm", ri_args.pgm, "debug image of the ranges");
  ri->add_option("cloud", ri_args.cloud)->required();

  SynthArgs syn_args;
  std::uint64_t seed = 0, pose_seed = 0;
  auto* syn = app.add_subcommand("synth", "generate a synthetic aerial/ground pair");
  syn->add_option("--scene", syn_args.scene, "scene JSON (default: built-in garden)");
  auto* seed_opt = syn->add_option("--seed", seed, "scene seed");
  auto* pose_opt = syn->add_option("--pose-seed", pose_seed, "seed of the planted pose and noise");
  syn->add_option("--sigma", syn_args.noise_sigma, "noise standard deviation (m)")->capture_default_str();
  syn->add_option("--dropout", syn_args.dropout, "fraction of ground points removed")->capture_default_str();
  syn->add_option("--ref", syn_args.ref, "reference (aerial) cloud output")->required();
  syn->add_option("--reg", syn_args.reg, "registered (ground) cloud output")->required();
  syn->add_option("--truth", syn_args.truth, "expected transform output")->required();
  syn->add_option("--spheres", syn_args.spheres, "check-sphere file output");
  syn->add_option("--scene-out", syn_args.scene_out, "scene JSON output");
  syn->add_option("--format", syn_args.format, "cloud format");

  EvaluateArgs ev_args;
  auto* ev = app.add_subcommand("evaluate", "cloud-to-cloud distance inside check spheres");
  ev->add_option("--spheres", ev_args.spheres, "check-sphere file")->required();
  ev->add_option("--transform", ev_args.transform, "transform applied to the aligned cloud first");
  ev->add_option("--max-match", ev_args.max_match, "match cutoff (m)")->capture_default_str();
  ev->add_option("-o,--output", ev_args.output, "CSV file (default stdout)");
  ev->add_option("reference", ev_args.ref)->required();
  ev->add_option("aligned", ev_args.aligned)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, io.out, io.err);
    return code == 0 ? kSuccess : kError;
  }

  if (*reg) return run_register(reg_args, io);
  if (*grid) return run_grid(grid_args, io);
  if (*det) return run_detect(det_args, io);
  if (*desc) return run_describe(desc_args, io);
  if (*ri) return run_rangeimage(ri_args, io);
  if (*syn) {
    if (*seed_opt) syn_args.seed = seed;
    if (*pose_opt) syn_args.pose_seed = pose_seed;
    return run_synth(syn_args, io);
  }
  return run_evaluate(ev_args, io);
}

}  // namespace regpipe::cli
