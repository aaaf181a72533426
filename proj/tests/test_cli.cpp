#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "regpipe/cli/app.hpp"
#include "test_util.hpp"

using namespace regpipe;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(args, {out, err});
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("regpipe_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string file(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_cloud_file(const std::string& name, const PointCloud& c) const {
    const std::string path = file(name);
    write_cloud(c, path, CloudFormat::PlyBinaryLe);
    return path;
  }

  fs::path dir_;
};

PointCloud plane_only() {
  PointCloud c;
  testutil::add_plane(c, -20, 20, -20, 20, 0.0, 0.1);
  return c;
}

}  // namespace

TEST_F(CliTest, SelfRegistrationExitsZero) {
  const std::string cloud = write_cloud_file("scene.ply", testutil::block_scene());
  write_text_file(file("run.cfg"), "# coarse image for speed\nrange_image.angular_resolution = 0.04\n");
  const CliResult r = run_cli({"register", "-c", file("run.cfg"), "--set", "report.timings=false", "--set",
                         "output.transform=" + file("t.txt"), "--set", "output.table=" + file("row.csv"), cloud, cloud});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  const RunReport report = parse_report(r.out);
  EXPECT_FALSE(report.failed());
  EXPECT_LT((report.alignment.transform.matrix() - Eigen::Matrix4d::Identity()).norm(), 1e-6);
  EXPECT_TRUE(parse_transform(read_text_file(file("t.txt"))).matrix().isApprox(report.alignment.transform.matrix(), 0.0));
  // Full effective config is embedded, defaults included.
  EXPECT_EQ(report.config.size(), config_keys().size());
  const std::string row = read_text_file(file("row.csv"));
  EXPECT_EQ(row.substr(0, row.find('\n')), "detector,descriptor,params,pref_keypoints,preg_keypoints,time");
  EXPECT_NE(row.find("\nNARF,FPFH,,"), std::string::npos);
}

TEST_F(CliTest, PlaneSceneExitsTwo) {
  const std::string cloud = write_cloud_file("plane.ply", plane_only());
  const CliResult r = run_cli({"register", "--set", "range_image.angular_resolution=0.04", "--set",
                         "output.report=" + file("report.json"), cloud, cloud});
  EXPECT_EQ(r.code, cli::kFailedAlignment) << r.err;
  const RunReport report = parse_report(read_text_file(file("report.json")));
  EXPECT_TRUE(report.failed());
  EXPECT_EQ(Json::parse(read_text_file(file("report.json"))).at("status"), "F");
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, ErrorsExitOne) {
  const std::string cloud = write_cloud_file("plane.ply", plane_only());
  write_text_file(file("bad.cfg"), "support_radius = 2\nnot_a_key = 3\n");
  CliResult r = run_cli({"register", "-c", file("bad.cfg"), cloud, cloud});
  EXPECT_EQ(r.code, cli::kError);
  EXPECT_NE(r.err.find("not_a_key"), std::string::npos);

  r = run_cli({"register", "--set", "iss.gamma21=2", "--set", "detector=ISS", cloud, cloud});
  EXPECT_EQ(r.code, cli::kError);

  r = run_cli({"register", cloud, file("missing.ply")});
  EXPECT_EQ(r.code, cli::kError);

  // Rejected before any output is written.
  r = run_cli({"register", "--set", "range_image.border_threshold=-1", "--set", "output.report=" + file("r.json"),
               cloud, cloud});
  EXPECT_EQ(r.code, cli::kError);
  EXPECT_FALSE(fs::exists(file("r.json")));

  EXPECT_EQ(run_cli({}).code, cli::kError);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kError);
  EXPECT_EQ(run_cli({"register", cloud}).code, cli::kError);
  EXPECT_EQ(run_cli({"--help"}).code, cli::kSuccess);
  EXPECT_EQ(run_cli({"--version"}).code, cli::kSuccess);
}

TEST_F(CliTest, InvalidMethodParametersExitOne) {
  const std::string cloud = write_cloud_file("scene.ply", testutil::block_scene());
  const CliResult r = run_cli({"register", "--set", "range_image.angular_resolution=0.04", "--set", "detector=SIFT",
                         "--set", "sift.n_octaves=0", cloud, cloud});
  EXPECT_EQ(r.code, cli::kError);
  const CliResult s = run_cli({"register", "--set", "range_image.angular_resolution=0.04", "--set", "detector=HARRIS",
                         "--set", "spin.radial_bins=0", "--set", "descriptor=SPIN", cloud, cloud});
  EXPECT_EQ(s.code, cli::kError);
  EXPECT_NE(s.err.find("error"), std::string::npos);
}

// Grid

TEST_F(CliTest, GridProductAndIsolation) {
  const std::string cloud = write_cloud_file("plane.ply", plane_only());
  write_text_file(file("grid.txt"), "detector = HARRIS, ISS\nsupport_radius = 1.0, 2.5\ndescriptor = SPIN\n");
  std::vector<std::string> seen;
  const cli::GridRunner runner = [&](PreparedCloud&, PreparedCloud&, const GridPoint& p,
                                     const std::vector<CheckSphere>&) {
    seen.push_back(std::string(to_string(p.config.detector)) + "/" + format_double(p.config.support_radius));
    if (p.config.detector == DetectorKind::Iss && p.config.support_radius == 1.0)
      throw std::runtime_error("injected crash");
    BenchmarkRun run = cli::benchmark_row(p.config, p.params);
    run.ref_keypoints = 11;
    run.reg_keypoints = 22;
    AlignmentResult a;
    a.converged = true;
    a.elapsed = 0.5;
    run.alignment = a;
    return run;
  };
  std::ostringstream out, err;
  cli::GridArgs args;
  args.grid = file("grid.txt");
  args.ref = args.reg = cloud;
  args.json = file("table.json");
  ASSERT_EQ(cli::run_grid(args, {out, err}, runner), cli::kSuccess) << err.str();
  EXPECT_EQ(seen, (std::vector<std::string>{"HARRIS/1", "HARRIS/2.5", "ISS/1", "ISS/2.5"}));
  EXPECT_EQ(out.str(),
            "detector,descriptor,params,pref_keypoints,preg_keypoints,time\n"
            "HARRIS,SPIN,support_radius=1.0,11,22,0.500\n"
            "HARRIS,SPIN,support_radius=2.5,11,22,0.500\n"
            "ISS,SPIN,support_radius=1.0,0,0,F\n"
            "ISS,SPIN,support_radius=2.5,11,22,0.500\n");
  const Json j = Json::parse(read_text_file(file("table.json")));
  EXPECT_EQ(j.at("rows").size(), 4u);
  EXPECT_EQ(j.at("rows")[2].at("note"), "injected crash");
  EXPECT_NE(err.str().find("4 combinations, 1 F"), std::string::npos);
}

TEST_F(CliTest, GridOnPlaneIsAllF) {
  const std::string cloud = write_cloud_file("plane.ply", plane_only());
  const CliResult r = run_cli({"grid", "--set", "range_image.angular_resolution=0.04", cloud, cloud});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "F") << line;
  }
  EXPECT_EQ(rows, 12);
}

TEST_F(CliTest, GridUnreadableInputExitsOne) {
  EXPECT_EQ(run_cli({"grid", file("nope.ply"), file("nope.ply")}).code, cli::kError);
  const std::string cloud = write_cloud_file("plane.ply", plane_only());
  write_text_file(file("grid.txt"), "support_radius = 1, banana\n");
  EXPECT_EQ(run_cli({"grid", "-g", file("grid.txt"), cloud, cloud}).code, cli::kError);
}

// Thin subcommands

TEST_F(CliTest, SynthThenEvaluate) {
  SceneSpec small;
  small.extent = 40.0;
  small.density_aerial = 4.0;
  small.density_ground = 9.0;
  small.path_x0 = -10;
  small.path_x1 = 10;
  small.path_radius = 15.0;
  small.boxes = {BoxPrimitive{0.0, 6.0, 0.0, 4.0, 3.0, 1.0, 15.0}};
  write_text_file(file("scene.json"), scene_json(small));
  CliResult r = run_cli({"synth", "--scene", file("scene.json"), "--pose-seed", "3", "--ref", file("ref.ply"), "--reg",
                   file("reg.xyz"), "--truth", file("truth.txt"), "--spheres", file("spheres.txt"), "--scene-out",
                   file("echo.json")});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  EXPECT_EQ(sniff_cloud_format(file("ref.ply")), CloudFormat::PlyBinaryLe);
  EXPECT_EQ(sniff_cloud_format(file("reg.xyz")), CloudFormat::XyzText);
  EXPECT_EQ(read_text_file(file("echo.json")), scene_json(small));
  const SyntheticPair pair = synthetic_pair(small, 3);
  EXPECT_TRUE(parse_transform(read_text_file(file("truth.txt"))).matrix().isApprox(pair.expected().matrix(), 1e-15));
  ASSERT_FALSE(parse_spheres(read_text_file(file("spheres.txt"))).empty());

  // The true transform brings the ground scan onto the aerial one.
  r = run_cli({"evaluate", "--spheres", file("spheres.txt"), "--transform", file("truth.txt"), file("ref.ply"),
               file("reg.xyz")});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  EXPECT_NE(r.out.find(",false\n"), std::string::npos);

  // Without it the scan sits metres away: every sphere fails.
  write_text_file(file("far.txt"), format_transform(RigidTransform(Matrix3::Identity(), Vector3(0, 0, 50))));
  r = run_cli({"evaluate", "--spheres", file("spheres.txt"), "--transform", file("far.txt"), file("ref.ply"),
               file("reg.xyz")});
  EXPECT_EQ(r.code, cli::kFailedAlignment);
  EXPECT_EQ(r.out.find(",false\n"), std::string::npos);

  EXPECT_EQ(run_cli({"evaluate", "--spheres", file("missing.txt"), file("ref.ply"), file("ref.ply")}).code,
            cli::kError);
}

TEST_F(CliTest, DetectDescribeRangeImage) {
  const std::string cloud = write_cloud_file("scene.ply", testutil::block_scene());
  const std::string res = "range_image.angular_resolution=0.04";
  CliResult r = run_cli({"detect", "--set", res, "-o", file("kps.txt"), cloud});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  const auto kps = parse_keypoints(read_text_file(file("kps.txt")));
  EXPECT_FALSE(kps.empty());

  r = run_cli({"describe", "--set", res, "--set", "descriptor=FPFH", cloud, file("kps.txt")});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  std::istringstream csv(r.out);
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 4 + 33);

  r = run_cli({"rangeimage", "--set", res, "-o", file("simple.xyz"), "--pgm", file("img.pgm"), cloud});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  const PointCloud simple = read_cloud(file("simple.xyz"));
  EXPECT_GT(simple.size(), 0u);
  EXPECT_LE(simple.size(), testutil::block_scene().size());
  EXPECT_EQ(read_text_file(file("img.pgm")).substr(0, 3), "P5\n");
}
