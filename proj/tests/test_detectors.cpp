#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "regpipe/detectors/harris.hpp"
#include "regpipe/detectors/iss.hpp"
#include "regpipe/detectors/narf.hpp"
#include "regpipe/detectors/sift.hpp"
#include "regpipe/local_surface.hpp"
#include "test_util.hpp"

using namespace regpipe;
using testutil::expect_code;

namespace {

/// Three faces meeting at the origin, each a 4 x 4 m quarter plane.
PointCloud trihedral_corner(double step) {
  PointCloud c;
  for (double a = 0.0; a <= 4.0 + 1e-9; a += step)
    for (double b = 0.0; b <= 4.0 + 1e-9; b += step) {
      c.push_back(Point3(a, b, 0.0));
      if (a > 1e-9) c.push_back(Point3(0.0, a, b));  // skip the shared edges
      if (a > 1e-9 && b > 1e-9) c.push_back(Point3(a, 0.0, b));
    }
  return c;
}

/// Irregular ground with a box on it: no two distances tie exactly, so
/// rounding under a rigid motion cannot flip a comparison.
PointCloud jittered_scene(std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c;
  for (int i = 0; i < 6000; ++i) c.push_back(Point3(rng.uniform(-6, 6), rng.uniform(-6, 6), 0.01 * rng.gaussian()));
  for (int i = 0; i < 1500; ++i) c.push_back(Point3(rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), 2.0 + 0.01 * rng.gaussian()));
  for (int i = 0; i < 1500; ++i) {
    const double t = rng.uniform(0, 14), z = rng.uniform(0, 2);
    if (t < 4) c.push_back(Point3(-2 + t, -1.5, z));
    else if (t < 7) c.push_back(Point3(2, -1.5 + (t - 4), z));
    else if (t < 11) c.push_back(Point3(2 - (t - 7), 1.5, z));
    else c.push_back(Point3(-2, 1.5 - (t - 11), z));
  }
  return c;
}

std::set<std::size_t> sources(const std::vector<Keypoint>& kps) {
  std::set<std::size_t> out;
  for (const auto& k : kps) out.insert(*k.source_index);
  return out;
}

void expect_spacing(const std::vector<Keypoint>& kps, double radius) {
  for (std::size_t a = 0; a < kps.size(); ++a)
    for (std::size_t b = a + 1; b < kps.size(); ++b)
      EXPECT_GT((kps[a].position - kps[b].position).norm(), radius);
}

void expect_inside(const PointCloud& c, const std::vector<Keypoint>& kps) {
  const auto box = bounding_box(c);
  for (const auto& k : kps) {
    EXPECT_TRUE((k.position.array() >= box.min.array()).all() && (k.position.array() <= box.max.array()).all());
    ASSERT_TRUE(k.source_index.has_value());
    EXPECT_EQ(k.position, c.points[*k.source_index]);
  }
}

void expect_equivariant(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b, const RigidTransform& t) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(*a[i].source_index, *b[i].source_index);
    EXPECT_LT((t(a[i].position) - b[i].position).norm(), 1e-6);
    EXPECT_NEAR(a[i].saliency, b[i].saliency, 1e-6 * std::max(1.0, std::abs(a[i].saliency)));
  }
}

RangeCameraParams nadir_camera(double height, double fov, double res) {
  RangeCameraParams p;
  p.position = Point3(0, 0, height);
  p.orientation = RangeCameraParams::nadir();
  p.angular_resolution = res;
  p.fov_x = p.fov_y = fov;
  return p;
}

PointCloud ground_and_box(double cx, double cy, double sx, double sy) {
  PointCloud c;
  testutil::add_plane(c, -10, 10, -10, 10, 0.0, 0.05);
  testutil::add_box(c, cx, cy, sx, sy, 5.0, 0.05);
  return c;
}

}  // namespace

// Harris

TEST(Harris, PlaneHasNoKeypoints) {
  PointCloud c;
  testutil::add_plane(c, 0, 10, 0, 10, 0.0, 0.1);
  c = estimate_normals(c, 0.3);
  EXPECT_TRUE(detect_harris(c, HarrisParams{}).empty());
}

TEST(Harris, CubeCornerGivesOneKeypoint) {
  const PointCloud c = estimate_normals(trihedral_corner(0.1), 0.25);
  const auto all = detect_harris(c, HarrisParams{});
  // The patch's own outer crease ends are corners too; only look near the cube corner.
  std::vector<Keypoint> kps;
  for (const auto& k : all) {
    if (k.position.norm() < 3.0) kps.push_back(k);
    else EXPECT_GT(k.position.norm(), 3.9);
  }
  ASSERT_EQ(kps.size(), 1u);
  EXPECT_LT(kps[0].position.norm(), 0.5);
  EXPECT_EQ(kps[0].detector, DetectorKind::Harris);

  // Response at the corner beats every point on the edge between two faces.
  const SpatialIndex index(c);
  std::vector<std::size_t> nbrs;
  index.radius_search(kps[0].position, 2.0, nbrs);
  const double corner = harris_response(c, *kps[0].source_index, nbrs, 0.04);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c.points[i];
    if (p.z() == 0.0 && p.y() == 0.0 && p.x() > 2.5) {
      index.radius_search(p, 2.0, nbrs);
      EXPECT_LT(harris_response(c, i, nbrs, 0.04), corner);
    }
  }
}

TEST(Harris, Errors) {
  PointCloud c;
  c.push_back(Point3::Zero());
  expect_code([&] { detect_harris(c, HarrisParams{}); }, ErrorCode::MissingNormals);
  c = estimate_normals(c, 1.0);
  HarrisParams p;
  p.support_radius = 0.0;
  expect_code([&] { detect_harris(c, p); }, ErrorCode::NonPositiveRadius);
  p = HarrisParams{};
  p.non_max_radius = -1.0;
  expect_code([&] { detect_harris(c, p); }, ErrorCode::NonPositiveRadius);
}

TEST(Harris, InvariantsOnScene) {
  const PointCloud c = estimate_normals(jittered_scene(5), 0.5);
  HarrisParams p;
  const auto kps = detect_harris(c, p);
  ASSERT_FALSE(kps.empty());
  expect_inside(c, kps);
  expect_spacing(kps, p.non_max_radius);
  EXPECT_EQ(sources(kps), sources(detect_harris(c, p)));

  // Raising the threshold only removes keypoints.
  auto prev = sources(kps);
  for (double th : {1e-3, 1e-2, 3e-2, 1e-1}) {
    p.threshold = th;
    const auto cur = sources(detect_harris(c, p));
    EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end())) << th;
    prev = cur;
  }
}

TEST(Harris, RigidEquivariance) {
  Rng rng(17);
  const PointCloud base = jittered_scene(6);
  const auto a = detect_harris(estimate_normals(base, 0.5), HarrisParams{});
  ASSERT_FALSE(a.empty());
  for (int trial = 0; trial < 3; ++trial) {
    const auto t = testutil::random_rigid(rng);
    const auto b = detect_harris(estimate_normals(apply_transform(base, t), 0.5), HarrisParams{});
    expect_equivariant(a, b, t);
  }
}

// ISS

TEST(Iss, PlaneHasNoKeypoints) {
  PointCloud c;
  testutil::add_plane(c, 0, 10, 0, 10, 0.0, 0.1);
  EXPECT_TRUE(detect_iss(c, IssParams{}).empty());
}

TEST(Iss, BlobOnPlane) {
  // Slightly elongated: a round blob has λ1 = λ2 at its top and fails gamma21.
  PointCloud c;
  for (double x = -10; x <= 10 + 1e-9; x += 0.1)
    for (double y = -10; y <= 10 + 1e-9; y += 0.1)
      c.push_back(Point3(x, y, std::exp(-x * x / (2 * 0.6 * 0.6) - y * y / (2 * 0.8 * 0.8))));
  IssParams p;
  const auto kps = detect_iss(c, p);
  ASSERT_FALSE(kps.empty());
  bool near_blob = false;
  for (const auto& k : kps) {
    const double r = k.position.head<2>().norm();
    near_blob |= r < 1.0;
    EXPECT_LT(r, 2.0 + 3.0 * 0.8) << k.position.transpose();  // nothing on the open plane
  }
  EXPECT_TRUE(near_blob);
}

TEST(Iss, GammaMonotone) {
  const PointCloud c = jittered_scene(7);
  IssParams p;
  std::size_t prev = 0;
  std::set<std::size_t> prev_set;
  for (double g : {0.3, 0.5, 0.7, 0.9, 0.975, 0.999}) {
    p.gamma21 = p.gamma32 = g;
    const auto cur = sources(detect_iss(c, p));
    EXPECT_GE(cur.size(), prev) << g;
    EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev_set.begin(), prev_set.end())) << g;
    prev = cur.size();
    prev_set = cur;
  }
  EXPECT_GT(prev, 0u);
}

TEST(Iss, InvariantsAndEquivariance) {
  Rng rng(23);
  const PointCloud c = jittered_scene(8);
  IssParams p;
  const auto a = detect_iss(c, p);
  ASSERT_FALSE(a.empty());
  expect_inside(c, a);
  expect_spacing(a, p.non_max_radius);
  EXPECT_EQ(sources(a), sources(detect_iss(c, p)));
  for (int trial = 0; trial < 3; ++trial) {
    const auto t = testutil::random_rigid(rng);
    expect_equivariant(a, detect_iss(apply_transform(c, t), p), t);
  }
}

TEST(Iss, Errors) {
  PointCloud c;
  c.push_back(Point3::Zero());
  IssParams p;
  for (double g : {0.0, 1.0, -0.5, 1.5}) {
    p.gamma21 = g;
    expect_code([&] { detect_iss(c, p); }, ErrorCode::InvalidGamma);
  }
  p = IssParams{};
  p.gamma32 = 1.0;
  expect_code([&] { detect_iss(c, p); }, ErrorCode::InvalidGamma);
  p = IssParams{};
  p.support_radius = -2.0;
  expect_code([&] { detect_iss(c, p); }, ErrorCode::NonPositiveRadius);
}

// SIFT

namespace {

PointCloud scalar_plane(double blob_sigma, double amplitude) {
  PointCloud c;
  testutil::add_plane(c, -6, 6, -6, 6, 0.0, 0.1);
  for (const auto& p : c.points)
    c.scalar.push_back(amplitude * std::exp(-p.squaredNorm() / (2 * blob_sigma * blob_sigma)));
  return c;
}

SiftParams blob_params() {
  SiftParams p;
  p.min_scale = 0.25;
  p.n_octaves = 3;
  p.scales_per_octave = 4;
  return p;
}

}  // namespace

TEST(Sift, ConstantFieldHasNoKeypoints) {
  PointCloud c = scalar_plane(1.0, 0.0);
  std::fill(c.scalar.begin(), c.scalar.end(), 0.4);
  EXPECT_TRUE(detect_sift(c, blob_params()).empty());
}

TEST(Sift, BlobAtItsScale) {
  const double blob = 1.0;
  const auto kps = detect_sift(scalar_plane(blob, 1.0), blob_params());
  ASSERT_FALSE(kps.empty());
  const auto best = std::max_element(kps.begin(), kps.end(),
                                     [](const Keypoint& a, const Keypoint& b) { return a.saliency < b.saliency; });
  EXPECT_LT(best->position.norm(), 0.15);
  EXPECT_GE(best->scale, blob / 2);
  EXPECT_LE(best->scale, blob * 2);
  EXPECT_EQ(best->detector, DetectorKind::Sift);
  // Scale-normalized DoG of a unit blob peaks near 1/2.
  EXPECT_GT(best->saliency, 0.3);
  EXPECT_LT(best->saliency, 0.7);
}

TEST(Sift, ContrastAboveOneRemovesAll) {
  auto p = blob_params();
  p.min_contrast = 1.1;
  EXPECT_TRUE(detect_sift(scalar_plane(1.0, 1.0), p).empty());
}

TEST(Sift, ThresholdMonotoneAndEquivariant) {
  Rng rng(41);
  const PointCloud c = compute_sphericity(jittered_scene(9), 0.5);
  SiftParams p;
  p.min_scale = 0.3;
  p.n_octaves = 2;
  p.scales_per_octave = 3;
  p.min_contrast = 0.05;
  const auto a = detect_sift(c, p);
  ASSERT_FALSE(a.empty());
  expect_inside(c, a);
  auto prev = sources(a);
  for (double th : {0.1, 0.2, 0.4}) {
    p.min_contrast = th;
    const auto cur = sources(detect_sift(c, p));
    EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end())) << th;
    prev = cur;
  }
  p.min_contrast = 0.05;
  const auto t = testutil::random_rigid(rng);
  PointCloud moved = apply_transform(c, t);
  moved.scalar = c.scalar;
  expect_equivariant(a, detect_sift(moved, p), t);
}

TEST(Sift, Errors) {
  PointCloud c;
  c.push_back(Point3::Zero());
  c.push_back(Point3(1, 0, 0));
  expect_code([&] { detect_sift(c, SiftParams{}); }, ErrorCode::MissingScalar);
  c.scalar = {0.5, 1.5};
  expect_code([&] { detect_sift(c, SiftParams{}); }, ErrorCode::MissingScalar);
  c.scalar = {0.5, 0.5};
  SiftParams p;
  p.min_scale = -1.0;
  expect_code([&] { detect_sift(c, p); }, ErrorCode::NonPositiveScale);
  p = SiftParams{};
  p.n_octaves = 0;
  expect_code([&] { detect_sift(c, p); }, ErrorCode::NonPositiveScale);
  p = SiftParams{};
  p.support_radius = 0.0;
  expect_code([&] { detect_sift(c, p); }, ErrorCode::NonPositiveRadius);
}

// NARF

TEST(Narf, FlatGroundHasNoKeypoints) {
  PointCloud c;
  testutil::add_plane(c, -10, 10, -10, 10, 0.0, 0.05);
  const auto img = detect_borders(project(c, nadir_camera(60.0, 16.0, 0.1)), 0.5);
  EXPECT_TRUE(detect_narf(img, NarfDetectorParams{}).empty());
}

TEST(Narf, BoxRoofCorners) {
  const PointCloud c = ground_and_box(1.0, -0.5, 8.0, 6.0);
  const auto img = detect_borders(project(c, nadir_camera(60.0, 18.0, 0.1)), 0.5);
  NarfDetectorParams p;
  const auto kps = detect_narf(img, p);
  ASSERT_FALSE(kps.empty());
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0}) {
      const Point3 corner(1.0 + sx * 4.0, -0.5 + sy * 3.0, 5.0);
      double best = 1e9;
      for (const auto& k : kps) best = std::min(best, (k.position - corner).norm());
      EXPECT_LE(best, p.support_radius) << corner.transpose();
    }
  expect_spacing(kps, p.non_max_radius);
  for (const auto& k : kps) {
    EXPECT_GT(k.saliency, p.threshold);
    EXPECT_LE(k.saliency, 1.0);
  }
}

TEST(Narf, QuarterTurnAboutCameraAxis) {
  const PointCloud c = ground_and_box(1.0, -0.5, 8.0, 6.0);
  const auto cam = nadir_camera(60.0, 24.0, 0.1);
  const auto quarter = axis_angle_transform(Vector3::UnitZ(), std::numbers::pi / 2);
  const auto a = detect_narf(detect_borders(project(c, cam), 0.5), NarfDetectorParams{});
  const auto b = detect_narf(detect_borders(project(apply_transform(c, quarter), cam), 0.5), NarfDetectorParams{});
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a.size(), b.size());
  const double footprint = 60.0 * std::tan(deg2rad(0.1));
  for (const auto& k : a) {
    double best = 1e9;
    for (const auto& m : b) best = std::min(best, (quarter(k.position) - m.position).norm());
    EXPECT_LE(best, footprint + 1e-9) << k.position.transpose();
  }
}

TEST(Narf, ThresholdMonotone) {
  const PointCloud c = ground_and_box(-2.0, 1.0, 5.0, 7.0);
  const auto img = detect_borders(project(c, nadir_camera(60.0, 18.0, 0.1)), 0.5);
  NarfDetectorParams p;
  std::set<std::size_t> prev;
  bool first = true;
  for (double th : {0.3, 0.4, 0.5, 0.6, 0.7}) {
    p.threshold = th;
    const auto cur = sources(detect_narf(img, p));
    if (!first) {
      EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end())) << th;
    }
    prev = cur;
    first = false;
  }
  EXPECT_EQ(sources(detect_narf(img, p)), prev);
}

TEST(Narf, Errors) {
  PointCloud c;
  c.push_back(Point3::Zero());
  const auto img = project(c, nadir_camera(10.0, 4.0, 0.5));
  expect_code([&] { detect_narf(img, NarfDetectorParams{}); }, ErrorCode::BordersMissing);
  NarfDetectorParams p;
  p.support_radius = 0.0;
  expect_code([&] { detect_narf(detect_borders(img, 0.5), p); }, ErrorCode::NonPositiveRadius);
}
