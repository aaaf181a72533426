#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "regpipe/error.hpp"
#include "regpipe/point_cloud.hpp"
#include "regpipe/random.hpp"
#include "regpipe/range_image.hpp"
#include "regpipe/rigid_transform.hpp"

namespace regpipe {

struct BoxPrimitive {
  double x = 0.0, y = 0.0;  // footprint center
  double base = 0.0;        // bottom height
  double size_x = 1.0, size_y = 1.0, height = 1.0;
  double yaw_deg = 0.0;
};

struct EllipsoidPrimitive {
  Point3 center = Point3::Zero();
  double rx = 1.0, ry = 1.0, rz = 1.0;
};

struct CylinderPrimitive {
  double x = 0.0, y = 0.0, base = 0.0;
  double radius = 0.3, height = 3.0;
};

/// A flat scene on a horizontal ground plane.
struct SceneSpec {
  std::uint64_t seed = 1;
  double extent = 200.0;  // side of the square ground plane, centered on the origin
  double ground_z = 0.0;
  double density_aerial = 100.0;
  double density_ground = 300.0;
  double path_x0 = -45.0, path_y0 = 0.0, path_x1 = 45.0, path_y1 = 0.0;
  double path_radius = 50.0;
  double sensor_height = 2.0;
  std::vector<BoxPrimitive> boxes;
  std::vector<EllipsoidPrimitive> ellipsoids;
  std::vector<CylinderPrimitive> cylinders;

  void validate() const {
    auto bad = [](const std::string& what) { fail(ErrorCode::InvalidSpec, what); };
    if (!(extent > 0.0)) bad("extent must be positive");
    if (!(density_aerial > 0.0 && density_ground > 0.0)) bad("densities must be positive");
    if (!(path_radius > 0.0)) bad("path radius must be positive");
    for (const auto& b : boxes)
      if (!(b.size_x > 0.0 && b.size_y > 0.0 && b.height > 0.0)) bad("box sizes must be positive");
    for (const auto& e : ellipsoids)
      if (!(e.rx > 0.0 && e.ry > 0.0 && e.rz > 0.0)) bad("ellipsoid radii must be positive");
    for (const auto& c : cylinders)
      if (!(c.radius > 0.0 && c.height > 0.0)) bad("cylinder sizes must be positive");
  }
};

enum class Viewpoint { Aerial, Ground };

constexpr std::string_view to_string(Viewpoint v) { return v == Viewpoint::Aerial ? "aerial" : "ground"; }

/// 200 m garden around a 90 m path. Three low boxes and four trees stand in
/// the ground scanner's corridor; the tall building and the other eight trees
/// are only seen from the air.
inline SceneSpec default_scene(std::uint64_t seed = 1) {
  SceneSpec s;
  s.seed = seed;
  s.boxes = {
      {-30.0, 72.0, 0.0, 16.0, 10.0, 8.0, 0.0},
      {10.0, -12.0, 0.0, 5.0, 3.0, 1.2, 20.0},
      {30.0, 15.0, 0.0, 8.0, 2.0, 1.6, -35.0},
      {-12.0, -28.0, 0.0, 4.0, 4.0, 1.0, 10.0},
  };
  const double trees[12][3] = {{-40, -10, 3.5}, {18, 5, 3.6},   {0, 38, 3.0},  {-28, -35, 4.0},
                               {-70, 65, 3.0},  {-35, 72, 3.6},  {5, 68, 4.0},  {45, 80, 3.2},
                               {75, 60, 3.4},   {-60, -75, 3.8}, {10, -70, 3.3}, {60, -85, 3.6}};
  // Crowns are stretched along x or y in turn, so their outlines have ends.
  for (std::size_t i = 0; i < std::size(trees); ++i) {
    const auto& t = trees[i];
    const double trunk = 3.0;
    const double rx = i % 2 == 0 ? t[2] : 0.6 * t[2];
    const double ry = i % 2 == 0 ? 0.6 * t[2] : t[2];
    s.cylinders.push_back({t[0], t[1], 0.0, 0.3, trunk + 0.5 * t[2]});
    s.ellipsoids.push_back({Point3(t[0], t[1], trunk + 0.8 * t[2]), rx, ry, 0.8 * t[2]});
  }
  return s;
}

namespace detail {

struct OrientedSample {
  Point3 p;
  Vector3 n;
};

/// Jittered grid over [0, a) × [0, b) with one sample per cell of side
/// 1/sqrt(density), offset by up to half a cell, so any strip wider than 1.5
/// cells holds a sample.
template <class Emit>
void jittered_grid(double a, double b, double density, Rng& rng, Emit&& emit) {
  const auto na = static_cast<std::size_t>(std::max(1.0, std::round(a * std::sqrt(density))));
  const auto nb = static_cast<std::size_t>(std::max(1.0, std::round(b * std::sqrt(density))));
  const double ca = a / static_cast<double>(na), cb = b / static_cast<double>(nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      const double u = (static_cast<double>(i) + 0.25 + 0.5 * rng.uniform()) * ca;
      const double v = (static_cast<double>(j) + 0.25 + 0.5 * rng.uniform()) * cb;
      emit(u, v);
    }
}

inline Point3 closest_on_segment(const SceneSpec& s, const Point3& p) {
  const Eigen::Vector2d a(s.path_x0, s.path_y0), b(s.path_x1, s.path_y1), q(p.x(), p.y());
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  const Eigen::Vector2d c = a + t * ab;
  return Point3(c.x(), c.y(), s.ground_z + s.sensor_height);
}

inline bool near_path(const SceneSpec& s, const Point3& p) {
  const Point3 c = closest_on_segment(s, p);
  return std::hypot(p.x() - c.x(), p.y() - c.y()) <= s.path_radius;
}

/// Surface faces towards the path sensor.
inline bool faces_path(const SceneSpec& s, const Point3& p, const Vector3& n) {
  return n.dot(closest_on_segment(s, p) - p) > 0.0;
}

inline bool in_footprint(const BoxPrimitive& b, double x, double y) {
  const double c = std::cos(deg2rad(b.yaw_deg)), sn = std::sin(deg2rad(b.yaw_deg));
  const double dx = x - b.x, dy = y - b.y;
  const double u = c * dx + sn * dy, v = -sn * dx + c * dy;
  return std::abs(u) <= 0.5 * b.size_x && std::abs(v) <= 0.5 * b.size_y;
}

}  // namespace detail

/// Samples the scene as seen from one platform. Aerial: ground (except under
/// boxes), box roofs and the upper halves of crowns. Ground: everything within
/// path_radius of the path that faces it (walls, trunks), roofs below the
/// sensor height, the ground and the undersides of crowns.
inline PointCloud generate_scene(const SceneSpec& spec, Viewpoint view) {
  spec.validate();
  const bool aerial = view == Viewpoint::Aerial;
  const double density = aerial ? spec.density_aerial : spec.density_ground;
  Rng rng(derive_seed(spec.seed, aerial ? 1 : 2));
  PointCloud out;
  auto keep = [&](const Point3& p) {
    if (!aerial && !detail::near_path(spec, p)) return;
    out.points.push_back(p);
  };

  // Ground plane; the ground view only covers the path corridor.
  double x0 = -0.5 * spec.extent, y0 = -0.5 * spec.extent, w = spec.extent, h = spec.extent;
  if (!aerial) {
    const double r = spec.path_radius;
    const double lx = std::max(x0, std::min(spec.path_x0, spec.path_x1) - r);
    const double hx = std::min(x0 + w, std::max(spec.path_x0, spec.path_x1) + r);
    const double ly = std::max(y0, std::min(spec.path_y0, spec.path_y1) - r);
    const double hy = std::min(y0 + h, std::max(spec.path_y0, spec.path_y1) + r);
    x0 = lx;
    y0 = ly;
    w = std::max(0.0, hx - lx);
    h = std::max(0.0, hy - ly);
  }
  detail::jittered_grid(w, h, density, rng, [&](double u, double v) {
    const double x = x0 + u, y = y0 + v;
    for (const auto& b : spec.boxes)
      if (detail::in_footprint(b, x, y)) return;
    keep(Point3(x, y, spec.ground_z));
  });

  for (const auto& b : spec.boxes) {
    const double c = std::cos(deg2rad(b.yaw_deg)), sn = std::sin(deg2rad(b.yaw_deg));
    const Vector3 ex(c, sn, 0.0), ey(-sn, c, 0.0);
    const Point3 center(b.x, b.y, b.base);
    const double top = b.base + b.height;
    if (aerial || top < spec.ground_z + spec.sensor_height) {
      detail::jittered_grid(b.size_x, b.size_y, density, rng, [&](double u, double v) {
        keep(center + (u - 0.5 * b.size_x) * ex + (v - 0.5 * b.size_y) * ey + Vector3(0, 0, b.height));
      });
    }
    if (aerial) continue;
    // Four walls: (outward normal, along-wall axis, wall length, offset).
    const std::array<std::tuple<Vector3, Vector3, double, double>, 4> walls = {{
        {ex, ey, b.size_y, 0.5 * b.size_x},
        {-ex, ey, b.size_y, 0.5 * b.size_x},
        {ey, ex, b.size_x, 0.5 * b.size_y},
        {-ey, ex, b.size_x, 0.5 * b.size_y},
    }};
    for (const auto& [n, along, len, off] : walls) {
      detail::jittered_grid(len, b.height, density, rng, [&](double u, double v) {
        const Point3 p = center + off * n + (u - 0.5 * len) * along + Vector3(0, 0, v);
        if (detail::faces_path(spec, p, n)) keep(p);
      });
    }
  }

  if (!aerial) {
    for (const auto& cyl : spec.cylinders) {
      detail::jittered_grid(2.0 * std::numbers::pi * cyl.radius, cyl.height, density, rng, [&](double u, double v) {
        const double phi = u / cyl.radius;
        const Vector3 n(std::cos(phi), std::sin(phi), 0.0);
        const Point3 p = Point3(cyl.x, cyl.y, cyl.base + v) + cyl.radius * n;
        if (detail::faces_path(spec, p, n)) keep(p);
      });
    }
  }

  for (const auto& e : spec.ellipsoids) {
    // Fibonacci lattice on the unit sphere, stretched to the radii. Unlike a
    // grid over (azimuth, height) it leaves no gap at the poles.
    const double r = std::cbrt(e.rx * e.ry * e.rz);
    const auto count = static_cast<std::size_t>(std::max(1.0, std::round(density * 4.0 * std::numbers::pi * r * r)));
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    for (std::size_t i = 0; i < count; ++i) {
      const double t = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(count);
      const double phi = phase + golden * static_cast<double>(i);
      const double s = std::sqrt(std::max(0.0, 1.0 - t * t));
      const Point3 p = e.center + Vector3(e.rx * s * std::cos(phi), e.ry * s * std::sin(phi), e.rz * t);
      const Vector3 n = Vector3((p.x() - e.center.x()) / (e.rx * e.rx), (p.y() - e.center.y()) / (e.ry * e.ry),
                                (p.z() - e.center.z()) / (e.rz * e.rz))
                            .normalized();
      if (aerial ? n.z() > 0.0 : n.z() <= 0.5) keep(p);
    }
  }
  return out;
}

/// Check-sphere centers both platforms see: the first footprint corner of
/// each box and the base of each trunk inside the ground scanner's corridor.
inline std::vector<Point3> check_points(const SceneSpec& s) {
  std::vector<Point3> out;
  for (const auto& b : s.boxes) {
    const double c = std::cos(deg2rad(b.yaw_deg)), sn = std::sin(deg2rad(b.yaw_deg));
    const double u = -0.5 * b.size_x, v = -0.5 * b.size_y;
    const Point3 p(b.x + c * u - sn * v, b.y + sn * u + c * v, s.ground_z);
    if (detail::near_path(s, p)) out.push_back(p);
  }
  for (const auto& t : s.cylinders) {
    const Point3 p(t.x, t.y, s.ground_z);
    if (detail::near_path(s, p)) out.push_back(p);
  }
  return out;
}

struct GroundTruth {
  RigidTransform transform;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Moves the cloud by the planted transform, adds isotropic Gaussian noise and
/// drops exactly round(fraction · n) points chosen by the seed.
inline PointCloud perturb(const PointCloud& cloud, const GroundTruth& truth, double dropout_fraction) {
  if (!(dropout_fraction >= 0.0 && dropout_fraction < 1.0))
    fail(ErrorCode::InvalidFraction, "dropout fraction must lie in [0, 1)");
  if (!(truth.noise_sigma >= 0.0)) fail(ErrorCode::InvalidParams, "noise sigma must be non-negative");
  PointCloud moved = apply_transform(cloud, truth.transform);
  if (truth.noise_sigma > 0.0) {
    Rng rng(derive_seed(truth.seed, 11));
    for (auto& p : moved.points)
      for (int a = 0; a < 3; ++a) p[a] += truth.noise_sigma * rng.gaussian();
  }
  const auto drop = static_cast<std::size_t>(std::llround(dropout_fraction * static_cast<double>(moved.size())));
  if (drop == 0) return moved;
  // Partial Fisher-Yates picks the dropped indices.
  std::vector<std::size_t> order(moved.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(truth.seed, 12));
  for (std::size_t i = 0; i < drop; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
  std::vector<char> dropped(moved.size(), 0);
  for (std::size_t i = 0; i < drop; ++i) dropped[order[i]] = 1;
  std::vector<std::size_t> kept;
  kept.reserve(moved.size() - drop);
  for (std::size_t i = 0; i < moved.size(); ++i)
    if (!dropped[i]) kept.push_back(i);
  return moved.subset(kept);
}

struct PoseError {
  double rotation_deg = 0.0;
  double translation = 0.0;
};

/// Error transform E = estimated ∘ truth⁻¹: its rotation angle in degrees and
/// the length of its translation.
inline PoseError pose_error(const RigidTransform& estimated, const RigidTransform& truth) {
  const RigidTransform e = estimated * truth.inverse();
  const double c = std::clamp((e.rotation().trace() - 1.0) / 2.0, -1.0, 1.0);
  return {rad2deg(std::acos(c)), e.translation().norm()};
}

/// Planted pose for the end-to-end experiments: yaw within ±max_yaw, a small
/// tilt, and a horizontal/vertical shift within max_shift.
inline RigidTransform random_pose(Rng& rng, double max_yaw_deg = 30.0, double max_tilt_deg = 2.0,
                                  double max_shift = 20.0) {
  const double yaw = deg2rad(rng.uniform(-max_yaw_deg, max_yaw_deg));
  const double tilt = deg2rad(rng.uniform(0.0, max_tilt_deg));
  const double tilt_dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const Eigen::Matrix3d r = (Eigen::AngleAxisd(tilt, Vector3(std::cos(tilt_dir), std::sin(tilt_dir), 0.0)) *
                             Eigen::AngleAxisd(yaw, Vector3::UnitZ()))
                                .toRotationMatrix();
  Vector3 t;
  do {
    t = Vector3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)) * max_shift;
  } while (t.norm() > max_shift);
  return RigidTransform(r, t);
}

/// Aerial reference plus a moved, noisy, thinned ground scan of one scene.
struct SyntheticPair {
  PointCloud reference;
  PointCloud registered;
  GroundTruth truth;

  /// The transform registration should find (registered onto reference).
  RigidTransform expected() const { return truth.transform.inverse(); }
};

inline SyntheticPair synthetic_pair(const SceneSpec& spec, std::uint64_t pose_seed, double noise_sigma = 0.05,
                                    double dropout_fraction = 0.2) {
  SyntheticPair out;
  out.reference = generate_scene(spec, Viewpoint::Aerial);
  Rng rng(derive_seed(pose_seed, 99));
  out.truth = GroundTruth{random_pose(rng), noise_sigma, pose_seed};
  out.registered = perturb(generate_scene(spec, Viewpoint::Ground), out.truth, dropout_fraction);
  return out;
}

}  // namespace regpipe
