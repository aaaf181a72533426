#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <vector>

#include "regpipe/error.hpp"
#include "regpipe/point_cloud.hpp"
#include "regpipe/rigid_transform.hpp"

namespace regpipe {

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Simulated range camera. `orientation` maps camera axes to world axes
/// (columns are the camera x, y and viewing direction in world coordinates).
/// Angles are in degrees.
struct RangeCameraParams {
  Point3 position = Point3::Zero();
  Matrix3 orientation = Matrix3::Identity();
  double angular_resolution = 0.01;
  double fov_x = 0.0;
  double fov_y = 0.0;

  std::size_t width() const { return static_cast<std::size_t>(std::ceil(fov_x / angular_resolution - 1e-9)); }
  std::size_t height() const { return static_cast<std::size_t>(std::ceil(fov_y / angular_resolution - 1e-9)); }

  void validate() const {
    if (!(angular_resolution > 0.0)) fail(ErrorCode::InvalidParams, "angular resolution must be positive");
    if (!(fov_x > 0.0 && fov_x < 180.0 && fov_y > 0.0 && fov_y < 180.0))
      fail(ErrorCode::InvalidParams, "field of view must lie in (0, 180) degrees");
    if (!RigidTransform::is_valid_rotation(orientation))
      fail(ErrorCode::InvalidParams, "camera orientation is not a rotation");
    if (!is_finite(position)) fail(ErrorCode::InvalidParams, "camera position is not finite");
  }

  /// Looking straight down (−Z) with image x along world +X.
  static Matrix3 nadir() {
    Matrix3 r;
    r.col(0) = Vector3::UnitX();
    r.col(1) = -Vector3::UnitY();
    r.col(2) = -Vector3::UnitZ();
    return r;
  }
};

/// Camera above the bounding-box center at five times the longest box edge
/// over the top of the cloud, looking down, with a field of view that just
/// covers the box: 2·atan(0.1) ≈ 11.42°.
inline RangeCameraParams default_camera(const PointCloud& cloud, double angular_resolution = 0.01) {
  if (cloud.empty()) fail(ErrorCode::EmptyCloud, "default_camera on empty cloud");
  const auto box = bounding_box(cloud);
  const double longest = box.extent().maxCoeff();
  if (!(longest > 0.0)) fail(ErrorCode::DegenerateBBox, "bounding box has zero extent");
  RangeCameraParams p;
  const Point3 c = box.center();
  p.position = Point3(c.x(), c.y(), box.max.z() + 5.0 * longest);
  p.orientation = RangeCameraParams::nadir();
  p.angular_resolution = angular_resolution;
  p.fov_x = p.fov_y = 2.0 * rad2deg(std::atan(0.1));
  return p;
}

enum class BorderClass : std::uint8_t { None, ObjectBorder, ShadowBorder, Veil };

struct RangeImage {
  static constexpr std::size_t kNoPoint = std::numeric_limits<std::size_t>::max();

  std::size_t width = 0;
  std::size_t height = 0;
  RangeCameraParams params;
  std::vector<double> range;               // +inf where empty
  std::vector<std::size_t> source_index;   // kNoPoint where empty
  std::vector<BorderClass> border_class;   // empty until borders are detected
  double border_threshold = 0.0;           // range jump used by detect_borders
  std::shared_ptr<const PointCloud> source;

  std::size_t pixel(std::size_t col, std::size_t row) const { return row * width + col; }
  bool filled(std::size_t px) const { return source_index[px] != kNoPoint; }
  bool has_borders() const { return border_class.size() == range.size() && !range.empty(); }
  const Point3& point(std::size_t px) const { return source->points[source_index[px]]; }

  std::size_t filled_count() const {
    std::size_t n = 0;
    for (auto s : source_index) n += s != kNoPoint;
    return n;
  }

  /// Ground footprint of one pixel at the given range.
  double footprint(double at_range) const { return at_range * std::tan(deg2rad(params.angular_resolution)); }
};

/// Angular pixel coordinates of a world point; false when behind the camera
/// or outside the field of view.
inline bool project_point(const RangeCameraParams& p, std::size_t width, std::size_t height,
                          const Point3& world, std::size_t& col, std::size_t& row) {
  const Vector3 cam = p.orientation.transpose() * (world - p.position);
  if (!(cam.z() > 0.0)) return false;
  const double tx = rad2deg(std::atan2(cam.x(), cam.z()));
  const double ty = rad2deg(std::atan2(cam.y(), cam.z()));
  if (std::abs(tx) > 0.5 * p.fov_x || std::abs(ty) > 0.5 * p.fov_y) return false;
  const double fx = std::floor((tx + 0.5 * p.fov_x) / p.angular_resolution);
  const double fy = std::floor((ty + 0.5 * p.fov_y) / p.angular_resolution);
  if (fx < 0 || fy < 0) return false;
  col = static_cast<std::size_t>(fx);
  row = static_cast<std::size_t>(fy);
  return col < width && row < height;
}

/// Z-buffered projection: per pixel keeps the point nearest to the projection
/// center (ties go to the lower point index).
inline RangeImage project(std::shared_ptr<const PointCloud> cloud, const RangeCameraParams& params) {
  params.validate();
  RangeImage img;
  img.params = params;
  img.width = params.width();
  img.height = params.height();
  img.range.assign(img.width * img.height, std::numeric_limits<double>::infinity());
  img.source_index.assign(img.width * img.height, RangeImage::kNoPoint);
  img.source = std::move(cloud);
  const auto& pts = img.source->points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::size_t col, row;
    if (!project_point(params, img.width, img.height, pts[i], col, row)) continue;
    const std::size_t px = img.pixel(col, row);
    const double r = (pts[i] - params.position).norm();
    if (r < img.range[px]) {
      img.range[px] = r;
      img.source_index[px] = i;
    }
  }
  return img;
}

inline RangeImage project(const PointCloud& cloud, const RangeCameraParams& params) {
  return project(std::make_shared<const PointCloud>(cloud), params);
}

/// The surviving original points, in row-major pixel order. When
/// `pixel_of_point` is given it receives the pixel of each output point.
inline PointCloud to_point_cloud(const RangeImage& img, std::vector<std::size_t>* pixel_of_point = nullptr) {
  PointCloud out;
  if (pixel_of_point) pixel_of_point->clear();
  if (!img.source) return out;
  const PointCloud& src = *img.source;
  for (std::size_t px = 0; px < img.source_index.size(); ++px) {
    const std::size_t i = img.source_index[px];
    if (i == RangeImage::kNoPoint) continue;
    out.points.push_back(src.points[i]);
    if (src.has_scalar()) out.scalar.push_back(src.scalar[i]);
    if (src.has_normals()) out.normals.push_back(src.normals[i]);
    if (pixel_of_point) pixel_of_point->push_back(px);
  }
  return out;
}

/// Range-jump borders. A filled pixel is an object border when a 4-neighbor
/// is farther by more than the threshold (empty neighbors count as infinitely
/// far, the image edge does not); the farther filled neighbor becomes a
/// shadow border.
inline RangeImage detect_borders(RangeImage img, double range_jump_threshold = 0.5) {
  if (!(range_jump_threshold > 0.0)) fail(ErrorCode::NonPositiveThreshold, "border threshold must be positive");
  img.border_class.assign(img.range.size(), BorderClass::None);
  img.border_threshold = range_jump_threshold;
  const auto w = static_cast<std::ptrdiff_t>(img.width);
  const auto h = static_cast<std::ptrdiff_t>(img.height);
  constexpr std::ptrdiff_t dc[4] = {1, -1, 0, 0};
  constexpr std::ptrdiff_t dr[4] = {0, 0, 1, -1};
  std::vector<std::uint8_t> shadow(img.range.size(), 0);
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      const std::size_t px = static_cast<std::size_t>(r * w + c);
      if (!img.filled(px)) continue;
      const double here = img.range[px];
      for (int k = 0; k < 4; ++k) {
        const std::ptrdiff_t nc = c + dc[k], nr = r + dr[k];
        if (nc < 0 || nc >= w || nr < 0 || nr >= h) continue;
        const auto npx = static_cast<std::size_t>(nr * w + nc);
        if (img.range[npx] - here > range_jump_threshold) {
          img.border_class[px] = BorderClass::ObjectBorder;
          if (img.filled(npx)) shadow[npx] = 1;
        }
      }
    }
  }
  for (std::size_t px = 0; px < shadow.size(); ++px)
    if (shadow[px] && img.border_class[px] == BorderClass::None) img.border_class[px] = BorderClass::ShadowBorder;
  return img;
}

}  // namespace regpipe
