#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include "regpipe/detectors/keypoint.hpp"
#include "regpipe/range_image.hpp"

namespace regpipe {

struct NarfDetectorParams : DetectorParams {
  double threshold = 0.5;
  double border_weight = 0.5;
  double surface_weight = 0.5;
  int direction_window = 2;  // half-size in pixels for border directions
  int min_far_pixels = 3;    // fewer far pixels in the window: a sampling hole, no direction
};

/// Per-pixel interest values and the resulting keypoints.
struct NarfInterest {
  std::vector<double> score;  // NaN for empty pixels
  std::vector<Keypoint> keypoints;
  std::vector<std::size_t> keypoint_pixels;
};

namespace detail {

/// Pixel (c, r) lies beyond an occluding border as seen from pixel `from`:
/// off-image, empty, or farther by more than the border threshold.
inline bool beyond(const RangeImage& img, std::ptrdiff_t c, std::ptrdiff_t r, std::size_t from) {
  if (c < 0 || r < 0 || c >= static_cast<std::ptrdiff_t>(img.width) || r >= static_cast<std::ptrdiff_t>(img.height))
    return true;
  const std::size_t q = static_cast<std::size_t>(r) * img.width + static_cast<std::size_t>(c);
  if (!img.filled(q)) return true;
  return img.range[q] - img.range[from] > img.border_threshold;
}

}  // namespace detail

/// Interest score in [0, 1] per filled pixel:
///   border term:  fraction of the support disk (image plane, support_radius
///                  at the pixel's range) lying beyond an occluding border;
///   surface term: circular dispersion of the border directions within
///                  support_radius (3D), 0 along a straight border and 1 where
///                  perpendicular borders meet.
/// Keypoints are strict local maxima above `threshold`; shadow borders are
/// never keypoints.
inline NarfInterest narf_interest(const RangeImage& img, const NarfDetectorParams& params) {
  params.validate();
  if (!img.has_borders()) fail(ErrorCode::BordersMissing, "NARF needs detect_borders first");
  const auto w = static_cast<std::ptrdiff_t>(img.width);
  const auto h = static_cast<std::ptrdiff_t>(img.height);
  const std::size_t n = img.range.size();
  const double radius = params.support_radius;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  // Border directions as doubled angles (orientation, not sign, matters).
  std::vector<std::complex<double>> dir(n, {0.0, 0.0});
  std::vector<std::uint32_t> border_sat((img.width + 1) * (img.height + 1), 0);
  const int dw = params.direction_window;
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      const std::size_t px = static_cast<std::size_t>(r * w + c);
      const bool border = img.border_class[px] == BorderClass::ObjectBorder;
      border_sat[(r + 1) * (w + 1) + (c + 1)] = border + border_sat[r * (w + 1) + (c + 1)] +
                                                border_sat[(r + 1) * (w + 1) + c] - border_sat[r * (w + 1) + c];
      if (!border) continue;
      double sx = 0.0, sy = 0.0;
      int far = 0;
      for (int a = -dw; a <= dw; ++a)
        for (int b = -dw; b <= dw; ++b)
          if (detail::beyond(img, c + b, r + a, px)) {
            sx += b;
            sy += a;
            ++far;
          }
      const double len = std::hypot(sx, sy);
      if (far >= params.min_far_pixels && len > 0.0) {
        const std::complex<double> u(sx / len, sy / len);
        dir[px] = u * u;
      }
    }
  }
  auto borders_in = [&](std::ptrdiff_t c0, std::ptrdiff_t r0, std::ptrdiff_t c1, std::ptrdiff_t r1) {
    c0 = std::max<std::ptrdiff_t>(c0, 0);
    r0 = std::max<std::ptrdiff_t>(r0, 0);
    c1 = std::min(c1, w - 1);
    r1 = std::min(r1, h - 1);
    if (c0 > c1 || r0 > r1) return std::uint32_t{0};
    return border_sat[(r1 + 1) * (w + 1) + (c1 + 1)] - border_sat[r0 * (w + 1) + (c1 + 1)] -
           border_sat[(r1 + 1) * (w + 1) + c0] + border_sat[r0 * (w + 1) + c0];
  };

  NarfInterest out;
  out.score.assign(n, nan);
  const double weight_sum = params.border_weight + params.surface_weight;
  parallel_chunks(img.height, [&](std::size_t row_begin, std::size_t row_end) {
    for (auto r = static_cast<std::ptrdiff_t>(row_begin); r < static_cast<std::ptrdiff_t>(row_end); ++r) {
      for (std::ptrdiff_t c = 0; c < w; ++c) {
        const std::size_t px = static_cast<std::size_t>(r * w + c);
        if (!img.filled(px)) continue;
        out.score[px] = 0.0;
        const double here = img.range[px];
        const double fp = img.footprint(here);
        const auto win = static_cast<std::ptrdiff_t>(std::ceil(radius / fp));
        if (borders_in(c - win, r - win, c + win, r + win) == 0) continue;

        const Point3& p = img.point(px);
        std::size_t total = 0, far = 0;
        std::complex<double> resultant{0.0, 0.0};
        double omega_sum = 0.0;
        const double disk2 = (radius / fp) * (radius / fp);
        for (std::ptrdiff_t a = -win; a <= win; ++a) {
          for (std::ptrdiff_t b = -win; b <= win; ++b) {
            if (static_cast<double>(a * a + b * b) > disk2) continue;
            ++total;
            const std::ptrdiff_t qc = c + b, qr = r + a;
            if (detail::beyond(img, qc, qr, px)) {
              ++far;
              continue;
            }
            const std::size_t q = static_cast<std::size_t>(qr * w + qc);
            if (!img.filled(q) || dir[q] == std::complex<double>{0.0, 0.0}) continue;
            const double d = (img.point(q) - p).norm();
            if (d > radius) continue;
            const double omega = 1.0 - d / radius;
            resultant += omega * dir[q];
            omega_sum += omega;
          }
        }
        const double border_term = static_cast<double>(far) / static_cast<double>(total);
        const double surface_term = omega_sum > 0.0 ? 1.0 - std::abs(resultant) / omega_sum : 0.0;
        out.score[px] = std::clamp(
            (params.border_weight * border_term + params.surface_weight * surface_term) / weight_sum, 0.0, 1.0);
      }
    }
  }, 8);

  std::vector<char> keep(n, 0);
  parallel_chunks(img.height, [&](std::size_t row_begin, std::size_t row_end) {
    for (auto r = static_cast<std::ptrdiff_t>(row_begin); r < static_cast<std::ptrdiff_t>(row_end); ++r) {
      for (std::ptrdiff_t c = 0; c < w; ++c) {
        const std::size_t px = static_cast<std::size_t>(r * w + c);
        if (!img.filled(px) || !(out.score[px] > params.threshold)) continue;
        if (img.border_class[px] == BorderClass::ShadowBorder || img.border_class[px] == BorderClass::Veil) continue;
        const Point3& p = img.point(px);
        const auto win = static_cast<std::ptrdiff_t>(std::ceil(params.non_max_radius / img.footprint(img.range[px])));
        bool is_max = true;
        for (std::ptrdiff_t a = -win; a <= win && is_max; ++a) {
          for (std::ptrdiff_t b = -win; b <= win; ++b) {
            const std::ptrdiff_t qc = c + b, qr = r + a;
            if ((a == 0 && b == 0) || qc < 0 || qr < 0 || qc >= w || qr >= h) continue;
            const std::size_t q = static_cast<std::size_t>(qr * w + qc);
            if (!img.filled(q) || (img.point(q) - p).norm() > params.non_max_radius) continue;
            if (out.score[q] > out.score[px] || (out.score[q] == out.score[px] && q < px)) {
              is_max = false;
              break;
            }
          }
        }
        keep[px] = is_max;
      }
    }
  }, 8);

  for (std::size_t px = 0; px < n; ++px) {
    if (!keep[px]) continue;
    out.keypoints.push_back({img.point(px), img.source_index[px], out.score[px], DetectorKind::Narf, 0.0});
    out.keypoint_pixels.push_back(px);
  }
  return out;
}

inline std::vector<Keypoint> detect_narf(const RangeImage& img, const NarfDetectorParams& params) {
  return narf_interest(img, params).keypoints;
}

}  // namespace regpipe
