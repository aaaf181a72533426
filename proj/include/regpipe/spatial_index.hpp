#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "regpipe/error.hpp"
#include "regpipe/point_cloud.hpp"

namespace regpipe {

struct Neighbor {
  std::size_t index;
  double distance;
};

/// Static kd-tree over a snapshot of point positions. Radius queries use a
/// closed ball (distance <= radius). Nearest-neighbor ties resolve to the
/// lower point index.
class SpatialIndex {
 public:
  static constexpr std::size_t kLeafSize = 12;

  explicit SpatialIndex(std::vector<Point3> points) : points_(std::move(points)) {
    if (points_.empty()) fail(ErrorCode::EmptyCloud, "cannot index an empty cloud");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }

  explicit SpatialIndex(const PointCloud& cloud) : SpatialIndex(cloud.points) {}

  std::size_t size() const { return points_.size(); }
  const Point3& point(std::size_t i) const { return points_[i]; }
  const std::vector<Point3>& points() const { return points_; }

  /// Appends indices within the closed ball to `out` (cleared first).
  void radius_search(const Point3& center, double radius, std::vector<std::size_t>& out) const {
    if (!(radius > 0.0)) fail(ErrorCode::NonPositiveRadius, "radius must be positive");
    out.clear();
    const double r2 = radius * radius;
    std::array<std::uint32_t, 64> stack;
    std::size_t top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      if (box_distance2(node, center) > r2) continue;
      if (node.leaf) {
        for (std::uint32_t k = node.begin; k < node.end; ++k) {
          const std::uint32_t i = order_[k];
          if ((points_[i] - center).squaredNorm() <= r2) out.push_back(i);
        }
      } else {
        stack[top++] = node.right;
        stack[top++] = node.left;
      }
    }
  }

  std::vector<std::size_t> radius_neighbors(const Point3& center, double radius) const {
    std::vector<std::size_t> out;
    radius_search(center, radius, out);
    return out;
  }

  std::optional<Neighbor> nearest(const Point3& query,
                                  std::optional<double> max_distance = std::nullopt) const {
    double best2 = max_distance ? (*max_distance) * (*max_distance)
                                : std::numeric_limits<double>::infinity();
    std::size_t best = std::numeric_limits<std::size_t>::max();
    nearest_impl(0, query, best2, best);
    if (best == std::numeric_limits<std::size_t>::max()) return std::nullopt;
    return Neighbor{best, std::sqrt(best2)};
  }

  /// k nearest points sorted by (distance, index).
  std::vector<Neighbor> k_nearest(const Point3& query, std::size_t k) const {
    std::vector<std::pair<double, std::size_t>> heap;  // max-heap on (d2, index)
    k = std::min(k, points_.size());
    if (k == 0) return {};
    knn_impl(0, query, k, heap);
    std::sort(heap.begin(), heap.end());
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    for (auto [d2, i] : heap) out.push_back({i, std::sqrt(d2)});
    return out;
  }

 private:
  struct Node {
    Point3 lo, hi;
    std::uint32_t begin = 0, end = 0;
    std::uint32_t left = 0, right = 0;
    bool leaf = true;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
    Point3 hi = -lo;
    for (std::uint32_t k = begin; k < end; ++k) {
      lo = lo.cwiseMin(points_[order_[k]]);
      hi = hi.cwiseMax(points_[order_[k]]);
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin <= kLeafSize || (hi - lo).maxCoeff() == 0.0) return id;

    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double pa = points_[a][axis], pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[id].leaf = false;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  static double box_distance2(const Node& node, const Point3& q) {
    const Vector3 d = (node.lo - q).cwiseMax(q - node.hi).cwiseMax(0.0);
    return d.squaredNorm();
  }

  void nearest_impl(std::uint32_t id, const Point3& q, double& best2, std::size_t& best) const {
    const Node& node = nodes_[id];
    if (box_distance2(node, q) > best2) return;
    if (node.leaf) {
      for (std::uint32_t k = node.begin; k < node.end; ++k) {
        const std::uint32_t i = order_[k];
        const double d2 = (points_[i] - q).squaredNorm();
        if (d2 < best2 || (d2 == best2 && i < best)) {
          best2 = d2;
          best = i;
        }
      }
      return;
    }
    const double dl = box_distance2(nodes_[node.left], q);
    const double dr = box_distance2(nodes_[node.right], q);
    if (dl <= dr) {
      nearest_impl(node.left, q, best2, best);
      nearest_impl(node.right, q, best2, best);
    } else {
      nearest_impl(node.right, q, best2, best);
      nearest_impl(node.left, q, best2, best);
    }
  }

  void knn_impl(std::uint32_t id, const Point3& q, std::size_t k,
                std::vector<std::pair<double, std::size_t>>& heap) const {
    const Node& node = nodes_[id];
    if (heap.size() == k && box_distance2(node, q) > heap.front().first) return;
    if (node.leaf) {
      for (std::uint32_t j = node.begin; j < node.end; ++j) {
        const std::pair<double, std::size_t> cand{(points_[order_[j]] - q).squaredNorm(), order_[j]};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double dl = box_distance2(nodes_[node.left], q);
    const double dr = box_distance2(nodes_[node.right], q);
    const auto first = dl <= dr ? node.left : node.right;
    const auto second = dl <= dr ? node.right : node.left;
    knn_impl(first, q, k, heap);
    knn_impl(second, q, k, heap);
  }

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

inline SpatialIndex build_index(const PointCloud& cloud) { return SpatialIndex(cloud); }

inline std::vector<std::size_t> radius_neighbors(const SpatialIndex& index, const Point3& center,
                                                 double radius) {
  return index.radius_neighbors(center, radius);
}

inline std::optional<Neighbor> nearest_neighbor(const SpatialIndex& index, const Point3& query,
                                                std::optional<double> max_distance = std::nullopt) {
  return index.nearest(query, max_distance);
}

/// Median distance from each point to its nearest other point.
inline double median_spacing(const SpatialIndex& index) {
  if (index.size() < 2) return 0.0;
  std::vector<double> d(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto nn = index.k_nearest(index.point(i), 2);
    d[i] = nn.back().distance;
  }
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

}  // namespace regpipe
