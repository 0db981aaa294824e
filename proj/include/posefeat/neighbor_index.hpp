#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "posefeat/geometry.hpp"

namespace posefeat {

struct Neighbor {
  std::size_t id;
  double distance;  // mm
};

/// Exact k-d tree over a fixed point set. Immutable after construction, so
/// concurrent queries are safe. Results are ordered by (distance, id).
class NeighborIndex {
 public:
  NeighborIndex() = default;

  explicit NeighborIndex(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      build(0, points_.size());
    }
  }

  explicit NeighborIndex(std::span<const Vec3> points) : NeighborIndex(std::vector<Vec3>(points.begin(), points.end())) {}

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Vec3>& points() const noexcept { return points_; }

  /// The k nearest points; ties broken by ascending id.
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const {
    if (k > points_.size())
      throw InvalidArgument("nn_query: k=" + std::to_string(k) + " exceeds index size " +
                            std::to_string(points_.size()));
    std::vector<Neighbor> out;
    if (k == 0) return out;
    Heap heap;
    search_knn(0, query, k, heap);
    out.resize(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
      const auto [d2, id] = heap.top();
      heap.pop();
      out[i] = {id, std::sqrt(d2)};
    }
    return out;
  }

  Neighbor nearest(const Vec3& query) const {
    if (points_.empty()) throw InvalidArgument("nn_query on empty index");
    Best best{std::numeric_limits<double>::infinity(), 0};
    search_nearest(0, query, best);
    return {best.id, std::sqrt(best.d2)};
  }

  /// All points at distance <= radius, ordered by (distance, id).
  std::vector<Neighbor> radius(const Vec3& query, double radius) const {
    std::vector<std::pair<double, std::size_t>> found;
    if (!points_.empty() && radius >= 0.0) search_radius(0, query, radius * radius, found);
    std::sort(found.begin(), found.end());
    std::vector<Neighbor> out;
    out.reserve(found.size());
    for (const auto& [d2, id] : found) out.push_back({id, std::sqrt(d2)});
    return out;
  }

  /// Ids within radius (unordered). Cheaper than radius() when distances are not needed.
  void radius_ids(const Vec3& query, double radius, std::vector<std::size_t>& ids) const {
    ids.clear();
    if (points_.empty() || radius < 0.0) return;
    collect_ids(0, query, radius * radius, ids);
  }

 private:
  static constexpr std::size_t kLeafSize = 12;

  struct Node {
    std::size_t begin = 0, end = 0;  // range into order_
    int axis = -1;                   // -1 for leaves
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  using Entry = std::pair<double, std::size_t>;  // (squared distance, id); lexicographic order = tie rule
  using Heap = std::priority_queue<Entry>;
  struct Best {
    double d2;
    std::size_t id;
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t index = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return index;

    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi(axis) == lo(axis)) return index;  // all coincident: keep as leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) { return points_[a](axis) < points_[b](axis); });
    const double split = points_[order_[mid]](axis);
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    Node& node = nodes_[index];
    node.axis = axis;
    node.split = split;
    node.left = left;
    node.right = right;
    return index;
  }

  // Left subtree holds coordinates <= split, right holds >= split along the axis.
  void search_knn(std::size_t ni, const Vec3& q, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t id = order_[i];
        const Entry e{(points_[id] - q).squaredNorm(), id};
        if (heap.size() < k) {
          heap.push(e);
        } else if (e < heap.top()) {
          heap.pop();
          heap.push(e);
        }
      }
      return;
    }
    const double diff = q(node.axis) - node.split;
    const std::size_t near = diff <= 0.0 ? node.left : node.right;
    const std::size_t far = diff <= 0.0 ? node.right : node.left;
    search_knn(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.top().first) search_knn(far, q, k, heap);
  }

  void search_nearest(std::size_t ni, const Vec3& q, Best& best) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t id = order_[i];
        const double d2 = (points_[id] - q).squaredNorm();
        if (d2 < best.d2 || (d2 == best.d2 && id < best.id)) best = {d2, id};
      }
      return;
    }
    const double diff = q(node.axis) - node.split;
    const std::size_t near = diff <= 0.0 ? node.left : node.right;
    const std::size_t far = diff <= 0.0 ? node.right : node.left;
    search_nearest(near, q, best);
    if (diff * diff <= best.d2) search_nearest(far, q, best);
  }

  void search_radius(std::size_t ni, const Vec3& q, double r2, std::vector<Entry>& out) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t id = order_[i];
        const double d2 = (points_[id] - q).squaredNorm();
        if (d2 <= r2) out.emplace_back(d2, id);
      }
      return;
    }
    const double diff = q(node.axis) - node.split;
    if (diff <= 0.0 || diff * diff <= r2) search_radius(node.left, q, r2, out);
    if (diff >= 0.0 || diff * diff <= r2) search_radius(node.right, q, r2, out);
  }

  void collect_ids(std::size_t ni, const Vec3& q, double r2, std::vector<std::size_t>& out) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i)
        if ((points_[order_[i]] - q).squaredNorm() <= r2) out.push_back(order_[i]);
      return;
    }
    const double diff = q(node.axis) - node.split;
    if (diff <= 0.0 || diff * diff <= r2) collect_ids(node.left, q, r2, out);
    if (diff >= 0.0 || diff * diff <= r2) collect_ids(node.right, q, r2, out);
  }

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// k nearest neighbours of `query`, sorted by distance then id.
inline std::vector<Neighbor> nn_query(const NeighborIndex& index, const Vec3& query, std::size_t k) {
  return index.knn(query, k);
}

}  // namespace posefeat
