#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "chronoseme/embeddings.hpp"
#include "chronoseme/parallel.hpp"

namespace chronoseme {

// Every neighbor query funnels through this one function, so the brute
// force and tree paths produce bit-identical distances.
inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

enum class KnnBackend { kBruteForce, kVpTree };

// Point set viewed through a row subset of an embedding matrix.
class PointView {
 public:
  PointView(const EmbeddingMatrix& m, std::span<const std::size_t> rows) : m_(&m), rows_(rows) {}
  std::size_t size() const { return rows_.size(); }
  std::span<const double> operator[](std::size_t i) const { return m_->row(rows_[i]); }

 private:
  const EmbeddingMatrix* m_;
  std::span<const std::size_t> rows_;
};

// Distance from point i to its k-th nearest other point, by exhaustive scan.
inline double kth_neighbor_distance_brute(const PointView& pts, std::size_t i, std::size_t k,
                                          std::vector<double>& scratch) {
  scratch.clear();
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (j != i) scratch.push_back(euclidean(pts[i], pts[j]));
  }
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k - 1), scratch.end());
  return scratch[k - 1];
}

// Vantage-point tree with exact k-NN and radius queries. Vantage points are
// chosen deterministically (first point of each range), so a given point
// order always builds the same tree.
class VpTree {
 public:
  explicit VpTree(const PointView& pts) : pts_(pts), nodes_(pts.size()) {
    std::vector<std::size_t> items(pts.size());
    std::iota(items.begin(), items.end(), 0);
    order_ = items;
    if (!items.empty()) root_ = build(0, items.size());
  }

  // k-th smallest distance from point `self` to the other points.
  double kth_distance(std::size_t self, std::size_t k) const {
    std::priority_queue<double> heap;  // max-heap of the best k distances
    double tau = std::numeric_limits<double>::infinity();
    search_knn(root_, self, k, heap, tau);
    return heap.top();
  }

  // Indices within `radius` of point `self` (self included); ascending
  // unless `sorted` is false.
  std::vector<std::size_t> radius_query(std::size_t self, double radius, bool sorted = true) const {
    std::vector<std::size_t> out;
    search_radius(root_, pts_[self], radius, out);
    if (sorted) std::sort(out.begin(), out.end());
    return out;
  }

  // Number of points within `radius` of point `self` (self included),
  // stopping once `cap` is reached.
  std::size_t radius_count(std::size_t self, double radius, std::size_t cap) const {
    std::size_t count = 0;
    count_radius(root_, pts_[self], radius, cap, count);
    return std::min(count, cap);
  }

 private:
  struct Node {
    std::size_t point = 0;
    double mu = 0.0;
    double cover = 0.0;  // max distance from the vantage point to its subtree
    std::size_t lo = 0;  // subtree occupies order_[lo, hi)
    std::size_t hi = 0;
    std::int64_t inner = -1;
    std::int64_t outer = -1;
  };

  // Subtree bounds by the triangle inequality, with a margin wide enough
  // that per-point distance checks would agree.
  static bool subtree_inside(double d, const Node& node, double radius) {
    return d + node.cover <= radius - kSlack * (1.0 + d + node.cover + radius);
  }
  static bool subtree_outside(double d, const Node& node, double radius) {
    return d - node.cover > radius + kSlack * (1.0 + d + node.cover + radius);
  }

  static constexpr double kSlack = 1e-9;

  std::int64_t build(std::size_t lo, std::size_t hi) {
    if (lo >= hi) return -1;
    const std::size_t node_id = next_++;
    Node& node = nodes_[node_id];
    node.point = order_[lo];
    node.lo = lo;
    node.hi = hi;
    if (hi - lo == 1) return static_cast<std::int64_t>(node_id);
    const auto vp = pts_[node.point];
    const std::size_t mid = (lo + 1 + hi) / 2;
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(hi - lo - 1);
    for (std::size_t i = lo + 1; i < hi; ++i) dist.emplace_back(euclidean(vp, pts_[order_[i]]), order_[i]);
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid - lo - 1), dist.end());
    for (std::size_t i = lo + 1; i < hi; ++i) order_[i] = dist[i - lo - 1].second;
    const double mu = dist[mid - lo - 1].first;
    double cover = 0.0;
    for (const auto& e : dist) cover = std::max(cover, e.first);
    nodes_[node_id].cover = cover;
    const std::int64_t inner = build(lo + 1, mid);
    const std::int64_t outer = build(mid, hi);
    nodes_[node_id].mu = mu;
    nodes_[node_id].inner = inner;
    nodes_[node_id].outer = outer;
    return static_cast<std::int64_t>(node_id);
  }

  void search_knn(std::int64_t id, std::size_t self, std::size_t k, std::priority_queue<double>& heap,
                  double& tau) const {
    if (id < 0) return;
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const double d = euclidean(pts_[self], pts_[node.point]);
    if (node.point != self) {
      if (heap.size() < k) {
        heap.push(d);
        if (heap.size() == k) tau = heap.top();
      } else if (d < heap.top()) {
        heap.pop();
        heap.push(d);
        tau = heap.top();
      }
    }
    const double slack = kSlack * (1.0 + d + node.mu);
    if (d < node.mu) {
      if (d - tau <= node.mu + slack) search_knn(node.inner, self, k, heap, tau);
      if (d + tau >= node.mu - slack) search_knn(node.outer, self, k, heap, tau);
    } else {
      if (d + tau >= node.mu - slack) search_knn(node.outer, self, k, heap, tau);
      if (d - tau <= node.mu + slack) search_knn(node.inner, self, k, heap, tau);
    }
  }

  void search_radius(std::int64_t id, std::span<const double> q, double radius, std::vector<std::size_t>& out) const {
    if (id < 0) return;
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const double d = euclidean(q, pts_[node.point]);
    if (subtree_outside(d, node, radius)) return;
    if (subtree_inside(d, node, radius)) {
      out.insert(out.end(), order_.begin() + static_cast<std::ptrdiff_t>(node.lo),
                 order_.begin() + static_cast<std::ptrdiff_t>(node.hi));
      return;
    }
    if (d <= radius) out.push_back(node.point);
    const double slack = kSlack * (1.0 + d + node.mu);
    if (d - radius <= node.mu + slack) search_radius(node.inner, q, radius, out);
    if (d + radius >= node.mu - slack) search_radius(node.outer, q, radius, out);
  }

  void count_radius(std::int64_t id, std::span<const double> q, double radius, std::size_t cap,
                    std::size_t& count) const {
    if (id < 0 || count >= cap) return;
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const double d = euclidean(q, pts_[node.point]);
    if (subtree_outside(d, node, radius)) return;
    if (subtree_inside(d, node, radius)) {
      count += node.hi - node.lo;
      return;
    }
    if (d <= radius) ++count;
    const double slack = kSlack * (1.0 + d + node.mu);
    if (d - radius <= node.mu + slack) count_radius(node.inner, q, radius, cap, count);
    if (d + radius >= node.mu - slack) count_radius(node.outer, q, radius, cap, count);
  }

  PointView pts_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> order_;
  std::size_t next_ = 0;
  std::int64_t root_ = -1;
};

// k-th nearest-neighbor distance for every point (self excluded), exact.
inline std::vector<double> kth_neighbor_distances(const PointView& pts, std::size_t k, KnnBackend backend,
                                                  std::size_t threads = thread_count()) {
  std::vector<double> out(pts.size());
  if (backend == KnnBackend::kVpTree) {
    VpTree tree(pts);
    parallel_for(pts.size(), [&](std::size_t i) { out[i] = tree.kth_distance(i, k); }, threads);
  } else {
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, pts.size()));
    const std::size_t chunk = (pts.size() + workers - 1) / workers;
    parallel_for(
        workers,
        [&](std::size_t w) {
          std::vector<double> scratch;
          scratch.reserve(pts.size());
          const std::size_t end = std::min(pts.size(), (w + 1) * chunk);
          for (std::size_t i = w * chunk; i < end; ++i) out[i] = kth_neighbor_distance_brute(pts, i, k, scratch);
        },
        workers);
  }
  return out;
}

}  // namespace chronoseme
