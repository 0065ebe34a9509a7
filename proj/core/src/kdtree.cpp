#include "uvtrack/kdtree.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

namespace uvtrack {

KdTree3::KdTree3(std::span<const Vec3> points)
    : points_(points.begin(), points.end()) {
  std::vector<int> indices(points_.size());
  std::iota(indices.begin(), indices.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(indices, 0);
}

int KdTree3::build(std::span<int> indices, int depth) {
  if (indices.empty()) return -1;
  const int axis = depth % 3;
  const std::size_t mid = indices.size() / 2;
  std::nth_element(indices.begin(), indices.begin() + mid, indices.end(),
                   [&](int a, int b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const int node_id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{indices[mid], axis, -1, -1});
  const int left = build(indices.subspan(0, mid), depth + 1);
  const int right = build(indices.subspan(mid + 1), depth + 1);
  nodes_[node_id].left = left;
  nodes_[node_id].right = right;
  return node_id;
}

template <typename Visit>
void KdTree3::search(int node, const Vec3& query, double& worst_sq,
                     Visit&& visit) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  visit(n.point, (points_[n.point] - query).squaredNorm());
  const double delta = query[n.axis] - points_[n.point][n.axis];
  const int near = delta <= 0.0 ? n.left : n.right;
  const int far = delta <= 0.0 ? n.right : n.left;
  search(near, query, worst_sq, visit);
  if (delta * delta <= worst_sq) {
    search(far, query, worst_sq, visit);
  }
}

int KdTree3::nearest(const Vec3& query, double* sq_dist) const {
  if (points_.empty()) fail(ErrorCode::InvalidArgument, "kdtree: empty tree");
  int best = -1;
  double best_sq = std::numeric_limits<double>::infinity();
  search(root_, query, best_sq, [&](int idx, double sq) {
    if (sq < best_sq || (sq == best_sq && idx < best)) {
      best = idx;
      best_sq = sq;
    }
  });
  if (sq_dist) *sq_dist = best_sq;
  return best;
}

std::vector<int> KdTree3::k_nearest(const Vec3& query, int k) const {
  k = std::min<int>(k, static_cast<int>(points_.size()));
  if (k <= 0) return {};
  using Entry = std::pair<double, int>;  // (sq distance, index)
  auto worse = [](const Entry& a, const Entry& b) {
    return a.first < b.first || (a.first == b.first && a.second < b.second);
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  double worst_sq = std::numeric_limits<double>::infinity();
  search(root_, query, worst_sq, [&](int idx, double sq) {
    heap.emplace(sq, idx);
    if (static_cast<int>(heap.size()) > k) heap.pop();
    if (static_cast<int>(heap.size()) == k) worst_sq = heap.top().first;
  });
  std::vector<Entry> entries;
  entries.reserve(heap.size());
  while (!heap.empty()) {
    entries.push_back(heap.top());
    heap.pop();
  }
  std::sort(entries.begin(), entries.end());
  std::vector<int> result;
  result.reserve(entries.size());
  for (const auto& [sq, idx] : entries) result.push_back(idx);
  return result;
}

}  // namespace uvtrack
