#pragma once

#include <span>
#include <vector>

#include "uvtrack/types.hpp"

namespace uvtrack {

// Static kd-tree over a fixed 3D point set. Queries break distance ties by
// the lower point index, so results are deterministic on regular grids.
class KdTree3 {
 public:
  KdTree3() = default;
  explicit KdTree3(std::span<const Vec3> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }

  // Index of the nearest point; squared distance optionally returned.
  int nearest(const Vec3& query, double* sq_dist = nullptr) const;

  // Indices of the k nearest points, ordered by (distance, index).
  std::vector<int> k_nearest(const Vec3& query, int k) const;

 private:
  struct Node {
    int point = -1;      // index into points_
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::span<int> indices, int depth);

  template <typename Visit>
  void search(int node, const Vec3& query, double& worst_sq, Visit&& visit) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace uvtrack
