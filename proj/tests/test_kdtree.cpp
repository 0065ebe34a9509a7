#include <doctest.h>

#include "test_helpers.hpp"
#include "uvtrack/kdtree.hpp"

using namespace uvtrack;
using namespace testutil;

namespace {

int brute_nearest(const std::vector<Vec3>& pts, const Vec3& q) {
  int best = 0;
  double best_sq = (pts[0] - q).squaredNorm();
  for (int i = 1; i < static_cast<int>(pts.size()); ++i) {
    const double sq = (pts[i] - q).squaredNorm();
    if (sq < best_sq) {
      best_sq = sq;
      best = i;
    }
  }
  return best;
}

std::vector<int> brute_k_nearest(const std::vector<Vec3>& pts, const Vec3& q, int k) {
  std::vector<std::pair<double, int>> d;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    d.emplace_back((pts[i] - q).squaredNorm(), i);
  }
  std::sort(d.begin(), d.end());
  std::vector<int> out;
  for (int i = 0; i < std::min<int>(k, d.size()); ++i) out.push_back(d[i].second);
  return out;
}

}  // namespace

TEST_CASE("kdtree nearest matches brute force") {
  std::mt19937_64 rng(60);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i) pts.push_back(random_vec(rng, -100.0, 100.0));
  KdTree3 tree(pts);
  for (int i = 0; i < 300; ++i) {
    const Vec3 q = random_vec(rng, -120.0, 120.0);
    CHECK(tree.nearest(q) == brute_nearest(pts, q));
  }
}

TEST_CASE("kdtree k-nearest matches brute force with index tie-breaks") {
  std::mt19937_64 rng(61);
  // regular grid: plenty of exact distance ties
  std::vector<Vec3> pts;
  for (int x = 0; x < 6; ++x)
    for (int y = 0; y < 6; ++y)
      for (int z = 0; z < 2; ++z) pts.emplace_back(x * 10.0, y * 10.0, z * 10.0);
  KdTree3 tree(pts);
  for (const auto& q : pts) {
    CHECK(tree.k_nearest(q, 10) == brute_k_nearest(pts, q, 10));
  }
  for (int i = 0; i < 100; ++i) {
    const Vec3 q = random_vec(rng, -10.0, 70.0);
    CHECK(tree.k_nearest(q, 7) == brute_k_nearest(pts, q, 7));
  }
}

TEST_CASE("kdtree k larger than the set returns everything ordered") {
  std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  KdTree3 tree(pts);
  CHECK(tree.k_nearest(Vec3(0.1, 0.0, 0.0), 10) == std::vector<int>{0, 1, 2});
}
