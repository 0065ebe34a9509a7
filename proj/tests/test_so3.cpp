#include <doctest.h>

#include "test_helpers.hpp"
#include "uvtrack/so3.hpp"

using namespace uvtrack;
using namespace testutil;

TEST_CASE("so3_exp at zero is the identity") {
  CHECK((so3_exp(Vec3::Zero()) - Mat3::Identity()).norm() == doctest::Approx(0.0));
}

TEST_CASE("so3_exp quarter turn about z") {
  const Mat3 r = so3_exp(Vec3(0.0, 0.0, M_PI / 2.0));
  CHECK((r * Vec3::UnitX() - Vec3::UnitY()).norm() < 1e-12);
}

TEST_CASE("so3_exp matches Eigen::AngleAxisd") {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 200; ++i) {
    const Vec3 w = random_vec(rng, -2.5, 2.5);
    const double angle = w.norm();
    const Mat3 expect = angle < 1e-12
                            ? Mat3::Identity()
                            : Eigen::AngleAxisd(angle, (w / angle).eval()).toRotationMatrix();
    CHECK((so3_exp(w) - expect).norm() < 1e-12);
  }
}

TEST_CASE("log-exp round trip below pi") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> norm_d(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w = norm_d(rng) * random_unit(rng);
    CHECK((so3_log(so3_exp(w)) - w).norm() < 1e-9);
  }
}

TEST_CASE("log handles tiny and near-pi angles") {
  CHECK(so3_log(Mat3::Identity()).norm() == doctest::Approx(0.0));
  const Vec3 w_small = 1e-9 * Vec3(1.0, -2.0, 0.5).normalized();
  CHECK((so3_log(so3_exp(w_small)) - w_small).norm() < 1e-15);
  const Vec3 w_pi = 3.14 * Vec3(0.0, 1.0, 0.0);
  CHECK((so3_log(so3_exp(w_pi)) - w_pi).norm() < 1e-7);
}

TEST_CASE("log of a non-rotation throws NotARotation") {
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = 2.0;
  CHECK_THROWS_AS(so3_log(bad), Error);
  Mat3 reflection = Mat3::Identity();
  reflection(2, 2) = -1.0;
  CHECK_THROWS_AS(so3_log(reflection), Error);
}

TEST_CASE("right Jacobian matches finite differences") {
  std::mt19937_64 rng(43);
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const Vec3 w = random_vec(rng, -1.5, 1.5);
    const Vec3 u = random_vec(rng, -10.0, 10.0);
    const Mat3 analytic = -so3_exp(w) * so3_hat(u) * so3_right_jacobian(w);
    Mat3 fd;
    for (int a = 0; a < 3; ++a) {
      Vec3 wp = w, wm = w;
      wp[a] += h;
      wm[a] -= h;
      fd.col(a) = (so3_exp(wp) * u - so3_exp(wm) * u) / (2.0 * h);
    }
    CHECK((analytic - fd).norm() / std::max(1.0, fd.norm()) < 1e-6);
  }
}
