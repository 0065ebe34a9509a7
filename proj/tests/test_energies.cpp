#include <doctest.h>

#include "test_helpers.hpp"
#include "uvtrack/fitting.hpp"
#include "uvtrack/so3.hpp"

using namespace uvtrack;
using namespace testutil;

TEST_CASE("deform_point identity and forced rotation") {
  CHECK((deform_point(Mat3::Identity(), Vec3::Zero(), Vec3(1, 2, 3), Vec3(4, 5, 6)) -
         Vec3(4, 5, 6))
            .norm() < 1e-15);
  const Mat3 quarter = so3_exp(Vec3(0, 0, M_PI / 2));
  CHECK((deform_point(quarter, Vec3::Zero(), Vec3::Zero(), Vec3(1, 0, 0)) - Vec3(0, 1, 0))
            .norm() < 1e-12);
}

TEST_CASE("deform_point matches explicit arithmetic") {
  std::mt19937_64 rng(90);
  for (int i = 0; i < 200; ++i) {
    const Mat3 rot = random_rotation(rng);
    const Vec3 t = random_vec(rng, -10, 10);
    const Vec3 v = random_vec(rng, -50, 50);
    const Vec3 p = random_vec(rng, -50, 50);
    const Vec3 expect = rot * (p - v) + v + t;
    CHECK((deform_point(rot, t, v, p) - expect).norm() < 1e-12);
  }
}

TEST_CASE("graph neighborhood invariants") {
  const GridTemplate grid = build_grid_template(5, 6, 10.0);
  const auto tmpl = make_deformable(grid);
  const int n = static_cast<int>(tmpl.rest_vertices.size());
  for (int j = 0; j < n; ++j) {
    CHECK(static_cast<int>(tmpl.graph.neighbors[j].size()) == std::min(10, n - 1));
    double sum = 0.0;
    for (double w : tmpl.graph.weights[j]) {
      CHECK(w > 0.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    for (int k : tmpl.graph.neighbors[j]) CHECK(k != j);
  }
}

TEST_CASE("energy_fit vanishes for a cloud sampled at the rest vertices") {
  const GridTemplate grid = build_grid_template(4, 4, 10.0);
  const auto tmpl = make_deformable(grid);
  const auto state = DeformationState::identity(tmpl.rest_vertices.size());
  PointCloud cloud;
  cloud.points = tmpl.rest_vertices;
  const auto corr = build_correspondences(tmpl.rest_vertices, cloud);
  const auto term = energy_fit(tmpl, state, cloud, corr, 1.0);
  CHECK(term.value == doctest::Approx(0.0));
  CHECK_FALSE(term.empty_input);
}

TEST_CASE("energy_fit of a single point along the vertex normal is 2 d^2") {
  const GridTemplate grid = build_grid_template(4, 4, 10.0);
  const auto tmpl = make_deformable(grid);
  const auto state = DeformationState::identity(tmpl.rest_vertices.size());
  const double d = 3.0;  // below half the spacing, so the vertex stays closest
  PointCloud cloud;
  cloud.points = {tmpl.rest_vertices[5] + d * Vec3::UnitZ()};
  const auto corr = build_correspondences(tmpl.rest_vertices, cloud);
  REQUIRE(corr.closest_vertex[0] == 5);
  const auto term = energy_fit(tmpl, state, cloud, corr, 1.0);
  CHECK(term.value == doctest::Approx(2.0 * d * d).epsilon(1e-12));
}

TEST_CASE("energy_fit flags an empty cloud") {
  const GridTemplate grid = build_grid_template(3, 3, 10.0);
  const auto tmpl = make_deformable(grid);
  const auto state = DeformationState::identity(tmpl.rest_vertices.size());
  const auto term = energy_fit(tmpl, state, PointCloud{}, CorrespondenceSet{}, 1.0);
  CHECK(term.value == 0.0);
  CHECK(term.empty_input);
}

TEST_CASE("energy_fit matches the naive double-loop oracle") {
  std::mt19937_64 rng(91);
  for (int trial = 0; trial < 30; ++trial) {
    const SmallInstance inst = random_instance(rng, false, true);
    const auto deformed = apply_state(inst.tmpl.rest_vertices, inst.state);
    const auto corr = build_correspondences(deformed, inst.cloud);
    const double beta = 0.5 + 0.1 * trial;
    const auto term = energy_fit(inst.tmpl, inst.state, inst.cloud, corr, beta);
    const double oracle = naive_energy_fit(inst, beta);
    CHECK(term.value == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(term.value == doctest::Approx(term.residuals.squaredNorm()).epsilon(1e-15));
    CHECK(term.value >= 0.0);
  }
}

TEST_CASE("energy_marker vanishes on exact projections and zero weights") {
  std::mt19937_64 rng(92);
  const GridTemplate grid = build_grid_template(3, 4, 12.0);
  const auto tmpl = make_deformable(grid);
  DeformationState state = DeformationState::identity(tmpl.rest_vertices.size());
  for (auto& t : state.translations) t = random_vec(rng, -3, 3);
  const auto deformed = apply_state(tmpl.rest_vertices, state);

  std::vector<CameraModel> cameras{
      look_at_camera(Vec3(0, 0, -700), Vec3::Zero(), 1000, 1024, 1024, "c0"),
      look_at_camera(Vec3(500, 100, -500), Vec3::Zero(), 1000, 1024, 1024, "c1")};
  MarkerObservationSet obs;
  for (const auto& cam : cameras) {
    for (const auto& m : tmpl.markers) {
      obs.push_back({cam.id, m.marker_id,
                     project(cam, attachment_position(deformed, m)), 1.0});
    }
  }
  CHECK(energy_marker(tmpl, state, obs, cameras).value < 1e-18);

  for (auto& o : obs) {
    o.pixel += Pixel2(11.0, -4.0);
    o.weight = 0.0;
  }
  CHECK(energy_marker(tmpl, state, obs, cameras).value == 0.0);
}

TEST_CASE("energy_marker matches the naive summation oracle") {
  std::mt19937_64 rng(93);
  for (int trial = 0; trial < 30; ++trial) {
    const SmallInstance inst = random_instance(rng, true, false);
    const auto term = energy_marker(inst.tmpl, inst.state, inst.observations, inst.cameras);
    CHECK(term.value == doctest::Approx(naive_energy_marker(inst)).epsilon(1e-12));
    CHECK(term.value >= 0.0);
  }
}

TEST_CASE("energy_marker rejects positively weighted markers behind a camera") {
  const GridTemplate grid = build_grid_template(2, 2, 10.0);
  const auto tmpl = make_deformable(grid);
  const auto state = DeformationState::identity(tmpl.rest_vertices.size());
  // camera looking away from the grid: everything is behind it
  const CameraModel cam = look_at_camera(Vec3(0, 0, 100), Vec3(0, 0, 1000), 1000, 1024,
                                         1024, "away");
  MarkerObservationSet obs{{"away", "m000", Pixel2(512, 512), 1.0}};
  CHECK_THROWS_AS(energy_marker(tmpl, state, obs, std::vector<CameraModel>{cam}), Error);
}

TEST_CASE("energy_smooth vanishes for the zero state and global motions") {
  const GridTemplate grid = build_grid_template(5, 5, 10.0);
  const auto tmpl = make_deformable(grid);
  const std::size_t n = tmpl.rest_vertices.size();

  CHECK(energy_smooth(tmpl, DeformationState::identity(n)).value == 0.0);

  DeformationState shifted = DeformationState::identity(n);
  for (auto& t : shifted.translations) t = Vec3(5.0, -2.0, 7.0);
  CHECK(energy_smooth(tmpl, shifted).value < 1e-20);

  std::mt19937_64 rng(94);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec3 omega = 2.0 * random_vec(rng, -1, 1);
    const Mat3 rot = so3_exp(omega);
    DeformationState rigid = DeformationState::identity(n);
    for (std::size_t i = 0; i < n; ++i) {
      rigid.rotations[i] = omega;
      rigid.translations[i] = rot * tmpl.rest_vertices[i] - tmpl.rest_vertices[i];
    }
    CHECK(energy_smooth(tmpl, rigid).value < 1e-10);
  }
}

TEST_CASE("energy_smooth matches the naive oracle and is positive otherwise") {
  std::mt19937_64 rng(95);
  for (int trial = 0; trial < 30; ++trial) {
    const SmallInstance inst = random_instance(rng, false, false);
    const auto term = energy_smooth(inst.tmpl, inst.state);
    CHECK(term.value == doctest::Approx(naive_energy_smooth(inst)).epsilon(1e-12));
    CHECK(term.value >= 0.0);
  }
  // a single twisted node must cost energy
  const GridTemplate grid = build_grid_template(3, 3, 10.0);
  const auto tmpl = make_deformable(grid);
  DeformationState state = DeformationState::identity(tmpl.rest_vertices.size());
  state.rotations[4] = Vec3(0, 0, 0.5);
  CHECK(energy_smooth(tmpl, state).value > 1e-3);
}

TEST_CASE("total_energy is the exact weighted sum of its parts") {
  std::mt19937_64 rng(96);
  for (int trial = 0; trial < 10; ++trial) {
    const SmallInstance inst = random_instance(rng);
    const auto deformed = apply_state(inst.tmpl.rest_vertices, inst.state);
    const auto corr = build_correspondences(deformed, inst.cloud);
    const double beta = 0.7, lambda_m = 0.5, lambda_s = 0.1;
    const double total = total_energy(inst.tmpl, inst.state, inst.cloud, inst.observations,
                                      inst.cameras, corr, beta, lambda_m, lambda_s);
    const double expect =
        energy_fit(inst.tmpl, inst.state, inst.cloud, corr, beta).value +
        lambda_m * energy_marker(inst.tmpl, inst.state, inst.observations, inst.cameras).value +
        lambda_s * energy_smooth(inst.tmpl, inst.state).value;
    CHECK(total == doctest::Approx(expect).epsilon(1e-15));
  }
  // the weighting itself: components (1, 2, 3) with lambda_m 0.5, lambda_s 0.1
  CHECK(1.0 + 0.5 * 2.0 + 0.1 * 3.0 == doctest::Approx(2.3));
}

TEST_CASE("chain templates disable the point-to-face term") {
  const JointChain chain = build_chain_template(5, 10.0);
  const auto tmpl = make_deformable(chain);
  CHECK(tmpl.is_chain);
  CHECK(tmpl.faces.empty());
  const auto state = DeformationState::identity(tmpl.rest_vertices.size());
  PointCloud cloud;
  cloud.points = {tmpl.rest_vertices[2] + Vec3(0, 3.0, 0)};
  const auto corr = build_correspondences(tmpl.rest_vertices, cloud);
  const auto term = energy_fit(tmpl, state, cloud, corr, 1.0);
  // point-to-vertex only: 3^2
  CHECK(term.value == doctest::Approx(9.0));
  CHECK(term.residuals.size() == 3);
  // chain adjacency graph
  CHECK(tmpl.graph.neighbors[0] == std::vector<int>{1});
  CHECK(tmpl.graph.neighbors[2] == (std::vector<int>{1, 3}));
}
