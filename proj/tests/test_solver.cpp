#include <doctest.h>

#include <Eigen/Sparse>

#include "test_helpers.hpp"
#include "uvtrack/fitting.hpp"
#include "uvtrack/synth.hpp"

using namespace uvtrack;
using namespace testutil;

namespace {

double& state_component(DeformationState& state, int idx) {
  const int vertex = idx / 6, comp = idx % 6;
  return comp < 3 ? state.rotations[vertex][comp] : state.translations[vertex][comp - 3];
}

}  // namespace

TEST_CASE("analytic Jacobian matches central finite differences") {
  std::mt19937_64 rng(100);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    SmallInstance inst = random_instance(rng);
    const FrozenStructure frozen = freeze_structure(inst.tmpl, inst.state, inst.cloud);
    const ResidualWeights weights{0.8, 2.0, 3.0};

    const Eigen::SparseMatrix<double> jac =
        residual_jacobian(inst.tmpl, inst.state, inst.cloud, inst.observations,
                          inst.cameras, frozen, weights);
    const int dim = static_cast<int>(jac.cols());
    Eigen::MatrixXd fd(jac.rows(), dim);
    for (int c = 0; c < dim; ++c) {
      DeformationState plus = inst.state, minus = inst.state;
      state_component(plus, c) += h;
      state_component(minus, c) -= h;
      const Eigen::VectorXd rp = residual_vector(inst.tmpl, plus, inst.cloud,
                                                 inst.observations, inst.cameras, frozen, weights);
      const Eigen::VectorXd rm = residual_vector(inst.tmpl, minus, inst.cloud,
                                                 inst.observations, inst.cameras, frozen, weights);
      fd.col(c) = (rp - rm) / (2.0 * h);
    }
    const double rel = (Eigen::MatrixXd(jac) - fd).norm() / std::max(1e-12, fd.norm());
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("fit converges immediately at the global minimum") {
  const GridTemplate grid = build_grid_template(5, 5, 10.0);
  const auto tmpl = make_deformable(grid);
  const auto zero = DeformationState::identity(tmpl.rest_vertices.size());

  PointCloud cloud;
  cloud.points = tmpl.rest_vertices;
  std::vector<CameraModel> cameras{
      look_at_camera(Vec3(0, 0, -600), Vec3::Zero(), 1000, 1024, 1024, "c0"),
      look_at_camera(Vec3(400, 0, -400), Vec3::Zero(), 1000, 1024, 1024, "c1"),
      look_at_camera(Vec3(-300, 300, -400), Vec3::Zero(), 1000, 1024, 1024, "c2"),
      look_at_camera(Vec3(0, -400, -450), Vec3::Zero(), 1000, 1024, 1024, "c3")};
  MarkerObservationSet obs;
  for (const auto& cam : cameras) {
    for (const auto& m : tmpl.markers) {
      obs.push_back({cam.id, m.marker_id,
                     project(cam, attachment_position(tmpl.rest_vertices, m)), 1.0});
    }
  }

  FitConfig config;
  const FitResult result = fit_template(tmpl, cloud, obs, cameras, config, zero);
  CHECK(result.report.converged);
  CHECK(result.report.iterations.back().e_total < 1e-8);
  CHECK(result.report.final_rms_reprojection_px < 1e-6);
}

TEST_CASE("fit throws NothingToFit when both inputs are empty") {
  const GridTemplate grid = build_grid_template(3, 3, 10.0);
  const auto tmpl = make_deformable(grid);
  const auto zero = DeformationState::identity(tmpl.rest_vertices.size());
  FitConfig config;
  CHECK_THROWS_AS(fit_template(tmpl, PointCloud{}, MarkerObservationSet{},
                               std::vector<CameraModel>{}, config, zero),
                  Error);
}

namespace {

// A noiseless bent-grid instance with a known ground truth.
struct BentScene {
  DeformableTemplate tmpl;
  PointCloud cloud;
  MarkerObservationSet observations;
  std::vector<CameraModel> cameras;
  std::vector<Vec3> gt_markers;
};

BentScene make_bent_scene(int rows, int cols, double spacing, double bend_deg,
                          int n_uv_cams, int samples_per_face) {
  BentScene scene;
  const GridTemplate grid = build_grid_template(rows, cols, spacing);
  scene.tmpl = make_deformable(grid);

  MotionModel bend;
  bend.kind = MotionModel::Kind::CylindricalBend;
  bend.amplitude = bend_deg;
  bend.frequency_hz = 0.25;  // peak at t = 1000 ms
  const MotionSample sample = evaluate_motion(scene.tmpl, bend, 1000.0);

  RigSpec rig_spec;
  rig_spec.n_uv_cameras = n_uv_cams;
  rig_spec.n_reference_cameras = 2;
  const auto rig = build_rig(rig_spec);
  for (const auto& cam : rig) {
    if (is_uv_camera_id(cam.id)) scene.cameras.push_back(cam);
  }

  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (const auto& f : scene.tmpl.faces) {
    for (int s = 0; s < samples_per_face; ++s) {
      double a = u01(rng), b = u01(rng);
      if (a + b > 1.0) {
        a = 1.0 - a;
        b = 1.0 - b;
      }
      scene.cloud.points.push_back(sample.vertices[f[0]] +
                                   a * (sample.vertices[f[1]] - sample.vertices[f[0]]) +
                                   b * (sample.vertices[f[2]] - sample.vertices[f[0]]));
    }
  }
  for (const auto& m : scene.tmpl.markers) {
    scene.gt_markers.push_back(attachment_position(sample.vertices, m));
  }
  for (const auto& cam : scene.cameras) {
    const auto vis = visibility_weights(sample.vertices, scene.tmpl.faces,
                                        scene.gt_markers, cam);
    for (std::size_t mi = 0; mi < scene.gt_markers.size(); ++mi) {
      if (!vis[mi]) continue;
      scene.observations.push_back({cam.id, scene.tmpl.markers[mi].marker_id,
                                    project(cam, scene.gt_markers[mi]), 1.0});
    }
  }
  return scene;
}

}  // namespace

TEST_CASE("noiseless 30-degree bend of the 13x15 grid is recovered from rest") {
  const BentScene scene = make_bent_scene(13, 15, 20.0, 30.0, 33, 10);
  FitConfig config;
  const FitResult result =
      fit_template(scene.tmpl, scene.cloud, scene.observations, scene.cameras, config,
                   DeformationState::identity(scene.tmpl.rest_vertices.size()));

  const auto deformed = apply_state(scene.tmpl.rest_vertices, result.state);
  double sq = 0.0;
  for (std::size_t i = 0; i < scene.tmpl.markers.size(); ++i) {
    sq += (attachment_position(deformed, scene.tmpl.markers[i]) - scene.gt_markers[i])
              .squaredNorm();
  }
  const double rms = std::sqrt(sq / scene.tmpl.markers.size());
  CHECK(rms < 0.5);
  CHECK_FALSE(result.report.non_convergence);
}

TEST_CASE("accepted LM steps never increase the cost") {
  const BentScene scene = make_bent_scene(5, 5, 15.0, 20.0, 12, 6);
  FitConfig config;
  const FitResult result =
      fit_template(scene.tmpl, scene.cloud, scene.observations, scene.cameras, config,
                   DeformationState::identity(scene.tmpl.rest_vertices.size()));
  for (const auto& it : result.report.iterations) {
    for (std::size_t i = 1; i < it.lm_cost_trace.size(); ++i) {
      CHECK(it.lm_cost_trace[i] <= it.lm_cost_trace[i - 1]);
    }
  }
}

TEST_CASE("the continuation schedule is non-increasing and floored") {
  const BentScene scene = make_bent_scene(4, 4, 15.0, 15.0, 12, 6);
  FitConfig config;
  const FitResult result =
      fit_template(scene.tmpl, scene.cloud, scene.observations, scene.cameras, config,
                   DeformationState::identity(scene.tmpl.rest_vertices.size()));
  const auto& iters = result.report.iterations;
  for (std::size_t i = 1; i < iters.size(); ++i) {
    CHECK(iters[i].lambda_smooth <= iters[i - 1].lambda_smooth);
    CHECK(iters[i].lambda_marker <= iters[i - 1].lambda_marker);
  }
  for (const auto& it : iters) {
    CHECK(it.lambda_smooth >= config.lambda_smooth_min);
    CHECK(it.lambda_marker >= config.lambda_marker_min);
  }
}

TEST_CASE("fit config validation") {
  FitConfig config;
  config.decay = 1.5;
  CHECK_THROWS_AS(config.validate(), Error);
  config = FitConfig{};
  config.lambda_smooth_min = 200.0;  // above init
  CHECK_THROWS_AS(config.validate(), Error);
  config = FitConfig{};
  config.beta = -1.0;
  CHECK_THROWS_AS(config.validate(), Error);
}

TEST_CASE("a chain template fits a rigidly swung pose") {
  const JointChain chain = build_chain_template(10, 12.7);
  const auto tmpl = make_deformable(chain);

  MotionModel swing;
  swing.kind = MotionModel::Kind::ChainSwing;
  swing.amplitude = 25.0;
  swing.frequency_hz = 0.25;
  swing.axis = Vec3::UnitZ();
  const MotionSample sample = evaluate_motion(tmpl, swing, 1000.0);

  RigSpec rig_spec;
  rig_spec.n_uv_cameras = 8;
  rig_spec.n_reference_cameras = 1;
  std::vector<CameraModel> cameras;
  for (const auto& cam : build_rig(rig_spec)) {
    if (is_uv_camera_id(cam.id)) cameras.push_back(cam);
  }

  MarkerObservationSet obs;
  std::vector<Vec3> gt_markers;
  for (std::size_t mi = 0; mi < tmpl.markers.size(); ++mi) {
    gt_markers.push_back(attachment_position(sample.vertices, tmpl.markers[mi]));
    for (const auto& cam : cameras) {
      obs.push_back({cam.id, tmpl.markers[mi].marker_id,
                     project(cam, gt_markers.back()), 1.0});
    }
  }

  FitConfig config;
  const FitResult result = fit_template(tmpl, PointCloud{}, obs, cameras, config,
                                        DeformationState::identity(tmpl.rest_vertices.size()));
  const auto deformed = apply_state(tmpl.rest_vertices, result.state);
  double worst = 0.0;
  for (std::size_t i = 0; i < gt_markers.size(); ++i) {
    worst = std::max(worst, (deformed[i] - gt_markers[i]).norm());
  }
  CHECK(worst < 0.5);
}
