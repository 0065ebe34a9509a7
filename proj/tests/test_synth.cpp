#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_helpers.hpp"
#include "uvtrack/dataset.hpp"
#include "uvtrack/synth.hpp"

using namespace uvtrack;
using namespace testutil;

TEST_CASE("build_rig places every camera on the sphere looking at the origin") {
  RigSpec spec;  // 33 + 9 at 750
  const auto rig = build_rig(spec);
  REQUIRE(rig.size() == 42);
  int uv = 0, ref = 0;
  for (const auto& cam : rig) {
    CHECK(std::abs(cam.center().norm() - 750.0) < 1e-6);
    const Pixel2 px = project(cam, Vec3::Zero());
    CHECK((px - Pixel2(512.0, 512.0)).norm() < 1e-9);
    if (is_uv_camera_id(cam.id)) ++uv;
    if (is_reference_camera_id(cam.id)) ++ref;
  }
  CHECK(uv == 33);
  CHECK(ref == 9);

  RigSpec small;
  small.n_uv_cameras = 2;
  small.n_reference_cameras = 1;
  small.radius_mm = 100.0;
  const auto trio = build_rig(small);
  REQUIRE(trio.size() == 3);
  for (const auto& cam : trio) {
    CHECK((project(cam, Vec3::Zero()) - Pixel2(512.0, 512.0)).norm() < 1e-9);
  }
}

TEST_CASE("every motion kind returns the rest pose at t = 0") {
  const auto grid_tmpl = make_deformable(build_grid_template(5, 6, 10.0));
  const auto chain_tmpl = make_deformable(build_chain_template(8, 10.0));
  for (const auto kind : {MotionModel::Kind::CylindricalBend,
                          MotionModel::Kind::SinusoidalWave,
                          MotionModel::Kind::RigidSwing}) {
    MotionModel model;
    model.kind = kind;
    model.amplitude = 20.0;
    model.drift_velocity = Vec3(10.0, 5.0, -3.0);
    const MotionSample sample = evaluate_motion(grid_tmpl, model, 0.0);
    for (std::size_t i = 0; i < sample.vertices.size(); ++i) {
      CHECK((sample.vertices[i] - grid_tmpl.rest_vertices[i]).norm() < 1e-12);
    }
  }
  MotionModel swing;
  swing.kind = MotionModel::Kind::ChainSwing;
  swing.amplitude = 30.0;
  const MotionSample sample = evaluate_motion(chain_tmpl, swing, 0.0);
  for (std::size_t i = 0; i < sample.vertices.size(); ++i) {
    CHECK((sample.vertices[i] - chain_tmpl.rest_vertices[i]).norm() < 1e-12);
  }
}

TEST_CASE("cylindrical bend is an isometric roll onto a cylinder") {
  const GridTemplate grid = build_grid_template(9, 11, 20.0);
  const auto tmpl = make_deformable(grid);
  MotionModel bend;
  bend.kind = MotionModel::Kind::CylindricalBend;
  bend.amplitude = 30.0;
  bend.frequency_hz = 0.25;
  const MotionSample sample = evaluate_motion(tmpl, bend, 1000.0);  // peak bend

  const double width = (grid.cols - 1) * grid.spacing_mm;
  const double kappa = 30.0 * M_PI / 180.0 / width;
  const double radius = 1.0 / kappa;

  // every bent row lies on the cylinder around (x_mid, *, z = radius)
  for (std::size_t i = 0; i < sample.vertices.size(); ++i) {
    const Vec3& v = sample.vertices[i];
    const double r = std::hypot(v.x() - 0.0, v.z() - radius);
    CHECK(std::abs(r - radius) < 1e-9);
  }
  // arc length between x-neighbors equals the rest spacing (isometry), and
  // y-edges keep their chord length exactly
  auto vid = [&](int r, int c) { return r * grid.cols + c; };
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c + 1 < grid.cols; ++c) {
      const Vec3 a = sample.vertices[vid(r, c)] - Vec3(0, 0, radius);
      const Vec3 b = sample.vertices[vid(r, c + 1)] - Vec3(0, 0, radius);
      const double angle = std::acos(std::clamp(
          (a.x() * b.x() + a.z() * b.z()) / (std::hypot(a.x(), a.z()) * std::hypot(b.x(), b.z())),
          -1.0, 1.0));
      CHECK(std::abs(angle * radius - grid.spacing_mm) < 1e-6);
    }
  }
  for (int r = 0; r + 1 < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const double len = (sample.vertices[vid(r, c)] - sample.vertices[vid(r + 1, c)]).norm();
      CHECK(std::abs(len - grid.spacing_mm) < 1e-9);
    }
  }
}

TEST_CASE("rigid swing preserves all pairwise distances") {
  const auto tmpl = make_deformable(build_grid_template(4, 5, 15.0));
  MotionModel swing;
  swing.kind = MotionModel::Kind::RigidSwing;
  swing.amplitude = 35.0;
  swing.axis = Vec3(1.0, 0.3, -0.2);
  swing.pivot = Vec3(5.0, 40.0, 0.0);
  const MotionSample sample = evaluate_motion(tmpl, swing, 321.0);
  for (std::size_t i = 0; i < tmpl.rest_vertices.size(); ++i) {
    for (std::size_t j = i + 1; j < tmpl.rest_vertices.size(); ++j) {
      const double rest = (tmpl.rest_vertices[i] - tmpl.rest_vertices[j]).norm();
      const double now = (sample.vertices[i] - sample.vertices[j]).norm();
      CHECK(std::abs(rest - now) < 1e-9);
    }
  }
}

TEST_CASE("unknown motion kinds are rejected") {
  CHECK_THROWS_AS(motion_kind_from_string("quantum_flutter"), Error);
  try {
    motion_kind_from_string("quantum_flutter");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownMotion);
  }
}

namespace {

SceneSpec tiny_scene() {
  SceneSpec spec = scene_preset("grid13x15");
  spec.grid_rows = 4;
  spec.grid_cols = 5;
  spec.rig.n_uv_cameras = 6;
  spec.rig.n_reference_cameras = 2;
  spec.timeline.n_frames = 3;
  spec.cloud_samples_per_face = 4;
  spec.motion.pivot = Vec3(0.0, 1.5 * spec.grid_spacing_mm, 0.0);
  return spec;
}

}  // namespace

TEST_CASE("noiseless, zero-delay rendering reproduces exact projections") {
  SceneSpec spec = tiny_scene();
  spec.noise_px = 0.0;
  spec.timeline.delay_ms = 0.0;
  const SceneTemplate scene = build_scene_template(spec);
  const auto rig = build_rig(spec.rig);
  const auto frames = render_sequence(scene.deformable, spec.motion, rig, spec.timeline,
                                      spec.noise_px, spec.seed, spec.cloud_samples_per_face);
  REQUIRE(frames.size() == 3);
  std::map<std::string, const CameraModel*> cams;
  for (const auto& cam : rig) cams[cam.id] = &cam;
  std::map<std::string, int> marker_index;
  for (int i = 0; i < static_cast<int>(scene.deformable.markers.size()); ++i) {
    marker_index[scene.deformable.markers[i].marker_id] = i;
  }
  for (const auto& frame : frames) {
    CHECK_FALSE(frame.observations.empty());
    for (const auto& obs : frame.observations) {
      const Vec3 marker = frame.ground_truth.marker_points_3d[marker_index[obs.marker_id]];
      CHECK((obs.pixel - project(*cams[obs.camera_id], marker)).norm() < 1e-12);
    }
    // zero delay: reference rays pass through the ground-truth markers
    for (const auto& ray : frame.reference_rays) {
      const Vec3 marker = frame.ground_truth.marker_points_3d[marker_index[ray.marker_id]];
      CHECK(point_to_ray_distance(marker, ray.ray) < 1e-9);
    }
  }
}

TEST_CASE("a trigger delay makes reference rays miss the UV-instant markers") {
  SceneSpec spec = tiny_scene();
  spec.noise_px = 0.0;
  spec.timeline.delay_ms = 4.0;
  spec.motion.amplitude = 25.0;
  spec.motion.frequency_hz = 2.0;  // fast motion
  const SceneTemplate scene = build_scene_template(spec);
  const auto rig = build_rig(spec.rig);
  const auto frames = render_sequence(scene.deformable, spec.motion, rig, spec.timeline,
                                      0.0, spec.seed, spec.cloud_samples_per_face);
  std::map<std::string, int> marker_index;
  for (int i = 0; i < static_cast<int>(scene.deformable.markers.size()); ++i) {
    marker_index[scene.deformable.markers[i].marker_id] = i;
  }
  double max_miss = 0.0;
  for (const auto& ray : frames[1].reference_rays) {
    const Vec3 marker = frames[1].ground_truth.marker_points_3d[marker_index[ray.marker_id]];
    max_miss = std::max(max_miss, point_to_ray_distance(marker, ray.ray));
  }
  CHECK(max_miss > 0.05);
}

TEST_CASE("rendering is bit-identical for a fixed seed") {
  const SceneSpec spec = tiny_scene();
  const SceneTemplate scene = build_scene_template(spec);
  const auto rig = build_rig(spec.rig);
  const auto dir = std::filesystem::temp_directory_path() / "uvtrack_synth_det";
  std::filesystem::remove_all(dir);

  for (int run = 0; run < 2; ++run) {
    const auto frames = render_sequence(scene.deformable, spec.motion, rig, spec.timeline,
                                        spec.noise_px, spec.seed, spec.cloud_samples_per_face);
    write_dataset(dir / std::to_string(run), spec, rig, scene, frames);
  }
  for (const char* name : {"scene.json", "cameras.json", "gt/sequence.jsonl",
                           "frames/frame_00000.json", "frames/frame_00002.json"}) {
    std::ifstream a(dir / "0" / name), b(dir / "1" / name);
    REQUIRE(a.good());
    REQUIRE(b.good());
    const std::string sa((std::istreambuf_iterator<char>(a)), {});
    const std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }
}

TEST_CASE("the energies agree with the generator at the ground-truth state") {
  SceneSpec spec = tiny_scene();
  spec.noise_px = 0.0;
  const SceneTemplate scene = build_scene_template(spec);
  const auto rig = build_rig(spec.rig);
  const auto frames = render_sequence(scene.deformable, spec.motion, rig, spec.timeline,
                                      0.0, spec.seed, spec.cloud_samples_per_face);
  // rigid swing ground truth: E_marker and E_smooth both vanish
  for (const auto& frame : frames) {
    const double e = total_energy(scene.deformable, frame.ground_truth.state, PointCloud{},
                                  frame.observations, rig, CorrespondenceSet{}, 1.0, 1.0, 1.0);
    CHECK(e < 1e-6);
  }
}

TEST_CASE("scene specs round trip through JSON") {
  const auto dir = std::filesystem::temp_directory_path() / "uvtrack_scene_spec";
  std::filesystem::create_directories(dir);
  SceneSpec spec = scene_preset("grid13x15_drift");
  spec.timeline.n_frames = 17;
  spec.seed = 99;
  save_scene_spec(dir / "scene.json", spec);
  const SceneSpec loaded = load_scene_spec(dir / "scene.json");
  CHECK(loaded.name == spec.name);
  CHECK(loaded.timeline.n_frames == 17);
  CHECK(loaded.seed == 99);
  CHECK(loaded.motion.kind == spec.motion.kind);
  CHECK((loaded.motion.drift_velocity - spec.motion.drift_velocity).norm() < 1e-12);
  CHECK(loaded.noise_px == spec.noise_px);

  CHECK_THROWS_AS(scene_preset("no_such_scene"), Error);
}

TEST_CASE("chain preset renders and loads") {
  SceneSpec spec = scene_preset("chain10");
  spec.rig.n_uv_cameras = 4;
  spec.rig.n_reference_cameras = 1;
  spec.timeline.n_frames = 2;
  const SceneTemplate scene = build_scene_template(spec);
  CHECK(scene.is_chain);
  const auto rig = build_rig(spec.rig);
  const auto frames = render_sequence(scene.deformable, spec.motion, rig, spec.timeline,
                                      spec.noise_px, spec.seed, 5);
  CHECK(frames.size() == 2);
  CHECK(frames[0].cloud.points.size() == 9 * 5);  // 9 segments, 5 samples each

  const auto dir = std::filesystem::temp_directory_path() / "uvtrack_chain_ds";
  std::filesystem::remove_all(dir);
  write_dataset(dir, spec, rig, scene, frames);
  const Dataset loaded = load_dataset(dir);
  CHECK(loaded.scene.is_chain);
  CHECK(loaded.scene.deformable.rest_vertices.size() == 10);
  CHECK(loaded.frames.size() == 2);
}
