#include <benchmark/benchmark.h>

#include <random>

#include "uvtrack/detection.hpp"
#include "uvtrack/fitting.hpp"
#include "uvtrack/kdtree.hpp"
#include "uvtrack/synth.hpp"

using namespace uvtrack;

namespace {

struct GridFixture {
  DeformableTemplate tmpl;
  PointCloud cloud;
  MarkerObservationSet observations;
  std::vector<CameraModel> cameras;
  DeformationState state;
  CorrespondenceSet corr;

  explicit GridFixture(int rows, int cols) {
    tmpl = make_deformable(build_grid_template(rows, cols, 20.0));
    RigSpec rig;
    const auto all = build_rig(rig);
    for (const auto& cam : all) {
      if (is_uv_camera_id(cam.id)) cameras.push_back(cam);
    }
    MotionModel bend;
    bend.kind = MotionModel::Kind::CylindricalBend;
    bend.amplitude = 30.0;
    bend.frequency_hz = 0.25;
    const MotionSample sample = evaluate_motion(tmpl, bend, 1000.0);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (const auto& f : tmpl.faces) {
      for (int s = 0; s < 10; ++s) {
        double a = u01(rng), b = u01(rng);
        if (a + b > 1.0) {
          a = 1.0 - a;
          b = 1.0 - b;
        }
        cloud.points.push_back(sample.vertices[f[0]] +
                               a * (sample.vertices[f[1]] - sample.vertices[f[0]]) +
                               b * (sample.vertices[f[2]] - sample.vertices[f[0]]));
      }
    }
    for (const auto& cam : cameras) {
      for (const auto& m : tmpl.markers) {
        observations.push_back(
            {cam.id, m.marker_id, project(cam, attachment_position(sample.vertices, m)), 1.0});
      }
    }
    state = DeformationState::identity(tmpl.rest_vertices.size());
    corr = build_correspondences(apply_state(tmpl.rest_vertices, state), cloud);
  }
};

const GridFixture& fixture() {
  static GridFixture f(13, 15);
  return f;
}

}  // namespace

static void BM_EnergyFit(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(energy_fit(f.tmpl, f.state, f.cloud, f.corr, 1.0).value);
  }
}
BENCHMARK(BM_EnergyFit);

static void BM_EnergyMarker(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        energy_marker(f.tmpl, f.state, f.observations, f.cameras).value);
  }
}
BENCHMARK(BM_EnergyMarker);

static void BM_EnergySmooth(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(energy_smooth(f.tmpl, f.state).value);
  }
}
BENCHMARK(BM_EnergySmooth);

static void BM_CorrespondenceRebuild(benchmark::State& state) {
  const auto& f = fixture();
  const auto deformed = apply_state(f.tmpl.rest_vertices, f.state);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_correspondences(deformed, f.cloud));
  }
}
BENCHMARK(BM_CorrespondenceRebuild);

static void BM_ResidualJacobian(benchmark::State& state) {
  const auto& f = fixture();
  const FrozenStructure frozen = freeze_structure(f.tmpl, f.state, f.cloud);
  const ResidualWeights weights{1.0, 10.0, 100.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(residual_jacobian(f.tmpl, f.state, f.cloud, f.observations,
                                               f.cameras, frozen, weights));
  }
}
BENCHMARK(BM_ResidualJacobian);

static void BM_SingleFrameFit(benchmark::State& state) {
  const auto& f = fixture();
  FitConfig config;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_template(
        f.tmpl, f.cloud, f.observations, f.cameras, config,
        DeformationState::identity(f.tmpl.rest_vertices.size())));
  }
}
BENCHMARK(BM_SingleFrameFit)->Unit(benchmark::kMillisecond)->Iterations(1);

static void BM_Triangulate(benchmark::State& state) {
  RigSpec spec;
  const auto rig = build_rig(spec);
  std::vector<std::pair<CameraModel, Pixel2>> obs;
  const Vec3 point(12.0, -30.0, 45.0);
  for (const auto& cam : rig) {
    if (is_uv_camera_id(cam.id)) obs.emplace_back(cam, project(cam, point));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(triangulate(obs));
  }
}
BENCHMARK(BM_Triangulate);

static void BM_DetectMarkers(benchmark::State& state) {
  std::vector<DotSpec> dots;
  for (int i = 0; i < 200; ++i) {
    dots.push_back({Pixel2(20.0 + 48.0 * (i % 20), 20.0 + 48.0 * (i / 20)), 8.0, 1.5, 1.0});
  }
  const ImageHsv hsv = to_hsv(render_dot_image(1024, 512, dots));
  for (auto _ : state) {
    benchmark::DoNotOptimize(detect_markers(hsv, DyeProfile::uv_red()));
  }
}
BENCHMARK(BM_DetectMarkers);

static void BM_KdTreeNearest(benchmark::State& state) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 2000; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  KdTree3 tree(pts);
  Vec3 q(0, 0, 0);
  for (auto _ : state) {
    q.x() = u(rng);
    benchmark::DoNotOptimize(tree.nearest(q));
  }
}
BENCHMARK(BM_KdTreeNearest);

BENCHMARK_MAIN();
