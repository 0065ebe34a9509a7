#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uvtrack/detection.hpp"
#include "uvtrack/tracking.hpp"

namespace uvtrack {

// Virtual multi-camera rig: cameras on a sphere looking at the origin.
struct RigSpec {
  int n_uv_cameras = 33;
  int n_reference_cameras = 9;
  double radius_mm = 750.0;
  int image_width = 1024;
  int image_height = 1024;
  double focal_px = 1000.0;

  void validate() const;
};

// Cameras placed by Fibonacci-sphere sampling, all looking at the origin.
// UV and reference roles are interleaved over the sphere and encoded in the
// camera id prefix ("uv##" / "ref##").
std::vector<CameraModel> build_rig(const RigSpec& spec);

bool is_uv_camera_id(const std::string& id);
bool is_reference_camera_id(const std::string& id);

// Trigger timing: UV frames at k * frame_interval, reference exposures
// delay_ms later.
struct TriggerTimeline {
  double frame_interval_ms = 16.0;
  double delay_ms = 2.0;
  int n_frames = 1;

  void validate() const;
};

// Parametric ground-truth deformations. All kinds return the rest pose at
// t = 0 and are smooth in t. drift_velocity adds a constant-velocity
// translation on top of any kind, so a zero-amplitude rigid_swing with a
// drift is a pure constant-velocity scene.
struct MotionModel {
  enum class Kind { CylindricalBend, SinusoidalWave, RigidSwing, ChainSwing };

  Kind kind = Kind::RigidSwing;
  double amplitude = 0.0;        // degrees for bend/swing, mm for wave
  double frequency_hz = 0.5;
  Vec3 axis = Vec3::UnitX();     // swing rotation axis
  Vec3 pivot = Vec3::Zero();     // swing pivot (chain_swing pivots at joint 0)
  Vec3 drift_velocity = Vec3::Zero();  // mm/s
  double wavelength_mm = 0.0;    // wave; 0 means the template's x extent
};

// Throws UnknownMotion for unrecognized names.
MotionModel::Kind motion_kind_from_string(const std::string& name);
std::string motion_kind_to_string(MotionModel::Kind kind);

// Ground-truth pose at one time instant: deformed vertices plus the local
// rotation of every vertex (exact for rigid motions and cylindrical bends,
// identity for waves).
struct MotionSample {
  std::vector<Vec3> vertices;
  std::vector<Mat3> rotations;
};

MotionSample evaluate_motion(const DeformableTemplate& tmpl, const MotionModel& model,
                             double t_ms);

// Everything rendered for one frame of a synthetic capture.
struct FrameRender {
  int frame_index = 0;
  double timestamp_ms = 0.0;
  PointCloud cloud;                        // sampled on the surface at t
  MarkerObservationSet observations;       // UV cameras at t
  std::vector<ReferenceRay> reference_rays;  // reference cameras at t + delay
  FittedFrame ground_truth;
};

// Renders the full synthetic capture. Pixel noise is seeded isotropic
// Gaussian; occlusion is applied through visibility_weights; the cloud is
// sampled uniformly per face (per segment for chains) with seeded jitter.
// Identical inputs and seed give bit-identical output.
std::vector<FrameRender> render_sequence(const DeformableTemplate& tmpl,
                                         const MotionModel& model,
                                         std::span<const CameraModel> rig,
                                         const TriggerTimeline& timeline,
                                         double noise_px, std::uint64_t seed,
                                         int cloud_samples_per_face = 10);

// Raster mode: Gaussian dots on black, for end-to-end detection tests.
struct DotSpec {
  Pixel2 center = Pixel2::Zero();
  double hue = 0.0;        // 0-180
  double sigma_px = 1.5;
  double amplitude = 1.0;  // peak V; values above 1 saturate the dot core
};

ImageRgb render_dot_image(int width, int height, std::span<const DotSpec> dots);

// Scene description: template + rig + motion + timeline + sampling knobs.
struct SceneSpec {
  std::string name = "grid13x15";

  enum class TemplateKind { Grid, Chain } template_kind = TemplateKind::Grid;
  int grid_rows = 13;
  int grid_cols = 15;
  double grid_spacing_mm = 20.0;
  int chain_joints = 10;
  double chain_spacing_mm = 12.7;

  RigSpec rig;
  MotionModel motion;
  TriggerTimeline timeline;
  double noise_px = 0.5;
  std::uint64_t seed = 7;
  int cloud_samples_per_face = 10;
  std::string dye = "uv_blue";  // dye drawn in raster mode
};

// Built-in scenes: "grid13x15" (swinging paper grid), "grid13x15_bend",
// "grid13x15_drift" (constant velocity), "chain10" (swinging rope).
// Throws InvalidArgument for unknown names.
SceneSpec scene_preset(const std::string& name);

SceneSpec load_scene_spec(const std::filesystem::path& path);
void save_scene_spec(const std::filesystem::path& path, const SceneSpec& spec);

// The template a scene spec describes, both in its native form and unified.
struct SceneTemplate {
  DeformableTemplate deformable;
  TemplateMesh mesh;                    // grid scenes
  std::vector<MarkerBinding> bindings;  // grid scenes
  JointChain chain;                     // chain scenes
  bool is_chain = false;
};

SceneTemplate build_scene_template(const SceneSpec& spec);

}  // namespace uvtrack
