#include "uvtrack/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "uvtrack/so3.hpp"

namespace uvtrack {

void RigSpec::validate() const {
  if (n_uv_cameras < 1 || n_reference_cameras < 1 || radius_mm <= 0.0 ||
      image_width <= 0 || image_height <= 0 || focal_px <= 0.0) {
    fail(ErrorCode::InvalidArgument, "rig spec: counts >= 1, radius/focal/size > 0");
  }
}

void TriggerTimeline::validate() const {
  if (!(frame_interval_ms > 0.0) || delay_ms < 0.0 || delay_ms >= frame_interval_ms ||
      n_frames < 1) {
    fail(ErrorCode::InvalidArgument,
         "timeline: need 0 <= delay < frame_interval and n_frames >= 1");
  }
}

bool is_uv_camera_id(const std::string& id) { return id.rfind("uv", 0) == 0; }
bool is_reference_camera_id(const std::string& id) { return id.rfind("ref", 0) == 0; }

std::vector<CameraModel> build_rig(const RigSpec& spec) {
  spec.validate();
  const int total = spec.n_uv_cameras + spec.n_reference_cameras;

  // Spread the reference cameras evenly through the Fibonacci ordering so
  // both sets cover the sphere.
  std::vector<char> is_ref(total, 0);
  for (int m = 0; m < spec.n_reference_cameras; ++m) {
    is_ref[(m * total) / spec.n_reference_cameras] = 1;
  }

  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<CameraModel> cameras;
  cameras.reserve(total);
  int uv_count = 0, ref_count = 0;
  for (int i = 0; i < total; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / total;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * i;
    const Vec3 position = spec.radius_mm * Vec3(r * std::cos(phi), r * std::sin(phi), z);

    const Vec3 forward = (-position).normalized();  // look at the origin
    Vec3 up = std::abs(forward.z()) > 0.999 ? Vec3::UnitY() : Vec3::UnitZ();
    const Vec3 right = up.cross(forward).normalized();
    up = forward.cross(right);

    CameraModel cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = up.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * position;
    cam.intrinsics = Mat3::Identity();
    cam.intrinsics(0, 0) = cam.intrinsics(1, 1) = spec.focal_px;
    cam.intrinsics(0, 2) = 0.5 * spec.image_width;
    cam.intrinsics(1, 2) = 0.5 * spec.image_height;
    cam.width = spec.image_width;
    cam.height = spec.image_height;
    char buf[16];
    if (is_ref[i]) {
      std::snprintf(buf, sizeof(buf), "ref%02d", ref_count++);
    } else {
      std::snprintf(buf, sizeof(buf), "uv%02d", uv_count++);
    }
    cam.id = buf;
    cam.validate();
    cameras.push_back(std::move(cam));
  }
  return cameras;
}

MotionModel::Kind motion_kind_from_string(const std::string& name) {
  if (name == "cylindrical_bend") return MotionModel::Kind::CylindricalBend;
  if (name == "sinusoidal_wave") return MotionModel::Kind::SinusoidalWave;
  if (name == "rigid_swing") return MotionModel::Kind::RigidSwing;
  if (name == "chain_swing") return MotionModel::Kind::ChainSwing;
  fail(ErrorCode::UnknownMotion, "unknown motion kind '" + name + "'");
}

std::string motion_kind_to_string(MotionModel::Kind kind) {
  switch (kind) {
    case MotionModel::Kind::CylindricalBend: return "cylindrical_bend";
    case MotionModel::Kind::SinusoidalWave: return "sinusoidal_wave";
    case MotionModel::Kind::RigidSwing: return "rigid_swing";
    case MotionModel::Kind::ChainSwing: return "chain_swing";
  }
  fail(ErrorCode::UnknownMotion, "unknown motion kind");
}

namespace {

double oscillation(const MotionModel& model, double t_ms) {
  return model.amplitude * std::sin(2.0 * std::numbers::pi * model.frequency_hz * t_ms / 1000.0);
}

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

MotionSample evaluate_motion(const DeformableTemplate& tmpl, const MotionModel& model,
                             double t_ms) {
  if (t_ms < 0.0) fail(ErrorCode::InvalidArgument, "evaluate_motion: t must be >= 0");
  const auto& rest = tmpl.rest_vertices;
  const int n = static_cast<int>(rest.size());
  MotionSample sample;
  sample.vertices.resize(n);
  sample.rotations.assign(n, Mat3::Identity());

  switch (model.kind) {
    case MotionModel::Kind::CylindricalBend: {
      if (tmpl.is_chain) {
        fail(ErrorCode::InvalidArgument, "cylindrical_bend needs a mesh template");
      }
      double x_min = rest[0].x(), x_max = rest[0].x();
      for (const auto& v : rest) {
        x_min = std::min(x_min, v.x());
        x_max = std::max(x_max, v.x());
      }
      const double width = x_max - x_min;
      const double mid = 0.5 * (x_min + x_max);
      const double angle = oscillation(model, t_ms) * kDegToRad;  // total turn
      const double kappa = width > 0.0 ? angle / width : 0.0;
      for (int i = 0; i < n; ++i) {
        const double xi = rest[i].x() - mid;
        if (std::abs(kappa) < 1e-12) {
          sample.vertices[i] = rest[i];
        } else {
          sample.vertices[i] = Vec3(mid + std::sin(kappa * xi) / kappa, rest[i].y(),
                                    rest[i].z() + (1.0 - std::cos(kappa * xi)) / kappa);
          sample.rotations[i] = so3_exp(Vec3(0.0, -kappa * xi, 0.0));
        }
      }
      break;
    }
    case MotionModel::Kind::SinusoidalWave: {
      if (tmpl.is_chain) {
        fail(ErrorCode::InvalidArgument, "sinusoidal_wave needs a mesh template");
      }
      double x_min = rest[0].x(), x_max = rest[0].x();
      for (const auto& v : rest) {
        x_min = std::min(x_min, v.x());
        x_max = std::max(x_max, v.x());
      }
      const double wavelength =
          model.wavelength_mm > 0.0 ? model.wavelength_mm : std::max(x_max - x_min, 1.0);
      const double gain = std::sin(2.0 * std::numbers::pi * model.frequency_hz * t_ms / 1000.0);
      for (int i = 0; i < n; ++i) {
        const double phase = 2.0 * std::numbers::pi * (rest[i].x() - x_min) / wavelength;
        sample.vertices[i] =
            rest[i] + Vec3(0.0, 0.0, model.amplitude * gain * std::sin(phase));
      }
      break;
    }
    case MotionModel::Kind::RigidSwing: {
      const Mat3 rot = so3_exp(model.axis.normalized() * (oscillation(model, t_ms) * kDegToRad));
      for (int i = 0; i < n; ++i) {
        sample.vertices[i] = model.pivot + rot * (rest[i] - model.pivot);
        sample.rotations[i] = rot;
      }
      break;
    }
    case MotionModel::Kind::ChainSwing: {
      if (!tmpl.is_chain) {
        fail(ErrorCode::InvalidArgument, "chain_swing needs a chain template");
      }
      const Vec3 pivot = rest.front();
      const Mat3 rot = so3_exp(model.axis.normalized() * (oscillation(model, t_ms) * kDegToRad));
      for (int i = 0; i < n; ++i) {
        sample.vertices[i] = pivot + rot * (rest[i] - pivot);
        sample.rotations[i] = rot;
      }
      break;
    }
  }

  const Vec3 drift = model.drift_velocity * (t_ms / 1000.0);
  for (auto& v : sample.vertices) v += drift;
  return sample;
}

namespace {

// splitmix64, used to derive independent per-(frame, camera) substreams.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t frame, std::uint64_t lane) {
  return std::mt19937_64(mix64(seed ^ mix64(frame + 1) ^ mix64(lane * 0x10001 + 0xABCD)));
}

DeformationState ground_truth_state(const DeformableTemplate& tmpl,
                                    const MotionSample& sample) {
  DeformationState state = DeformationState::identity(tmpl.rest_vertices.size());
  for (std::size_t i = 0; i < state.size(); ++i) {
    state.translations[i] = sample.vertices[i] - tmpl.rest_vertices[i];
    state.rotations[i] = so3_log(sample.rotations[i]);
  }
  return state;
}

}  // namespace

std::vector<FrameRender> render_sequence(const DeformableTemplate& tmpl,
                                         const MotionModel& model,
                                         std::span<const CameraModel> rig,
                                         const TriggerTimeline& timeline,
                                         double noise_px, std::uint64_t seed,
                                         int cloud_samples_per_face) {
  timeline.validate();
  if (noise_px < 0.0 || cloud_samples_per_face < 0) {
    fail(ErrorCode::InvalidArgument, "render_sequence: noise and sampling must be >= 0");
  }

  std::vector<const CameraModel*> uv_cams, ref_cams;
  for (const auto& cam : rig) {
    if (is_reference_camera_id(cam.id)) ref_cams.push_back(&cam);
    else uv_cams.push_back(&cam);
  }

  std::vector<FrameRender> frames;
  frames.reserve(timeline.n_frames);
  for (int k = 0; k < timeline.n_frames; ++k) {
    FrameRender frame;
    frame.frame_index = k;
    frame.timestamp_ms = k * timeline.frame_interval_ms;
    const MotionSample at_uv = evaluate_motion(tmpl, model, frame.timestamp_ms);
    const MotionSample at_ref =
        evaluate_motion(tmpl, model, frame.timestamp_ms + timeline.delay_ms);

    std::vector<Vec3> markers_uv(tmpl.markers.size()), markers_ref(tmpl.markers.size());
    for (std::size_t i = 0; i < tmpl.markers.size(); ++i) {
      markers_uv[i] = attachment_position(at_uv.vertices, tmpl.markers[i]);
      markers_ref[i] = attachment_position(at_ref.vertices, tmpl.markers[i]);
    }

    FitReport gt_report;
    gt_report.converged = true;
    gt_report.status = "ground_truth";
    frame.ground_truth = make_fitted_frame(tmpl, k, frame.timestamp_ms,
                                           ground_truth_state(tmpl, at_uv), gt_report);

    // Point cloud on the ground-truth surface at the UV instant.
    auto cloud_rng = substream(seed, k, 0xC0FFEE);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    if (!tmpl.faces.empty()) {
      for (const auto& f : tmpl.faces) {
        for (int s = 0; s < cloud_samples_per_face; ++s) {
          double u = uni(cloud_rng), v = uni(cloud_rng);
          if (u + v > 1.0) {  // reflect into the triangle
            u = 1.0 - u;
            v = 1.0 - v;
          }
          frame.cloud.points.push_back(at_uv.vertices[f[0]] +
                                       u * (at_uv.vertices[f[1]] - at_uv.vertices[f[0]]) +
                                       v * (at_uv.vertices[f[2]] - at_uv.vertices[f[0]]));
        }
      }
    } else {
      // chains: stratified samples along each segment
      for (std::size_t j = 0; j + 1 < at_uv.vertices.size(); ++j) {
        for (int s = 0; s < cloud_samples_per_face; ++s) {
          const double t = (s + uni(cloud_rng)) / cloud_samples_per_face;
          frame.cloud.points.push_back(at_uv.vertices[j] +
                                       t * (at_uv.vertices[j + 1] - at_uv.vertices[j]));
        }
      }
    }

    // UV observations at the UV instant.
    for (std::size_t ci = 0; ci < uv_cams.size(); ++ci) {
      const CameraModel& cam = *uv_cams[ci];
      auto rng = substream(seed, k, ci);
      std::normal_distribution<double> gauss(0.0, 1.0);
      const auto vis = visibility_weights(at_uv.vertices, tmpl.faces, markers_uv, cam);
      for (std::size_t mi = 0; mi < markers_uv.size(); ++mi) {
        if (!vis[mi]) continue;
        Pixel2 pixel = project(cam, markers_uv[mi]);
        if (noise_px > 0.0) {
          pixel += noise_px * Pixel2(gauss(rng), gauss(rng));
        }
        frame.observations.push_back(
            {cam.id, tmpl.markers[mi].marker_id, pixel, 1.0});
      }
    }

    // Reference rays at the delayed instant.
    for (std::size_t ci = 0; ci < ref_cams.size(); ++ci) {
      const CameraModel& cam = *ref_cams[ci];
      auto rng = substream(seed, k, 0x8000 + ci);
      std::normal_distribution<double> gauss(0.0, 1.0);
      const auto vis = visibility_weights(at_ref.vertices, tmpl.faces, markers_ref, cam);
      for (std::size_t mi = 0; mi < markers_ref.size(); ++mi) {
        if (!vis[mi]) continue;
        Pixel2 pixel = project(cam, markers_ref[mi]);
        if (noise_px > 0.0) {
          pixel += noise_px * Pixel2(gauss(rng), gauss(rng));
        }
        if (!pixel_in_bounds(cam, pixel)) continue;  // noise may push it out
        frame.reference_rays.push_back({cam.id, tmpl.markers[mi].marker_id,
                                        pixel_to_ray(cam, pixel),
                                        frame.timestamp_ms + timeline.delay_ms});
      }
    }

    frames.push_back(std::move(frame));
  }
  return frames;
}

ImageRgb render_dot_image(int width, int height, std::span<const DotSpec> dots) {
  if (width <= 0 || height <= 0) {
    fail(ErrorCode::InvalidArgument, "render_dot_image: empty image");
  }
  ImageRgb image(width, height);
  std::vector<float> peak(static_cast<std::size_t>(width) * height, 0.f);
  std::vector<float> hue(static_cast<std::size_t>(width) * height, 0.f);
  for (const auto& dot : dots) {
    const int radius = static_cast<int>(std::ceil(4.0 * dot.sigma_px));
    const int cx = static_cast<int>(std::lround(dot.center.x()));
    const int cy = static_cast<int>(std::lround(dot.center.y()));
    for (int y = std::max(0, cy - radius); y <= std::min(height - 1, cy + radius); ++y) {
      for (int x = std::max(0, cx - radius); x <= std::min(width - 1, cx + radius); ++x) {
        const double dx = x - dot.center.x();
        const double dy = y - dot.center.y();
        const double v =
            dot.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * dot.sigma_px * dot.sigma_px));
        const std::size_t idx = static_cast<std::size_t>(y) * width + x;
        if (v > peak[idx]) {
          peak[idx] = static_cast<float>(v);
          hue[idx] = static_cast<float>(dot.hue);
        }
      }
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * width + x;
      if (peak[idx] <= 0.f) continue;
      std::uint8_t* px = image.at(x, y);
      hsv_to_rgb(hue[idx], 1.0, peak[idx], px[0], px[1], px[2]);
    }
  }
  return image;
}

// --- scene specs ------------------------------------------------------------

SceneSpec scene_preset(const std::string& name) {
  SceneSpec spec;
  spec.name = name;
  if (name == "grid13x15") {
    spec.motion.kind = MotionModel::Kind::RigidSwing;
    spec.motion.amplitude = 15.0;
    spec.motion.frequency_hz = 0.5;
    spec.motion.axis = Vec3::UnitX();
    spec.motion.pivot = Vec3(0.0, 0.5 * (spec.grid_rows - 1) * spec.grid_spacing_mm, 0.0);
  } else if (name == "grid13x15_bend") {
    spec.motion.kind = MotionModel::Kind::CylindricalBend;
    spec.motion.amplitude = 30.0;
    spec.motion.frequency_hz = 0.25;
  } else if (name == "grid13x15_drift") {
    spec.motion.kind = MotionModel::Kind::RigidSwing;
    spec.motion.amplitude = 0.0;
    spec.motion.drift_velocity = Vec3(60.0, 25.0, 40.0);
    spec.noise_px = 0.0;
  } else if (name == "chain10") {
    spec.template_kind = SceneSpec::TemplateKind::Chain;
    spec.motion.kind = MotionModel::Kind::ChainSwing;
    spec.motion.amplitude = 20.0;
    spec.motion.frequency_hz = 0.5;
    spec.motion.axis = Vec3::UnitZ();
    spec.dye = "uv_red";
  } else {
    fail(ErrorCode::InvalidArgument, "unknown scene preset '" + name + "'");
  }
  return spec;
}

namespace {

using nlohmann::json;

json vec3j(const Vec3& v) { return json{v.x(), v.y(), v.z()}; }

Vec3 jvec3(const json& j) {
  if (!j.is_array() || j.size() != 3) fail(ErrorCode::ParseError, "expected [x, y, z]");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open scene spec " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  SceneSpec spec;
  spec.name = j.value("name", spec.name);
  const json& tj = j.at("template");
  const std::string kind = tj.at("type").get<std::string>();
  if (kind == "grid") {
    spec.template_kind = SceneSpec::TemplateKind::Grid;
    spec.grid_rows = tj.at("rows").get<int>();
    spec.grid_cols = tj.at("cols").get<int>();
    spec.grid_spacing_mm = tj.at("spacing_mm").get<double>();
  } else if (kind == "chain") {
    spec.template_kind = SceneSpec::TemplateKind::Chain;
    spec.chain_joints = tj.at("joints").get<int>();
    spec.chain_spacing_mm = tj.at("spacing_mm").get<double>();
  } else {
    fail(ErrorCode::ParseError, "scene template type must be 'grid' or 'chain'");
  }
  if (j.contains("rig")) {
    const json& rj = j["rig"];
    spec.rig.n_uv_cameras = rj.value("n_uv", spec.rig.n_uv_cameras);
    spec.rig.n_reference_cameras = rj.value("n_reference", spec.rig.n_reference_cameras);
    spec.rig.radius_mm = rj.value("radius_mm", spec.rig.radius_mm);
    spec.rig.image_width = rj.value("image_width", spec.rig.image_width);
    spec.rig.image_height = rj.value("image_height", spec.rig.image_height);
    spec.rig.focal_px = rj.value("focal_px", spec.rig.focal_px);
  }
  if (j.contains("motion")) {
    const json& mj = j["motion"];
    spec.motion.kind = motion_kind_from_string(mj.at("kind").get<std::string>());
    spec.motion.amplitude = mj.value("amplitude", spec.motion.amplitude);
    spec.motion.frequency_hz = mj.value("frequency_hz", spec.motion.frequency_hz);
    if (mj.contains("axis")) spec.motion.axis = jvec3(mj["axis"]);
    if (mj.contains("pivot")) spec.motion.pivot = jvec3(mj["pivot"]);
    if (mj.contains("drift_velocity")) spec.motion.drift_velocity = jvec3(mj["drift_velocity"]);
    spec.motion.wavelength_mm = mj.value("wavelength_mm", spec.motion.wavelength_mm);
  }
  if (j.contains("timeline")) {
    const json& lj = j["timeline"];
    spec.timeline.frame_interval_ms = lj.value("frame_interval_ms", spec.timeline.frame_interval_ms);
    spec.timeline.delay_ms = lj.value("delay_ms", spec.timeline.delay_ms);
    spec.timeline.n_frames = lj.value("n_frames", spec.timeline.n_frames);
  }
  spec.noise_px = j.value("noise_px", spec.noise_px);
  spec.seed = j.value("seed", spec.seed);
  spec.cloud_samples_per_face = j.value("cloud_samples_per_face", spec.cloud_samples_per_face);
  spec.dye = j.value("dye", spec.dye);
  return spec;
}

void save_scene_spec(const std::filesystem::path& path, const SceneSpec& spec) {
  json tj;
  if (spec.template_kind == SceneSpec::TemplateKind::Grid) {
    tj = {{"type", "grid"},
          {"rows", spec.grid_rows},
          {"cols", spec.grid_cols},
          {"spacing_mm", spec.grid_spacing_mm}};
  } else {
    tj = {{"type", "chain"},
          {"joints", spec.chain_joints},
          {"spacing_mm", spec.chain_spacing_mm}};
  }
  const json j{
      {"name", spec.name},
      {"template", tj},
      {"rig",
       {{"n_uv", spec.rig.n_uv_cameras},
        {"n_reference", spec.rig.n_reference_cameras},
        {"radius_mm", spec.rig.radius_mm},
        {"image_width", spec.rig.image_width},
        {"image_height", spec.rig.image_height},
        {"focal_px", spec.rig.focal_px}}},
      {"motion",
       {{"kind", motion_kind_to_string(spec.motion.kind)},
        {"amplitude", spec.motion.amplitude},
        {"frequency_hz", spec.motion.frequency_hz},
        {"axis", vec3j(spec.motion.axis)},
        {"pivot", vec3j(spec.motion.pivot)},
        {"drift_velocity", vec3j(spec.motion.drift_velocity)},
        {"wavelength_mm", spec.motion.wavelength_mm}}},
      {"timeline",
       {{"frame_interval_ms", spec.timeline.frame_interval_ms},
        {"delay_ms", spec.timeline.delay_ms},
        {"n_frames", spec.timeline.n_frames}}},
      {"noise_px", spec.noise_px},
      {"seed", spec.seed},
      {"cloud_samples_per_face", spec.cloud_samples_per_face},
      {"dye", spec.dye}};
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write scene spec " + path.string());
  out << j.dump(2) << "\n";
}

SceneTemplate build_scene_template(const SceneSpec& spec) {
  SceneTemplate scene;
  if (spec.template_kind == SceneSpec::TemplateKind::Grid) {
    GridTemplate grid = build_grid_template(spec.grid_rows, spec.grid_cols, spec.grid_spacing_mm);
    scene.mesh = grid.mesh;
    scene.bindings = grid.bindings;
    scene.deformable = make_deformable(grid);
  } else {
    scene.chain = build_chain_template(spec.chain_joints, spec.chain_spacing_mm);
    scene.deformable = make_deformable(scene.chain);
    scene.is_chain = true;
  }
  return scene;
}

}  // namespace uvtrack
