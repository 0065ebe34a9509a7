// uvtrack: synthesize, detect, fit, track, evaluate and study trigger-delay
// alignment for invisible-marker deformable-object captures.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "uvtrack/dataset.hpp"
#include "uvtrack/detection.hpp"
#include "uvtrack/metrics.hpp"
#include "uvtrack/synth.hpp"
#include "uvtrack/tracking.hpp"

namespace fs = std::filesystem;
using namespace uvtrack;

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "JSON config file for this subcommand");
  cmd->add_option("--out", opts.out, "output file or directory")->required();
  cmd->add_option("--seed", opts.seed, "random seed override")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

// --- synth ------------------------------------------------------------------

struct SynthOptions {
  CommonOptions common;
  std::string scene = "grid13x15";
  int frames = -1;
  double delay_ms = -1.0;
  double noise_px = -1.0;
  int raster_cams = 0;
};

int run_synth(const SynthOptions& opt) {
  SceneSpec spec;
  if (fs::exists(opt.scene)) {
    spec = load_scene_spec(opt.scene);
  } else if (!opt.common.config.empty() && fs::exists(opt.common.config)) {
    spec = load_scene_spec(opt.common.config);
    spec.name = opt.scene;
  } else {
    spec = scene_preset(opt.scene);
  }
  if (opt.frames > 0) spec.timeline.n_frames = opt.frames;
  if (opt.delay_ms >= 0.0) spec.timeline.delay_ms = opt.delay_ms;
  if (opt.noise_px >= 0.0) spec.noise_px = opt.noise_px;
  if (opt.common.seed_set) spec.seed = opt.common.seed;
  spec.timeline.validate();

  const SceneTemplate scene = build_scene_template(spec);
  const auto rig = build_rig(spec.rig);
  const auto frames = render_sequence(scene.deformable, spec.motion, rig, spec.timeline,
                                      spec.noise_px, spec.seed, spec.cloud_samples_per_face);
  write_dataset(opt.common.out, spec, rig, scene, frames);

  // Optional raster mode: draw the visible markers of the first N UV views as
  // saturated gaussian dots, for end-to-end detection runs.
  if (opt.raster_cams > 0) {
    const double hue =
        spec.dye == "uv_red" ? 7.0 : spec.dye == "uv_blue" ? 117.0 : 7.0;
    const fs::path image_dir = fs::path(opt.common.out) / "images";
    fs::create_directories(image_dir);
    std::map<std::string, int> marker_index;
    for (int i = 0; i < static_cast<int>(scene.deformable.markers.size()); ++i) {
      marker_index[scene.deformable.markers[i].marker_id] = i;
    }
    int rastered = 0;
    for (const auto& cam : rig) {
      if (!is_uv_camera_id(cam.id)) continue;
      if (rastered++ >= opt.raster_cams) break;
      for (const auto& frame : frames) {
        std::vector<DotSpec> dots;
        for (const auto& obs : frame.observations) {
          if (obs.camera_id != cam.id) continue;
          dots.push_back({obs.pixel, hue, 1.6, 2.0});
        }
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%05d.png", cam.id.c_str(), frame.frame_index);
        save_image(image_dir / name, render_dot_image(cam.width, cam.height, dots));
      }
    }
  }
  std::cout << "wrote " << frames.size() << " frames to " << opt.common.out << "\n";
  return 0;
}

// --- detect -----------------------------------------------------------------

struct DetectOptions {
  CommonOptions common;
  std::string images;
  std::string profile = "uv_red";
  int min_blob = 4;
};

DyeProfile profile_from_options(const DetectOptions& opt) {
  if (opt.profile == "uv_red") return DyeProfile::uv_red();
  if (opt.profile == "uv_blue") return DyeProfile::uv_blue();
  if (opt.profile == "custom") {
    if (opt.common.config.empty()) {
      fail(ErrorCode::InvalidArgument, "--profile custom requires --config <dye.json>");
    }
    std::ifstream in(opt.common.config);
    if (!in) fail(ErrorCode::IoError, "cannot open " + opt.common.config);
    nlohmann::json j;
    in >> j;
    DyeProfile profile;
    profile.name = j.value("name", std::string("custom"));
    profile.hue_lo = j.at("hue_lo").get<double>();
    profile.hue_hi = j.at("hue_hi").get<double>();
    profile.min_saturation = j.value("min_saturation", profile.min_saturation);
    profile.min_value = j.value("min_value", profile.min_value);
    profile.exclude_saturated = j.value("exclude_saturated", false);
    profile.validate();
    return profile;
  }
  fail(ErrorCode::InvalidArgument, "profile must be uv_red, uv_blue or custom");
}

// "uv03_000012.png" -> ("uv03", 12); files without the suffix get frame 0.
std::pair<std::string, int> parse_image_name(const fs::path& path) {
  const std::string stem = path.stem().string();
  const auto us = stem.rfind('_');
  if (us != std::string::npos) {
    const std::string tail = stem.substr(us + 1);
    if (!tail.empty() && std::all_of(tail.begin(), tail.end(), ::isdigit)) {
      return {stem.substr(0, us), std::stoi(tail)};
    }
  }
  return {stem, 0};
}

int run_detect(const DetectOptions& opt) {
  const DyeProfile profile = profile_from_options(opt);
  std::vector<fs::path> files;
  if (fs::is_directory(opt.images)) {
    for (const auto& entry : fs::directory_iterator(opt.images)) {
      const auto ext = entry.path().extension().string();
      if (ext == ".png" || ext == ".ppm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(opt.images);
  }
  if (files.empty()) fail(ErrorCode::InvalidArgument, "no .png/.ppm images under " + opt.images);

  std::vector<MarkerDetection> all;
  for (const auto& file : files) {
    const auto [camera_id, frame] = parse_image_name(file);
    const ImageHsv hsv = to_hsv(load_image(file));
    auto detections = detect_markers(hsv, profile, opt.min_blob);
    for (auto& d : detections) {
      d.camera_id = camera_id;
      d.frame_index = frame;
      all.push_back(std::move(d));
    }
  }
  save_detections(opt.common.out, all);
  std::cout << "wrote " << all.size() << " detections to " << opt.common.out << "\n";
  return 0;
}

// --- fit ----------------------------------------------------------------------

struct FitOptions {
  CommonOptions common;
  std::string dataset;
  int frame = 0;
  bool timing = false;
};

FitConfig fit_config_from(const CommonOptions& common) {
  if (common.config.empty()) return FitConfig{};
  return load_fit_config(common.config);
}

int run_fit(const FitOptions& opt) {
  const Dataset data = load_dataset(opt.dataset);
  if (opt.frame < 0 || opt.frame >= static_cast<int>(data.frames.size())) {
    fail(ErrorCode::InvalidArgument, "frame index out of range");
  }
  const FitConfig config = fit_config_from(opt.common);
  const auto& frame = data.frames[opt.frame];
  const FitResult result =
      fit_template(data.scene.deformable, frame.cloud, frame.observations, data.cameras,
                   config, DeformationState::identity(data.scene.deformable.rest_vertices.size()));

  fs::create_directories(opt.common.out);
  save_state(fs::path(opt.common.out) / "state.json", result.state);
  save_fit_report(fs::path(opt.common.out) / "report.json", result.report, opt.timing);
  std::cout << "fit frame " << opt.frame << ": status=" << result.report.status
            << " e_total=" << result.report.iterations.back().e_total
            << " rms_px=" << result.report.final_rms_reprojection_px << "\n";
  if (result.report.non_convergence) {
    fail(ErrorCode::InvalidArgument, "fit did not converge (see report.json)");
  }
  return 0;
}

// --- track --------------------------------------------------------------------

struct TrackOptions {
  CommonOptions common;
  std::string dataset;
  bool timing = false;
};

int run_track(const TrackOptions& opt) {
  const Dataset data = load_dataset(opt.dataset);
  const FitConfig config = fit_config_from(opt.common);

  std::vector<FrameInput> inputs;
  inputs.reserve(data.frames.size());
  for (const auto& frame : data.frames) {
    inputs.push_back({frame.cloud, frame.observations, frame.timestamp_ms});
  }
  const auto fitted = track_sequence(data.scene.deformable, inputs, data.cameras, config);

  fs::create_directories(opt.common.out);
  save_fitted_sequence(fs::path(opt.common.out) / "sequence.jsonl", data.scene.deformable,
                       fitted, opt.timing);

  // Warp markers into every reference view at that view's capture instant:
  // frames are interpolated forward by the trigger delay; the last frame has
  // no successor and is warped uninterpolated.
  const fs::path labels_dir = fs::path(opt.common.out) / "labels";
  int flagged = 0;
  for (std::size_t k = 0; k < fitted.size(); ++k) {
    if (fitted[k].fit_report.non_convergence) ++flagged;
    FittedFrame at_ref = fitted[k];
    if (k + 1 < fitted.size()) {
      const double interval = fitted[k + 1].timestamp_ms - fitted[k].timestamp_ms;
      at_ref = interpolate_frame(fitted[k], fitted[k + 1],
                                 std::min(data.spec.timeline.delay_ms, interval), interval);
    }
    for (const auto& cam : data.cameras) {
      if (!is_reference_camera_id(cam.id)) continue;
      save_labels(labels_dir, warp_features(data.scene.deformable, at_ref, cam));
    }
  }
  std::cout << "tracked " << fitted.size() << " frames (" << flagged
            << " flagged) into " << opt.common.out << "\n";
  return 0;
}

// --- eval ---------------------------------------------------------------------

struct EvalOptions {
  CommonOptions common;
  std::string fitted;
  std::string dataset;
  std::string camera;
};

int run_eval(const EvalOptions& opt) {
  const Dataset data = load_dataset(opt.dataset);
  const LoadedSequence est = load_fitted_sequence(opt.fitted);
  const LoadedSequence gt = load_fitted_sequence(fs::path(opt.dataset) / "gt/sequence.jsonl");
  if (est.frames.size() != gt.frames.size()) {
    fail(ErrorCode::TopologyMismatch, "fitted and ground-truth sequences differ in length");
  }
  if (est.marker_ids != gt.marker_ids) {
    fail(ErrorCode::TopologyMismatch, "fitted and ground-truth marker ids differ");
  }

  const CameraModel* flow_cam = nullptr;
  for (const auto& cam : data.cameras) {
    if (opt.camera.empty() ? is_reference_camera_id(cam.id) : cam.id == opt.camera) {
      flow_cam = &cam;
      break;
    }
  }
  if (!flow_cam) fail(ErrorCode::InvalidArgument, "no reference camera for flow evaluation");

  std::vector<std::pair<int, double>> v2v, marker_err;
  for (std::size_t k = 0; k < est.frames.size(); ++k) {
    v2v.emplace_back(static_cast<int>(k),
                     vertex_to_vertex_error(est.frames[k].deformed_vertices,
                                            gt.frames[k].deformed_vertices));
    marker_err.emplace_back(static_cast<int>(k),
                            vertex_to_vertex_error(est.frames[k].marker_points_3d,
                                                   gt.frames[k].marker_points_3d));
  }

  // 2D flows at the markers in the chosen reference view, est vs gt
  auto flow_at = [&](const LoadedSequence& seq, std::size_t k) {
    FlowField field;
    for (std::size_t m = 0; m < seq.marker_ids.size(); ++m) {
      const Vec3& a = seq.frames[k].marker_points_3d[m];
      const Vec3& b = seq.frames[k + 1].marker_points_3d[m];
      if (camera_depth(*flow_cam, a) <= 0.0 || camera_depth(*flow_cam, b) <= 0.0) continue;
      field.flows.emplace_back(seq.marker_ids[m],
                               project(*flow_cam, b) - project(*flow_cam, a));
    }
    return field;
  };
  std::vector<std::pair<int, double>> aepe, mse;
  for (std::size_t k = 0; k + 1 < est.frames.size(); ++k) {
    const FlowError err = flow_error(flow_at(est, k), flow_at(gt, k));
    aepe.emplace_back(static_cast<int>(k), err.aepe_px);
    mse.emplace_back(static_cast<int>(k), err.mse_px2);
  }

  fs::create_directories(opt.common.out);
  const MetricReport v2v_report = make_metric_report("vertex_to_vertex", "mm", v2v);
  const MetricReport marker_report = make_metric_report("marker_distance", "mm", marker_err);
  write_metric_csv(fs::path(opt.common.out) / "vertex_to_vertex.csv", {&v2v_report, 1});
  write_metric_csv(fs::path(opt.common.out) / "marker_distance.csv", {&marker_report, 1});
  if (!aepe.empty()) {
    const std::vector<MetricReport> flow_reports{
        make_metric_report("aepe", "px", aepe), make_metric_report("mse", "px2", mse)};
    write_metric_csv(fs::path(opt.common.out) / "flow_error.csv", flow_reports);
  }
  std::cout << "eval: v2v=" << v2v_report.aggregate
            << " mm, marker=" << marker_report.aggregate << " mm over "
            << est.frames.size() << " frames -> " << opt.common.out << "\n";
  return 0;
}

// --- curve --------------------------------------------------------------------

struct CurveOptions {
  CommonOptions common;
  std::string dataset;
  std::vector<double> delays{1.0, 4.0};
  std::string sigmas = "0..15";
  double sigma_step = 1.0;
  std::string tracked;  // optional fitted sequence instead of ground truth
};

std::vector<double> parse_sigmas(const std::string& text, double step) {
  std::vector<double> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const double lo = std::stod(text.substr(0, dots));
    const double hi = std::stod(text.substr(dots + 2));
    if (!(step > 0.0) || hi < lo) fail(ErrorCode::InvalidArgument, "bad sigma range");
    for (double s = lo; s <= hi + 1e-9; s += step) out.push_back(s);
    return out;
  }
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  if (out.empty()) fail(ErrorCode::InvalidArgument, "no sigma values given");
  return out;
}

int run_curve(const CurveOptions& opt) {
  const Dataset data = load_dataset(opt.dataset);
  const auto sigmas = parse_sigmas(opt.sigmas, opt.sigma_step);

  std::vector<FittedFrame> sequence;
  if (opt.tracked.empty()) {
    for (const auto& frame : data.frames) sequence.push_back(frame.ground_truth);
  } else {
    sequence = load_fitted_sequence(opt.tracked).frames;
  }
  if (sequence.size() < 2) {
    fail(ErrorCode::InsufficientFrames, "the dataset has fewer than 2 frames");
  }

  const auto rig = build_rig(data.spec.rig);
  std::vector<std::pair<double, std::vector<DelayCurvePoint>>> curves;
  for (double delay : opt.delays) {
    SceneSpec spec = data.spec;
    spec.timeline.delay_ms = delay;
    spec.timeline.validate();
    const auto frames = render_sequence(data.scene.deformable, spec.motion, rig,
                                        spec.timeline, spec.noise_px, spec.seed,
                                        spec.cloud_samples_per_face);
    std::vector<std::vector<ReferenceRay>> rays;
    rays.reserve(frames.size());
    for (const auto& frame : frames) rays.push_back(frame.reference_rays);
    curves.emplace_back(
        delay, delay_alignment_curve(data.scene.deformable, sequence, rays, sigmas));
  }
  write_curve_csv(opt.common.out, curves);
  std::cout << "wrote " << curves.size() << " delay curves to " << opt.common.out << "\n";
  return 0;
}

void print_error_json(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"invisible-marker deformable object tracking toolkit"};
  app.require_subcommand(1);

  SynthOptions synth_opt;
  auto* synth_cmd = app.add_subcommand("synth", "render a synthetic capture dataset");
  synth_cmd->add_option("--scene", synth_opt.scene, "scene preset name or scene JSON file");
  synth_cmd->add_option("--frames", synth_opt.frames, "number of frames");
  synth_cmd->add_option("--delay-ms", synth_opt.delay_ms, "UV-to-reference trigger delay");
  synth_cmd->add_option("--noise-px", synth_opt.noise_px, "observation pixel noise");
  synth_cmd->add_option("--raster-cams", synth_opt.raster_cams,
                        "also rasterize marker-dot images for the first N UV cameras");
  add_common(synth_cmd, synth_opt.common);

  DetectOptions detect_opt;
  auto* detect_cmd = app.add_subcommand("detect", "hue-gated marker detection on images");
  detect_cmd->add_option("--images", detect_opt.images, "image file or directory")->required();
  detect_cmd->add_option("--profile", detect_opt.profile, "uv_red | uv_blue | custom");
  detect_cmd->add_option("--min-blob", detect_opt.min_blob, "minimum blob pixel count");
  add_common(detect_cmd, detect_opt.common);

  FitOptions fit_opt;
  auto* fit_cmd = app.add_subcommand("fit", "fit the template to one frame");
  fit_cmd->add_option("--dataset", fit_opt.dataset, "dataset directory")->required();
  fit_cmd->add_option("--frame", fit_opt.frame, "frame index");
  fit_cmd->add_flag("--timing", fit_opt.timing, "include wall time in the report");
  add_common(fit_cmd, fit_opt.common);

  TrackOptions track_opt;
  auto* track_cmd = app.add_subcommand("track", "track a full sequence with warm starts");
  track_cmd->add_option("--dataset", track_opt.dataset, "dataset directory")->required();
  track_cmd->add_flag("--timing", track_opt.timing, "include wall times in reports");
  add_common(track_cmd, track_opt.common);

  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "compare a fitted sequence to ground truth");
  eval_cmd->add_option("--fitted", eval_opt.fitted, "fitted sequence.jsonl")->required();
  eval_cmd->add_option("--dataset", eval_opt.dataset, "dataset directory")->required();
  eval_cmd->add_option("--camera", eval_opt.camera, "reference camera for flow metrics");
  add_common(eval_cmd, eval_opt.common);

  CurveOptions curve_opt;
  auto* curve_cmd = app.add_subcommand("curve", "point-to-ray distance vs. sigma");
  curve_cmd->add_option("--dataset", curve_opt.dataset, "dataset directory")->required();
  curve_cmd->add_option("--delays", curve_opt.delays, "delay values in ms")->delimiter(',');
  curve_cmd->add_option("--sigmas", curve_opt.sigmas, "sigma list 'a,b,c' or range 'lo..hi'");
  curve_cmd->add_option("--step", curve_opt.sigma_step, "sigma range step");
  curve_cmd->add_option("--tracked", curve_opt.tracked, "use this fitted sequence instead of GT");
  add_common(curve_cmd, curve_opt.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (*synth_cmd) return run_synth(synth_opt);
    if (*detect_cmd) return run_detect(detect_opt);
    if (*fit_cmd) return run_fit(fit_opt);
    if (*track_cmd) return run_track(track_opt);
    if (*eval_cmd) return run_eval(eval_opt);
    if (*curve_cmd) return run_curve(curve_opt);
  } catch (const Error& e) {
    print_error_json(e.code_name(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error_json("Internal", e.what());
    return 1;
  }
  return 2;
}
