#include "uvtrack/dataset.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "json_helpers.hpp"

namespace uvtrack {

namespace {

using detail::load_json_file;
using detail::vec3_from_json;
using detail::vec3_json;
using detail::write_json_file;
using nlohmann::json;

std::string frame_file_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d.json", frame);
  return buf;
}

json frame_render_json(const FrameRender& frame) {
  json cloud = json::array();
  for (const auto& p : frame.cloud.points) cloud.push_back(vec3_json(p));
  json observations = json::array();
  for (const auto& o : frame.observations) {
    observations.push_back({{"camera_id", o.camera_id},
                            {"marker_id", o.marker_id},
                            {"u", o.pixel.x()},
                            {"v", o.pixel.y()},
                            {"w", o.weight}});
  }
  json rays = json::array();
  for (const auto& r : frame.reference_rays) {
    rays.push_back({{"camera_id", r.camera_id},
                    {"marker_id", r.marker_id},
                    {"origin", vec3_json(r.ray.origin)},
                    {"direction", vec3_json(r.ray.direction)},
                    {"timestamp_ms", r.timestamp_ms}});
  }
  return json{{"frame", frame.frame_index},
              {"timestamp_ms", frame.timestamp_ms},
              {"cloud", cloud},
              {"observations", observations},
              {"reference_rays", rays}};
}

FrameRender frame_render_from_json(const json& j) {
  FrameRender frame;
  frame.frame_index = j.at("frame").get<int>();
  frame.timestamp_ms = j.at("timestamp_ms").get<double>();
  for (const auto& p : j.at("cloud")) frame.cloud.points.push_back(vec3_from_json(p));
  for (const auto& o : j.at("observations")) {
    frame.observations.push_back({o.at("camera_id").get<std::string>(),
                                  o.at("marker_id").get<std::string>(),
                                  Pixel2(o.at("u").get<double>(), o.at("v").get<double>()),
                                  o.value("w", 1.0)});
  }
  for (const auto& r : j.at("reference_rays")) {
    ReferenceRay ray;
    ray.camera_id = r.at("camera_id").get<std::string>();
    ray.marker_id = r.at("marker_id").get<std::string>();
    ray.ray.origin = vec3_from_json(r.at("origin"));
    ray.ray.direction = vec3_from_json(r.at("direction"));
    ray.timestamp_ms = r.value("timestamp_ms", 0.0);
    frame.reference_rays.push_back(std::move(ray));
  }
  return frame;
}

json fitted_frame_json(const DeformableTemplate& tmpl, const FittedFrame& frame,
                       bool include_timing) {
  json vertices = json::array();
  for (const auto& v : frame.deformed_vertices) vertices.push_back(vec3_json(v));
  json markers = json::array();
  for (std::size_t i = 0; i < frame.marker_points_3d.size(); ++i) {
    markers.push_back({{"marker_id", tmpl.markers[i].marker_id},
                       {"p", vec3_json(frame.marker_points_3d[i])}});
  }
  return json{{"frame", frame.frame_index},
              {"timestamp_ms", frame.timestamp_ms},
              {"state", detail::state_json(frame.state)},
              {"vertices", vertices},
              {"markers", markers},
              {"report", detail::fit_report_json(frame.fit_report, include_timing)}};
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const SceneSpec& spec,
                   std::span<const CameraModel> cameras, const SceneTemplate& scene,
                   std::span<const FrameRender> frames) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "gt");
  save_scene_spec(dir / "scene.json", spec);
  save_camera_rig(dir / "cameras.json", cameras);
  if (scene.is_chain) {
    save_chain(dir / "chain.json", scene.chain);
  } else {
    save_obj(dir / "template.obj", scene.mesh);
    save_bindings(dir / "bindings.json", scene.bindings);
  }
  for (const auto& frame : frames) {
    write_json_file(dir / "frames" / frame_file_name(frame.frame_index),
                    frame_render_json(frame));
  }
  std::vector<FittedFrame> gt;
  gt.reserve(frames.size());
  for (const auto& frame : frames) gt.push_back(frame.ground_truth);
  save_fitted_sequence(dir / "gt" / "sequence.jsonl", scene.deformable, gt);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  data.spec = load_scene_spec(dir / "scene.json");
  data.cameras = load_camera_rig(dir / "cameras.json");
  if (data.spec.template_kind == SceneSpec::TemplateKind::Chain) {
    data.scene.chain = load_chain(dir / "chain.json");
    data.scene.is_chain = true;
    data.scene.deformable = make_deformable(data.scene.chain);
  } else {
    data.scene.mesh = load_obj(dir / "template.obj");
    data.scene.bindings = load_bindings(dir / "bindings.json");
    data.scene.deformable = make_deformable(data.scene.mesh, data.scene.bindings);
  }
  const auto gt = load_fitted_sequence(dir / "gt" / "sequence.jsonl");
  for (int k = 0;; ++k) {
    const auto path = dir / "frames" / frame_file_name(k);
    if (!std::filesystem::exists(path)) break;
    data.frames.push_back(frame_render_from_json(load_json_file(path)));
    if (k < static_cast<int>(gt.frames.size())) {
      data.frames.back().ground_truth = gt.frames[k];
    }
  }
  return data;
}

void save_fitted_sequence(const std::filesystem::path& path,
                          const DeformableTemplate& tmpl,
                          std::span<const FittedFrame> frames, bool include_timing) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& frame : frames) {
    out << fitted_frame_json(tmpl, frame, include_timing).dump() << "\n";
  }
}

LoadedSequence load_fitted_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  LoadedSequence seq;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    FittedFrame frame;
    frame.frame_index = j.at("frame").get<int>();
    frame.timestamp_ms = j.at("timestamp_ms").get<double>();
    frame.state = detail::state_from_json(j.at("state"));
    for (const auto& v : j.at("vertices")) frame.deformed_vertices.push_back(vec3_from_json(v));
    std::vector<std::string> ids;
    for (const auto& m : j.at("markers")) {
      ids.push_back(m.at("marker_id").get<std::string>());
      frame.marker_points_3d.push_back(vec3_from_json(m.at("p")));
    }
    if (j.contains("report")) {
      frame.fit_report = detail::fit_report_from_json(j["report"]);
    }
    if (seq.marker_ids.empty()) {
      seq.marker_ids = std::move(ids);
    } else if (seq.marker_ids != ids) {
      fail(ErrorCode::ParseError, path.string() + ": inconsistent marker ids across frames");
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

void save_labels(const std::filesystem::path& dir, const WarpedLabelSet& labels) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / labels.camera_id);
  json entries = json::array();
  for (const auto& label : labels.labels) {
    json e{{"marker_id", label.marker_id}, {"visible", label.visible}};
    if (label.projectable) {
      e["x"] = label.pixel.x();
      e["y"] = label.pixel.y();
    } else {
      e["x"] = nullptr;
      e["y"] = nullptr;
    }
    entries.push_back(std::move(e));
  }
  write_json_file(dir / labels.camera_id / frame_file_name(labels.frame_index),
                  json{{"camera_id", labels.camera_id},
                       {"frame", labels.frame_index},
                       {"timestamp_ms", labels.timestamp_ms},
                       {"labels", entries}});
}

void write_curve_csv(const std::filesystem::path& path,
                     std::span<const std::pair<double, std::vector<DelayCurvePoint>>> curves) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "delay_ms,sigma_ms,mean_point_to_ray_mm\n";
  char buf[128];
  for (const auto& [delay, points] : curves) {
    for (const auto& p : points) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", delay, p.sigma_ms,
                    p.mean_distance_mm);
      out << buf;
    }
  }
}

void save_detections(const std::filesystem::path& path,
                     std::span<const MarkerDetection> detections) {
  json j = json::array();
  for (const auto& d : detections) {
    j.push_back({{"camera_id", d.camera_id},
                 {"frame", d.frame_index},
                 {"dye", d.dye},
                 {"cx", d.centroid.x()},
                 {"cy", d.centroid.y()},
                 {"pixel_count", d.pixel_count}});
  }
  write_json_file(path, j);
}

std::vector<MarkerDetection> load_detections(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  std::vector<MarkerDetection> detections;
  for (const auto& dj : j) {
    MarkerDetection d;
    d.camera_id = dj.at("camera_id").get<std::string>();
    d.frame_index = dj.at("frame").get<int>();
    d.dye = dj.at("dye").get<std::string>();
    d.centroid = Pixel2(dj.at("cx").get<double>(), dj.at("cy").get<double>());
    d.pixel_count = dj.at("pixel_count").get<int>();
    detections.push_back(std::move(d));
  }
  return detections;
}

}  // namespace uvtrack
