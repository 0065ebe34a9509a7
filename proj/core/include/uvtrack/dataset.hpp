#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uvtrack/detection.hpp"
#include "uvtrack/synth.hpp"
#include "uvtrack/tracking.hpp"

namespace uvtrack {

// On-disk dataset layout:
//   <dir>/scene.json                resolved scene spec
//   <dir>/cameras.json              camera rig file
//   <dir>/template.obj + bindings.json   (grid scenes)
//   <dir>/chain.json                (chain scenes)
//   <dir>/frames/frame_%05d.json    cloud + observations + reference rays
//   <dir>/gt/sequence.jsonl         ground-truth fitted frames

struct Dataset {
  SceneSpec spec;
  std::vector<CameraModel> cameras;
  SceneTemplate scene;
  std::vector<FrameRender> frames;
};

void write_dataset(const std::filesystem::path& dir, const SceneSpec& spec,
                   std::span<const CameraModel> cameras, const SceneTemplate& scene,
                   std::span<const FrameRender> frames);

Dataset load_dataset(const std::filesystem::path& dir);

// Fitted sequences: JSON-lines, one frame per line with its marker ids.
void save_fitted_sequence(const std::filesystem::path& path,
                          const DeformableTemplate& tmpl,
                          std::span<const FittedFrame> frames,
                          bool include_timing = false);

struct LoadedSequence {
  std::vector<FittedFrame> frames;
  std::vector<std::string> marker_ids;
};

LoadedSequence load_fitted_sequence(const std::filesystem::path& path);

// Warped labels: one JSON file per camera per frame under
// <dir>/<camera_id>/frame_%05d.json.
void save_labels(const std::filesystem::path& dir, const WarpedLabelSet& labels);

// Delay curves: CSV rows (delay_ms, sigma_ms, mean_point_to_ray_mm).
void write_curve_csv(const std::filesystem::path& path,
                     std::span<const std::pair<double, std::vector<DelayCurvePoint>>> curves);

// Detections: JSON array of {camera_id, frame, dye, cx, cy, pixel_count}.
void save_detections(const std::filesystem::path& path,
                     std::span<const MarkerDetection> detections);
std::vector<MarkerDetection> load_detections(const std::filesystem::path& path);

}  // namespace uvtrack
