#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uvtrack/image.hpp"
#include "uvtrack/types.hpp"

namespace uvtrack {

// Hue gate for one fluorescent dye on the 0-180 hue scale.
struct DyeProfile {
  std::string name;
  double hue_lo = 0.0;
  double hue_hi = 0.0;
  double min_saturation = 0.5;
  double min_value = 0.5;
  // Optional exclusion of saturated pixels (V > 0.99), off by default.
  bool exclude_saturated = false;

  void validate() const;

  static DyeProfile uv_red();   // H in [0, 15]
  static DyeProfile uv_blue();  // H in [110, 125]
};

struct MarkerDetection {
  Pixel2 centroid = Pixel2::Zero();  // sub-pixel, V-weighted
  int pixel_count = 0;
  std::string dye;
  std::string camera_id;
  int frame_index = 0;
};

// Hue-gated blob detection: pixels pass iff hue in [lo, hi], S >= min_sat and
// V >= min_value; passing pixels are grouped into 8-connected components and
// components with at least min_blob_size pixels emit V-weighted centroids.
std::vector<MarkerDetection> detect_markers(const ImageHsv& image,
                                            const DyeProfile& profile,
                                            int min_blob_size = 4);

// Greedy mutual-nearest-neighbor assignment between detections and predicted
// marker positions. Pairs farther apart than gate_px are dropped; every
// detection and every marker is used at most once.
std::vector<std::pair<std::string, MarkerDetection>> match_detections(
    std::span<const MarkerDetection> detections,
    std::span<const std::pair<std::string, Pixel2>> predicted,
    double gate_px);

}  // namespace uvtrack
