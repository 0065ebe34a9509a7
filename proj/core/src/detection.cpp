#include "uvtrack/detection.hpp"

#include <algorithm>
#include <limits>

namespace uvtrack {

void DyeProfile::validate() const {
  if (!(0.0 <= hue_lo && hue_lo <= hue_hi && hue_hi < 180.0)) {
    fail(ErrorCode::InvalidArgument, "dye '" + name + "': need 0 <= lo <= hi < 180");
  }
  if (min_saturation < 0.0 || min_saturation > 1.0 ||
      min_value < 0.0 || min_value > 1.0) {
    fail(ErrorCode::InvalidArgument, "dye '" + name + "': thresholds must be in [0, 1]");
  }
}

DyeProfile DyeProfile::uv_red() {
  return DyeProfile{.name = "uv_red", .hue_lo = 0.0, .hue_hi = 15.0};
}

DyeProfile DyeProfile::uv_blue() {
  return DyeProfile{.name = "uv_blue", .hue_lo = 110.0, .hue_hi = 125.0};
}

std::vector<MarkerDetection> detect_markers(const ImageHsv& image,
                                            const DyeProfile& profile,
                                            int min_blob_size) {
  profile.validate();
  if (image.width <= 0 || image.height <= 0) {
    fail(ErrorCode::InvalidArgument, "detect_markers: empty image");
  }
  const int w = image.width, h = image.height;
  auto passes = [&](std::size_t i) {
    const double hue = image.hue[i];
    const double s = image.saturation[i];
    const double v = image.value[i];
    if (hue < profile.hue_lo || hue > profile.hue_hi) return false;
    if (s < profile.min_saturation || v < profile.min_value) return false;
    if (profile.exclude_saturated && v > 0.99) return false;
    return true;
  };

  std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = passes(i) ? 1 : 0;

  std::vector<MarkerDetection> detections;
  std::vector<int> stack;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const std::size_t i0 = image.index(x0, y0);
      if (!mask[i0]) continue;
      // flood-fill one 8-connected component
      mask[i0] = 0;
      stack.assign(1, static_cast<int>(i0));
      double sum_w = 0.0, sum_x = 0.0, sum_y = 0.0;
      int count = 0;
      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int x = idx % w, y = idx / w;
        const double v = image.value[idx];
        sum_w += v;
        sum_x += v * x;
        sum_y += v * y;
        ++count;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t ni = image.index(nx, ny);
            if (mask[ni]) {
              mask[ni] = 0;
              stack.push_back(static_cast<int>(ni));
            }
          }
        }
      }
      if (count < min_blob_size || sum_w <= 0.0) continue;
      MarkerDetection det;
      det.centroid = Pixel2(sum_x / sum_w, sum_y / sum_w);
      det.pixel_count = count;
      det.dye = profile.name;
      detections.push_back(std::move(det));
    }
  }
  return detections;
}

std::vector<std::pair<std::string, MarkerDetection>> match_detections(
    std::span<const MarkerDetection> detections,
    std::span<const std::pair<std::string, Pixel2>> predicted,
    double gate_px) {
  if (gate_px <= 0.0) {
    fail(ErrorCode::InvalidArgument, "match_detections: gate_px must be positive");
  }
  struct Candidate {
    double dist;
    int det;
    int pred;
  };
  std::vector<Candidate> candidates;
  for (int d = 0; d < static_cast<int>(detections.size()); ++d) {
    for (int p = 0; p < static_cast<int>(predicted.size()); ++p) {
      const double dist = (detections[d].centroid - predicted[p].second).norm();
      if (dist <= gate_px) candidates.push_back({dist, d, p});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.dist, a.det, a.pred) < std::tie(b.dist, b.det, b.pred);
  });
  std::vector<char> det_used(detections.size(), 0), pred_used(predicted.size(), 0);
  std::vector<std::pair<std::string, MarkerDetection>> matches;
  for (const auto& c : candidates) {
    if (det_used[c.det] || pred_used[c.pred]) continue;
    det_used[c.det] = 1;
    pred_used[c.pred] = 1;
    matches.emplace_back(predicted[c.pred].first, detections[c.det]);
  }
  return matches;
}

}  // namespace uvtrack
