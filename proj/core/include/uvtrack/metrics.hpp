#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uvtrack/types.hpp"

namespace uvtrack {

// Sparse flow between two consecutive frames: one 2D pixel displacement per
// marker.
struct FlowField {
  std::vector<std::pair<std::string, Eigen::Vector2d>> flows;
};

struct FlowError {
  double aepe_px = 0.0;   // mean endpoint error
  double mse_px2 = 0.0;   // mean squared endpoint error
  int n_common = 0;
};

// Errors over the marker ids shared by both fields. Throws NoCommonMarkers
// when the overlap is empty.
FlowError flow_error(const FlowField& estimated, const FlowField& ground_truth);

// Mean Euclidean vertex distance; throws TopologyMismatch on count mismatch.
double vertex_to_vertex_error(std::span<const Vec3> estimated,
                              std::span<const Vec3> ground_truth);

// Per-frame metric values plus their sequence aggregate (the mean).
struct MetricReport {
  std::string metric;
  std::string units;
  std::vector<std::pair<int, double>> per_frame;  // (frame index, value)
  double aggregate = 0.0;
};

MetricReport make_metric_report(std::string metric, std::string units,
                                std::vector<std::pair<int, double>> per_frame);

// CSV with a header row, one row per frame and a final AGGREGATE row. All
// reports must cover the same frames; each contributes one column.
void write_metric_csv(const std::filesystem::path& path,
                      std::span<const MetricReport> reports);

// Approximate dense flow inside a grid template: the query pixel is located
// in a grid cell (each cell split into its two triangles) and the corner
// flows are interpolated barycentrically. Returns nothing when the pixel is
// outside every cell. corner_pixels/corner_flows are indexed row * cols + col.
std::optional<Eigen::Vector2d> approximate_dense_flow(
    int rows, int cols, std::span<const Pixel2> corner_pixels,
    std::span<const Eigen::Vector2d> corner_flows, const Pixel2& query);

}  // namespace uvtrack
