#include "uvtrack/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

namespace uvtrack {

FlowError flow_error(const FlowField& estimated, const FlowField& ground_truth) {
  std::map<std::string, Eigen::Vector2d> gt;
  for (const auto& [id, flow] : ground_truth.flows) gt[id] = flow;
  FlowError err;
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& [id, flow] : estimated.flows) {
    const auto it = gt.find(id);
    if (it == gt.end()) continue;
    const double e = (flow - it->second).norm();
    sum += e;
    sum_sq += e * e;
    ++err.n_common;
  }
  if (err.n_common == 0) {
    fail(ErrorCode::NoCommonMarkers, "flow_error: the fields share no marker ids");
  }
  err.aepe_px = sum / err.n_common;
  err.mse_px2 = sum_sq / err.n_common;
  return err;
}

double vertex_to_vertex_error(std::span<const Vec3> estimated,
                              std::span<const Vec3> ground_truth) {
  if (estimated.size() != ground_truth.size()) {
    fail(ErrorCode::TopologyMismatch, "vertex_to_vertex_error: vertex count mismatch");
  }
  if (estimated.empty()) {
    fail(ErrorCode::TopologyMismatch, "vertex_to_vertex_error: empty vertex sets");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    sum += (estimated[i] - ground_truth[i]).norm();
  }
  return sum / static_cast<double>(estimated.size());
}

MetricReport make_metric_report(std::string metric, std::string units,
                                std::vector<std::pair<int, double>> per_frame) {
  MetricReport report;
  report.metric = std::move(metric);
  report.units = std::move(units);
  report.per_frame = std::move(per_frame);
  double sum = 0.0;
  for (const auto& [frame, value] : report.per_frame) sum += value;
  report.aggregate =
      report.per_frame.empty() ? 0.0 : sum / static_cast<double>(report.per_frame.size());
  return report;
}

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_metric_csv(const std::filesystem::path& path,
                      std::span<const MetricReport> reports) {
  if (reports.empty()) {
    fail(ErrorCode::InvalidArgument, "write_metric_csv: no reports");
  }
  for (const auto& r : reports) {
    if (r.per_frame.size() != reports[0].per_frame.size()) {
      fail(ErrorCode::InvalidArgument, "write_metric_csv: reports cover different frames");
    }
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "frame";
  for (const auto& r : reports) out << "," << r.metric << "_" << r.units;
  out << "\n";
  for (std::size_t i = 0; i < reports[0].per_frame.size(); ++i) {
    out << reports[0].per_frame[i].first;
    for (const auto& r : reports) out << "," << format_value(r.per_frame[i].second);
    out << "\n";
  }
  out << "AGGREGATE";
  for (const auto& r : reports) out << "," << format_value(r.aggregate);
  out << "\n";
}

std::optional<Eigen::Vector2d> approximate_dense_flow(
    int rows, int cols, std::span<const Pixel2> corner_pixels,
    std::span<const Eigen::Vector2d> corner_flows, const Pixel2& query) {
  if (rows < 2 || cols < 2 ||
      corner_pixels.size() != static_cast<std::size_t>(rows) * cols ||
      corner_flows.size() != corner_pixels.size()) {
    fail(ErrorCode::InvalidArgument, "approximate_dense_flow: bad grid inputs");
  }
  auto vid = [cols](int r, int c) { return r * cols + c; };
  auto barycentric_2d = [](const Pixel2& p, const Pixel2& a, const Pixel2& b,
                           const Pixel2& c) -> std::optional<Vec3> {
    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    if (std::abs(det) < 1e-12) return std::nullopt;
    const double w1 =
        ((p.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (p.y() - a.y())) / det;
    const double w2 =
        ((b.x() - a.x()) * (p.y() - a.y()) - (p.x() - a.x()) * (b.y() - a.y())) / det;
    const double w0 = 1.0 - w1 - w2;
    const double eps = -1e-9;
    if (w0 < eps || w1 < eps || w2 < eps) return std::nullopt;
    return Vec3(w0, w1, w2);
  };
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      const int ids[2][3] = {{vid(r, c), vid(r, c + 1), vid(r + 1, c + 1)},
                             {vid(r, c), vid(r + 1, c + 1), vid(r + 1, c)}};
      for (const auto& tri : ids) {
        const auto bary = barycentric_2d(query, corner_pixels[tri[0]],
                                         corner_pixels[tri[1]], corner_pixels[tri[2]]);
        if (!bary) continue;
        return (*bary)[0] * corner_flows[tri[0]] + (*bary)[1] * corner_flows[tri[1]] +
               (*bary)[2] * corner_flows[tri[2]];
      }
    }
  }
  return std::nullopt;
}

}  // namespace uvtrack
