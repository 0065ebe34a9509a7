#include "uvtrack/tracking.hpp"

#include <Eigen/Geometry>
#include <map>

namespace uvtrack {

FittedFrame make_fitted_frame(const DeformableTemplate& tmpl, int frame_index,
                              double timestamp_ms, const DeformationState& state,
                              FitReport report) {
  FittedFrame frame;
  frame.frame_index = frame_index;
  frame.timestamp_ms = timestamp_ms;
  frame.state = state;
  frame.deformed_vertices = apply_state(tmpl.rest_vertices, state);
  frame.marker_points_3d.reserve(tmpl.markers.size());
  for (const auto& m : tmpl.markers) {
    frame.marker_points_3d.push_back(attachment_position(frame.deformed_vertices, m));
  }
  frame.fit_report = std::move(report);
  return frame;
}

std::vector<FittedFrame> track_sequence(const DeformableTemplate& tmpl,
                                        std::span<const FrameInput> frames,
                                        std::span<const CameraModel> cameras,
                                        const FitConfig& config) {
  std::vector<FittedFrame> out;
  out.reserve(frames.size());
  DeformationState previous = DeformationState::identity(tmpl.rest_vertices.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    FitResult fit = fit_template(tmpl, frames[k].cloud, frames[k].observations, cameras,
                                 config, previous);
    // A stalled, unconverged frame falls back to the previous state but keeps
    // its flagged report; isolated bad frames must not abort a long capture.
    const DeformationState& state = fit.report.non_convergence ? previous : fit.state;
    out.push_back(make_fitted_frame(tmpl, static_cast<int>(k), frames[k].timestamp_ms,
                                    state, std::move(fit.report)));
    previous = state;
  }
  return out;
}

FittedFrame interpolate_frame(const FittedFrame& f_t, const FittedFrame& f_t1,
                              double sigma_ms, double frame_interval_ms) {
  if (!(frame_interval_ms > 0.0) || sigma_ms < 0.0 || sigma_ms > frame_interval_ms) {
    fail(ErrorCode::InvalidSigma, "interpolate_frame: sigma outside [0, frame_interval]");
  }
  if (f_t.deformed_vertices.size() != f_t1.deformed_vertices.size() ||
      f_t.marker_points_3d.size() != f_t1.marker_points_3d.size()) {
    fail(ErrorCode::InvalidArgument, "interpolate_frame: frame size mismatch");
  }
  const double s = sigma_ms / frame_interval_ms;
  FittedFrame out = f_t;  // carries frame_index, rotations and report
  out.timestamp_ms = (1.0 - s) * f_t.timestamp_ms + s * f_t1.timestamp_ms;
  for (std::size_t i = 0; i < out.deformed_vertices.size(); ++i) {
    out.deformed_vertices[i] =
        (1.0 - s) * f_t.deformed_vertices[i] + s * f_t1.deformed_vertices[i];
    out.state.translations[i] =
        (1.0 - s) * f_t.state.translations[i] + s * f_t1.state.translations[i];
  }
  for (std::size_t i = 0; i < out.marker_points_3d.size(); ++i) {
    out.marker_points_3d[i] =
        (1.0 - s) * f_t.marker_points_3d[i] + s * f_t1.marker_points_3d[i];
  }
  return out;
}

namespace {

// Moeller-Trumbore segment/triangle intersection for t in (t_min, t_max).
bool segment_hits_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                           const Vec3& b, const Vec3& c, double t_min, double t_max) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pv = dir.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-14) return false;  // parallel or degenerate
  const double inv_det = 1.0 / det;
  const Vec3 tv = origin - a;
  const double u = tv.dot(pv) * inv_det;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qv = tv.cross(e1);
  const double v = dir.dot(qv) * inv_det;
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = e2.dot(qv) * inv_det;
  return t > t_min && t < t_max;
}

}  // namespace

std::vector<int> visibility_weights(std::span<const Vec3> deformed_vertices,
                                    std::span<const std::array<int, 3>> faces,
                                    std::span<const Vec3> marker_points,
                                    const CameraModel& camera) {
  std::vector<int> weights(marker_points.size(), 0);
  const Vec3 center = camera.center();
  for (std::size_t i = 0; i < marker_points.size(); ++i) {
    const Vec3& marker = marker_points[i];
    if (camera_depth(camera, marker) <= 0.0) continue;
    if (!pixel_in_bounds(camera, project(camera, marker))) continue;
    // Shorten the segment by 1e-3 mm toward the camera so faces containing
    // the marker itself do not count as occluders.
    const Vec3 to_camera = center - marker;
    const double len = to_camera.norm();
    if (len <= 1e-3) continue;
    const Vec3 end = marker + (1e-3 / len) * to_camera;
    const Vec3 dir = end - center;
    bool occluded = false;
    for (const auto& f : faces) {
      if (segment_hits_triangle(center, dir, deformed_vertices[f[0]],
                                deformed_vertices[f[1]], deformed_vertices[f[2]],
                                1e-9, 1.0)) {
        occluded = true;
        break;
      }
    }
    if (!occluded) weights[i] = 1;
  }
  return weights;
}

WarpedLabelSet warp_features(const DeformableTemplate& tmpl, const FittedFrame& frame,
                             const CameraModel& reference_camera) {
  WarpedLabelSet set;
  set.camera_id = reference_camera.id;
  set.frame_index = frame.frame_index;
  set.timestamp_ms = frame.timestamp_ms;
  const auto weights = visibility_weights(frame.deformed_vertices, tmpl.faces,
                                          frame.marker_points_3d, reference_camera);
  set.labels.reserve(tmpl.markers.size());
  for (std::size_t i = 0; i < tmpl.markers.size(); ++i) {
    WarpedLabel label;
    label.marker_id = tmpl.markers[i].marker_id;
    label.visible = weights[i] == 1;
    if (camera_depth(reference_camera, frame.marker_points_3d[i]) > 0.0) {
      label.projectable = true;
      label.pixel = project(reference_camera, frame.marker_points_3d[i]);
    }
    set.labels.push_back(std::move(label));
  }
  return set;
}

std::vector<DelayCurvePoint> delay_alignment_curve(
    const DeformableTemplate& tmpl, std::span<const FittedFrame> sequence,
    std::span<const std::vector<ReferenceRay>> reference_rays,
    std::span<const double> sigma_values) {
  if (sequence.size() < 2) {
    fail(ErrorCode::InsufficientFrames, "delay_alignment_curve: need at least 2 frames");
  }
  if (reference_rays.size() < sequence.size() - 1) {
    fail(ErrorCode::InvalidArgument, "delay_alignment_curve: missing per-frame rays");
  }
  std::map<std::string, int> marker_index;
  for (int i = 0; i < static_cast<int>(tmpl.markers.size()); ++i) {
    marker_index[tmpl.markers[i].marker_id] = i;
  }
  std::vector<DelayCurvePoint> curve;
  curve.reserve(sigma_values.size());
  for (double sigma : sigma_values) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k + 1 < sequence.size(); ++k) {
      const double interval = sequence[k + 1].timestamp_ms - sequence[k].timestamp_ms;
      const FittedFrame mid = interpolate_frame(sequence[k], sequence[k + 1], sigma, interval);
      for (const auto& ref : reference_rays[k]) {
        const auto it = marker_index.find(ref.marker_id);
        if (it == marker_index.end()) {
          fail(ErrorCode::InvalidArgument,
               "delay_alignment_curve: unknown marker '" + ref.marker_id + "'");
        }
        sum += point_to_ray_distance(mid.marker_points_3d[it->second], ref.ray);
        ++count;
      }
    }
    curve.push_back({sigma, count > 0 ? sum / static_cast<double>(count) : 0.0});
  }
  return curve;
}

}  // namespace uvtrack
