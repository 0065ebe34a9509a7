#pragma once

#include <span>
#include <string>
#include <vector>

#include "uvtrack/fitting.hpp"

namespace uvtrack {

// One recovered frame of a sequence: the deformation unknowns plus the
// derived vertex and marker positions they imply.
struct FittedFrame {
  int frame_index = 0;
  double timestamp_ms = 0.0;
  DeformationState state;
  std::vector<Vec3> deformed_vertices;
  std::vector<Vec3> marker_points_3d;  // aligned with the template's markers
  FitReport fit_report;
};

FittedFrame make_fitted_frame(const DeformableTemplate& tmpl, int frame_index,
                              double timestamp_ms, const DeformationState& state,
                              FitReport report = {});

struct FrameInput {
  PointCloud cloud;
  MarkerObservationSet observations;
  double timestamp_ms = 0.0;
};

// Sequential fitting with warm starts: frame 0 starts from the zero state,
// frame k from frame k-1's recovered state. A frame whose fit stalls without
// converging keeps the previous frame's state and stays flagged in its
// report; tracking continues.
std::vector<FittedFrame> track_sequence(const DeformableTemplate& tmpl,
                                        std::span<const FrameInput> frames,
                                        std::span<const CameraModel> cameras,
                                        const FitConfig& config);

// Linear interpolation of vertex and marker positions between two
// consecutive frames at sigma_ms past the first frame. Rotations are not
// interpolated; labels depend on positions only. Throws InvalidSigma when
// sigma_ms is outside [0, frame_interval_ms].
FittedFrame interpolate_frame(const FittedFrame& f_t, const FittedFrame& f_t1,
                              double sigma_ms, double frame_interval_ms);

// Binary visibility per marker: 1 iff the marker projects in bounds with
// positive depth and the segment from the camera center to the marker
// (shortened by 1e-3 mm toward the camera) intersects no mesh face.
std::vector<int> visibility_weights(std::span<const Vec3> deformed_vertices,
                                    std::span<const std::array<int, 3>> faces,
                                    std::span<const Vec3> marker_points,
                                    const CameraModel& camera);

struct WarpedLabel {
  std::string marker_id;
  bool visible = false;
  bool projectable = false;  // positive depth
  Pixel2 pixel = Pixel2::Zero();
};

struct WarpedLabelSet {
  std::string camera_id;
  int frame_index = 0;
  double timestamp_ms = 0.0;
  std::vector<WarpedLabel> labels;
};

// Projects every marker of a (typically delay-interpolated) frame into a
// marker-free reference view; occluded markers are carried with
// visible = false.
WarpedLabelSet warp_features(const DeformableTemplate& tmpl, const FittedFrame& frame,
                             const CameraModel& reference_camera);

// A ray traced from a marker observation in a reference view.
struct ReferenceRay {
  std::string camera_id;
  std::string marker_id;
  Ray ray;
  double timestamp_ms = 0.0;
};

struct DelayCurvePoint {
  double sigma_ms = 0.0;
  double mean_distance_mm = 0.0;
};

// For each interpolation parameter sigma, interpolates every consecutive
// frame pair to sigma past the earlier frame and averages the point-to-ray
// distance of each marker against that frame's reference rays.
// reference_rays holds one entry per frame; the last frame's rays are unused.
std::vector<DelayCurvePoint> delay_alignment_curve(
    const DeformableTemplate& tmpl, std::span<const FittedFrame> sequence,
    std::span<const std::vector<ReferenceRay>> reference_rays,
    std::span<const double> sigma_values);

}  // namespace uvtrack
