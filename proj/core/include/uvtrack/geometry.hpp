#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uvtrack/types.hpp"

namespace uvtrack {

// Pinhole camera. Extrinsics are stored world-to-camera:
//   x_cam = rotation * x_world + translation.
struct CameraModel {
  Mat3 intrinsics = Mat3::Identity();   // K, pixels
  Mat3 rotation = Mat3::Identity();     // world -> camera
  Vec3 translation = Vec3::Zero();      // mm
  int width = 0;
  int height = 0;
  std::string id;

  // Optical center in world coordinates.
  Vec3 center() const { return -rotation.transpose() * translation; }

  // Throws InvalidCamera if the rotation is not orthonormal with det +1,
  // focal lengths are not positive, or the principal point is out of bounds.
  void validate() const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();     // mm
  Vec3 direction = Vec3::UnitZ(); // unit length

  Vec3 at(double t) const { return origin + t * direction; }
};

// Perspective projection. Throws BehindCamera for non-positive depth.
Pixel2 project(const CameraModel& camera, const Vec3& point);

// Depth of a world point in the camera frame (z component of x_cam).
double camera_depth(const CameraModel& camera, const Vec3& point);

// Projection together with its 2x3 derivative with respect to the world point.
struct ProjectionJacobian {
  Pixel2 pixel;
  Eigen::Matrix<double, 2, 3> d_pixel_d_point;
};
ProjectionJacobian project_with_jacobian(const CameraModel& camera, const Vec3& point);

bool pixel_in_bounds(const CameraModel& camera, const Pixel2& pixel);

// Ray through a pixel: origin at the camera center, direction the unit
// back-projection. Throws OutOfBounds for pixels outside the image.
Ray pixel_to_ray(const CameraModel& camera, const Pixel2& pixel);

// Least-squares point minimizing the summed squared point-to-ray distance
// over all observation rays (midpoint method generalized to N rays).
// Throws InsufficientViews (< 2 observations) or DegenerateGeometry when the
// ray bundle is near parallel (condition number above the threshold).
Vec3 triangulate(std::span<const std::pair<CameraModel, Pixel2>> observations,
                 double condition_threshold = 1e8);

// Perpendicular distance from a point to an (infinite, forward) ray line.
double point_to_ray_distance(const Vec3& point, const Ray& ray);

// Camera rig file: JSON array of
//   {id, K: 9 floats row-major, R: 9 floats row-major, t: 3 floats, width, height}.
std::vector<CameraModel> load_camera_rig(const std::filesystem::path& path);
void save_camera_rig(const std::filesystem::path& path,
                     std::span<const CameraModel> cameras);

}  // namespace uvtrack
