#include "uvtrack/geometry.hpp"

#include <Eigen/Dense>
#include <fstream>

#include <json.hpp>

namespace uvtrack {

void CameraModel::validate() const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).norm();
  if (ortho >= 1e-9 || rotation.determinant() < 0.0) {
    fail(ErrorCode::InvalidCamera,
         "camera '" + id + "': rotation is not orthonormal with det +1");
  }
  if (intrinsics(0, 0) <= 0.0 || intrinsics(1, 1) <= 0.0) {
    fail(ErrorCode::InvalidCamera, "camera '" + id + "': focal lengths must be positive");
  }
  if (std::abs(intrinsics(2, 0)) > 1e-12 || std::abs(intrinsics(2, 1)) > 1e-12 ||
      std::abs(intrinsics(2, 2) - 1.0) > 1e-12 || std::abs(intrinsics(1, 0)) > 1e-12) {
    fail(ErrorCode::InvalidCamera, "camera '" + id + "': K must be an upper-triangular pinhole matrix with K(2,2) = 1");
  }
  const double cx = intrinsics(0, 2), cy = intrinsics(1, 2);
  if (width <= 0 || height <= 0 || cx < 0.0 || cx > width || cy < 0.0 || cy > height) {
    fail(ErrorCode::InvalidCamera,
         "camera '" + id + "': principal point outside image bounds");
  }
}

double camera_depth(const CameraModel& camera, const Vec3& point) {
  return (camera.rotation * point + camera.translation).z();
}

Pixel2 project(const CameraModel& camera, const Vec3& point) {
  const Vec3 x_cam = camera.rotation * point + camera.translation;
  if (x_cam.z() <= 0.0) {
    fail(ErrorCode::BehindCamera, "project: point has non-positive depth");
  }
  const Vec3 q = camera.intrinsics * x_cam;
  return Pixel2(q.x() / q.z(), q.y() / q.z());
}

ProjectionJacobian project_with_jacobian(const CameraModel& camera, const Vec3& point) {
  const Vec3 x_cam = camera.rotation * point + camera.translation;
  if (x_cam.z() <= 0.0) {
    fail(ErrorCode::BehindCamera, "project: point has non-positive depth");
  }
  const Mat3 m = camera.intrinsics * camera.rotation;  // d q / d point
  const Vec3 q = camera.intrinsics * x_cam;
  ProjectionJacobian out;
  out.pixel = Pixel2(q.x() / q.z(), q.y() / q.z());
  const double inv_z = 1.0 / q.z();
  out.d_pixel_d_point.row(0) = inv_z * (m.row(0) - out.pixel.x() * m.row(2));
  out.d_pixel_d_point.row(1) = inv_z * (m.row(1) - out.pixel.y() * m.row(2));
  return out;
}

bool pixel_in_bounds(const CameraModel& camera, const Pixel2& pixel) {
  return pixel.x() >= 0.0 && pixel.x() <= camera.width - 1 &&
         pixel.y() >= 0.0 && pixel.y() <= camera.height - 1;
}

Ray pixel_to_ray(const CameraModel& camera, const Pixel2& pixel) {
  if (!pixel_in_bounds(camera, pixel)) {
    fail(ErrorCode::OutOfBounds, "pixel_to_ray: pixel outside image bounds");
  }
  const Vec3 homog(pixel.x(), pixel.y(), 1.0);
  const Vec3 dir_cam = camera.intrinsics.inverse() * homog;
  Ray ray;
  ray.origin = camera.center();
  ray.direction = (camera.rotation.transpose() * dir_cam).normalized();
  return ray;
}

Vec3 triangulate(std::span<const std::pair<CameraModel, Pixel2>> observations,
                 double condition_threshold) {
  if (observations.size() < 2) {
    fail(ErrorCode::InsufficientViews, "triangulate: need at least 2 observations");
  }
  // Normal equations of min_x sum_i || (I - d_i d_i^T)(x - o_i) ||^2.
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const auto& [camera, pixel] : observations) {
    const Ray ray = pixel_to_ray(camera, pixel);
    const Mat3 p = Mat3::Identity() - ray.direction * ray.direction.transpose();
    a += p;
    b += p * ray.origin;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(a);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (lo <= 0.0 || hi / lo > condition_threshold) {
    fail(ErrorCode::DegenerateGeometry, "triangulate: near-parallel ray bundle");
  }
  return a.ldlt().solve(b);
}

double point_to_ray_distance(const Vec3& point, const Ray& ray) {
  const Vec3 d = point - ray.origin;
  return (d - d.dot(ray.direction) * ray.direction).norm();
}

namespace {

using nlohmann::json;

json camera_to_json(const CameraModel& c) {
  json j;
  j["id"] = c.id;
  std::vector<double> k(9), r(9);
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) {
      k[row * 3 + col] = c.intrinsics(row, col);
      r[row * 3 + col] = c.rotation(row, col);
    }
  j["K"] = k;
  j["R"] = r;
  j["t"] = {c.translation.x(), c.translation.y(), c.translation.z()};
  j["width"] = c.width;
  j["height"] = c.height;
  return j;
}

CameraModel camera_from_json(const json& j) {
  CameraModel c;
  c.id = j.at("id").get<std::string>();
  const auto k = j.at("K").get<std::vector<double>>();
  const auto r = j.at("R").get<std::vector<double>>();
  const auto t = j.at("t").get<std::vector<double>>();
  if (k.size() != 9 || r.size() != 9 || t.size() != 3) {
    fail(ErrorCode::ParseError, "camera '" + c.id + "': bad K/R/t sizes");
  }
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) {
      c.intrinsics(row, col) = k[row * 3 + col];
      c.rotation(row, col) = r[row * 3 + col];
    }
  c.translation = Vec3(t[0], t[1], t[2]);
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.validate();
  return c;
}

}  // namespace

std::vector<CameraModel> load_camera_rig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open rig file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, "rig file " + path.string() + ": " + e.what());
  }
  std::vector<CameraModel> cameras;
  for (const auto& cj : j) cameras.push_back(camera_from_json(cj));
  return cameras;
}

void save_camera_rig(const std::filesystem::path& path,
                     std::span<const CameraModel> cameras) {
  json j = json::array();
  for (const auto& c : cameras) j.push_back(camera_to_json(c));
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write rig file " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace uvtrack
