#include "uvtrack/so3.hpp"

#include <Eigen/LU>
#include <cmath>

namespace uvtrack {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::InsufficientViews: return "InsufficientViews";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::InvalidCamera: return "InvalidCamera";
    case ErrorCode::InvalidTemplate: return "InvalidTemplate";
    case ErrorCode::OffSurface: return "OffSurface";
    case ErrorCode::InvalidBinding: return "InvalidBinding";
    case ErrorCode::NothingToFit: return "NothingToFit";
    case ErrorCode::InvalidSigma: return "InvalidSigma";
    case ErrorCode::InsufficientFrames: return "InsufficientFrames";
    case ErrorCode::UnknownMotion: return "UnknownMotion";
    case ErrorCode::NoCommonMarkers: return "NoCommonMarkers";
    case ErrorCode::TopologyMismatch: return "TopologyMismatch";
    case ErrorCode::NotARotation: return "NotARotation";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

Mat3 so3_hat(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(),
       w.z(), 0, -w.x(),
       -w.y(), w.x(), 0;
  return m;
}

Mat3 so3_exp(const Vec3& axis_angle) {
  const double theta2 = axis_angle.squaredNorm();
  const double theta = std::sqrt(theta2);
  double a, b;  // sin(t)/t and (1-cos(t))/t^2
  if (theta < 1e-5) {
    a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const Mat3 hat = so3_hat(axis_angle);
  return Mat3::Identity() + a * hat + b * hat * hat;
}

Vec3 so3_log(const Mat3& rotation) {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).norm();
  if (ortho > 1e-6 || rotation.determinant() < 0.0) {
    fail(ErrorCode::NotARotation, "so3_log: input is not a proper rotation");
  }
  const double cos_theta =
      std::clamp((rotation.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Vec3 vee(0.5 * (rotation(2, 1) - rotation(1, 2)),
                 0.5 * (rotation(0, 2) - rotation(2, 0)),
                 0.5 * (rotation(1, 0) - rotation(0, 1)));  // = sin(theta) * axis
  if (theta < 1e-5) {
    return vee * (1.0 + theta * theta / 6.0);
  }
  if (theta < M_PI - 1e-3) {
    return vee * (theta / std::sin(theta));
  }
  // Near pi the sin-based formula degenerates; recover the axis from
  // R + I ~= 2 * axis * axis^T.
  const Mat3 s = rotation + Mat3::Identity();
  int col = 0;
  s.colwise().norm().maxCoeff(&col);
  Vec3 axis = s.col(col).normalized();
  if (axis.dot(vee) < 0.0) axis = -axis;
  return theta * axis;
}

Mat3 so3_right_jacobian(const Vec3& axis_angle) {
  const double theta2 = axis_angle.squaredNorm();
  const double theta = std::sqrt(theta2);
  double c1, c2;  // (1-cos(t))/t^2 and (t-sin(t))/t^3
  if (theta < 1e-4) {
    c1 = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    c2 = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0;
  } else {
    c1 = (1.0 - std::cos(theta)) / theta2;
    c2 = (theta - std::sin(theta)) / (theta2 * theta);
  }
  const Mat3 hat = so3_hat(axis_angle);
  return Mat3::Identity() - c1 * hat + c2 * hat * hat;
}

}  // namespace uvtrack
