#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace uvtrack {

// Units are fixed across the whole library: millimeters for 3D quantities,
// pixels for image-plane quantities, milliseconds for time.
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Pixel2 = Eigen::Vector2d;

enum class ErrorCode {
  BehindCamera,
  OutOfBounds,
  InsufficientViews,
  DegenerateGeometry,
  InvalidCamera,
  InvalidTemplate,
  OffSurface,
  InvalidBinding,
  NothingToFit,
  InvalidSigma,
  InsufficientFrames,
  UnknownMotion,
  NoCommonMarkers,
  TopologyMismatch,
  NotARotation,
  InvalidArgument,
  IoError,
  ParseError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }
  const char* code_name() const { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace uvtrack
