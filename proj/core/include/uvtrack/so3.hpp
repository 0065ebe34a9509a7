#pragma once

#include "uvtrack/types.hpp"

namespace uvtrack {

// Skew-symmetric matrix [w]x such that [w]x * v = w.cross(v).
Mat3 so3_hat(const Vec3& w);

// Rodrigues exponential map, axis-angle -> rotation matrix.
Mat3 so3_exp(const Vec3& axis_angle);

// Inverse of so3_exp. Valid for any proper rotation; the returned vector has
// norm in [0, pi]. Throws NotARotation if the input is not orthonormal with
// determinant +1.
Vec3 so3_log(const Mat3& rotation);

// Right Jacobian of the exponential map:
//   exp(w + d) ~= exp(w) * exp(so3_hat(Jr(w) * d))   for small d,
// so the derivative of exp(w) * u with respect to w is
//   -exp(w) * so3_hat(u) * Jr(w).
Mat3 so3_right_jacobian(const Vec3& axis_angle);

}  // namespace uvtrack
