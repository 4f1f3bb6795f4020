#pragma once

#include <array>
#include <span>

#include <Eigen/Core>

namespace memhs {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// A point in some frame, millimeters.
using Point = Eigen::Vector3d;

/// Below this rotation angle (rad) the closed forms switch to Taylor series.
inline constexpr double kSmallAngle = 1e-6;

/// Element of se(3) ordered [rho; phi]: rho is the translational part (mm),
/// phi the rotational part (rad).
struct Twist {
  Vec3 rho = Vec3::Zero();
  Vec3 phi = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& rho_, const Vec3& phi_) : rho(rho_), phi(phi_) {}

  static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vec6 vector() const {
    Vec6 v;
    v << rho, phi;
    return v;
  }
};

/// Rigid transform in SE(3). For frames A and B, the transform ^A T_B maps
/// coordinates expressed in B into A (the pose of B seen from A).
class Transform {
 public:
  Transform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Transform(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static Transform identity() { return {}; }

  /// Builds from a 4x4 homogeneous matrix. The bottom row must be [0 0 0 1]
  /// and the rotation block is taken as given.
  static Transform from_matrix(const Mat4& m);

  /// Row-major 16-number serialization used by every file format.
  static Transform from_row_major(std::span<const double, 16> values);
  std::array<double, 16> to_row_major() const;

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat4 matrix() const;

  Transform operator*(const Transform& other) const {
    return {rotation_ * other.rotation_, rotation_ * other.translation_ + translation_};
  }
  Point operator*(const Point& p) const { return rotation_ * p + translation_; }

  Transform inverse() const {
    Mat3 rt = rotation_.transpose();
    return {rt, -rt * translation_};
  }

  /// True if the rotation block is orthonormal with det +1 within `tol`.
  bool is_valid(double tol = 1e-9) const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Cross-product matrix: skew(a) * b == a.cross(b).
Mat3 skew(const Vec3& v);

/// 4x4 matrix [[skew(phi), rho], [0, 0]].
Mat4 hat(const Twist& xi);

Mat3 exp_so3(const Vec3& phi);
/// Principal rotation vector; requires angle < pi - kSmallAngle.
Vec3 log_so3(const Mat3& rotation);
/// Left Jacobian of SO(3) and its inverse.
Mat3 left_jacobian_so3(const Vec3& phi);
Mat3 left_jacobian_so3_inverse(const Vec3& phi);

Transform exp_map(const Twist& xi);
Twist log_map(const Transform& t);

inline Transform compose(const Transform& a, const Transform& b) { return a * b; }
inline Transform inverse(const Transform& t) { return t.inverse(); }
inline Point apply(const Transform& t, const Point& p) { return t * p; }

/// Nearest rotation in the Frobenius sense (SVD projection, det forced +1).
/// Only used when ingesting external data.
Mat3 nearest_rotation(const Mat3& m);

/// Rotation angle of R in [0, pi].
double rotation_angle(const Mat3& rotation);

}  // namespace memhs
