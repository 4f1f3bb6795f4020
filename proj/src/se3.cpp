#include "memhs/se3.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "memhs/error.hpp"

namespace memhs {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AngleNearPi: return "AngleNearPi";
    case ErrorCode::NonPositiveEta: return "NonPositiveEta";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::UnknownVertex: return "UnknownVertex";
    case ErrorCode::DuplicateVertex: return "DuplicateVertex";
    case ErrorCode::InvalidEdge: return "InvalidEdge";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::NoLoop: return "NoLoop";
    case ErrorCode::UncoverableEdge: return "UncoverableEdge";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::DegenerateMotion: return "DegenerateMotion";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::NonFiniteResidual: return "NonFiniteResidual";
    case ErrorCode::MissingEstimate: return "MissingEstimate";
    case ErrorCode::InvalidCounts: return "InvalidCounts";
    case ErrorCode::Schema: return "Schema";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Transform Transform::from_matrix(const Mat4& m) {
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
    throw Error(ErrorCode::Schema, "homogeneous matrix bottom row must be [0 0 0 1]");
  }
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

Transform Transform::from_row_major(std::span<const double, 16> values) {
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = values[static_cast<std::size_t>(4 * r + c)];
  }
  return from_matrix(m);
}

std::array<double, 16> Transform::to_row_major() const {
  std::array<double, 16> out{};
  const Mat4 m = matrix();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(4 * r + c)] = m(r, c);
  }
  return out;
}

Mat4 Transform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

bool Transform::is_valid(double tol) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) return false;
  const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho < tol && std::abs(rotation_.determinant() - 1.0) <= tol;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat4 hat(const Twist& xi) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = skew(xi.phi);
  m.topRightCorner<3, 1>() = xi.rho;
  return m;
}

namespace {

// (1 - cos t) / t^2 without cancellation.
double one_minus_cos_over_sq(double theta) {
  const double s = std::sin(0.5 * theta) / theta;
  return 2.0 * s * s;
}

Vec3 vee(const Mat3& m) { return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)}; }

}  // namespace

Mat3 exp_so3(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  if (theta < kSmallAngle) return Mat3::Identity() + k + 0.5 * k * k;
  return Mat3::Identity() + (std::sin(theta) / theta) * k + one_minus_cos_over_sq(theta) * k * k;
}

Mat3 left_jacobian_so3(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  if (theta < kSmallAngle) return Mat3::Identity() + 0.5 * k + (1.0 / 6.0) * k * k;
  const double t3 = theta * theta * theta;
  return Mat3::Identity() + one_minus_cos_over_sq(theta) * k + ((theta - std::sin(theta)) / t3) * k * k;
}

Mat3 left_jacobian_so3_inverse(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  if (theta < kSmallAngle) return Mat3::Identity() - 0.5 * k + (1.0 / 12.0) * k * k;
  const double c = 1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * k + c * k * k;
}

double rotation_angle(const Mat3& rotation) {
  return std::atan2(vee(rotation).norm(), rotation.trace() - 1.0);
}

Vec3 log_so3(const Mat3& rotation) {
  const Vec3 w = vee(rotation);  // 2 sin(theta) * axis
  const double theta = std::atan2(w.norm(), rotation.trace() - 1.0);
  if (theta > std::numbers::pi - kSmallAngle) {
    throw Error(ErrorCode::AngleNearPi, "rotation angle " + std::to_string(theta) + " rad is within 1e-6 of pi");
  }
  if (theta < kSmallAngle) return 0.5 * (1.0 + theta * theta / 6.0) * w;
  return (theta / w.norm()) * w;
}

Transform exp_map(const Twist& xi) {
  return {exp_so3(xi.phi), left_jacobian_so3(xi.phi) * xi.rho};
}

Twist log_map(const Transform& t) {
  const Vec3 phi = log_so3(t.rotation());
  return {left_jacobian_so3_inverse(phi) * t.translation(), phi};
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace memhs
