#include "isagrasp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace isagrasp {

namespace {

Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

}  // namespace

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  const double n2 = w * w + x * x + y * y + z * z;
  if (!std::isfinite(n2) || n2 < 1e-300) {
    throw std::domain_error("UnitQuaternion: zero or non-finite coefficients");
  }
  q_ = canonical(Eigen::Quaterniond(w, x, y, z));
}

UnitQuaternion::UnitQuaternion(const Eigen::Quaterniond& q) : q_(canonical(q)) {}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (!std::isfinite(angle)) throw std::domain_error("from_axis_angle: non-finite input");
  if (angle < 1e-300) return {};
  return UnitQuaternion(Eigen::Quaterniond(Eigen::AngleAxisd(angle, rotvec / angle)));
}

UnitQuaternion UnitQuaternion::from_matrix(const Mat3& r) {
  if (!is_rotation_matrix(r)) throw std::domain_error("from_matrix: not a rotation matrix");
  return UnitQuaternion(Eigen::Quaterniond(r));
}

Vec3 UnitQuaternion::to_axis_angle() const {
  const Vec3 v(q_.x(), q_.y(), q_.z());
  const double s = v.norm();
  if (s < 1e-300) return Vec3::Zero();
  // w >= 0 by canonicalization, so the angle lies in [0, pi].
  return (2.0 * std::atan2(s, q_.w()) / s) * v;
}

UnitQuaternion UnitQuaternion::inverse() const { return UnitQuaternion(q_.conjugate()); }

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& rhs) const {
  return UnitQuaternion(q_ * rhs.q_);
}

bool UnitQuaternion::same_rotation(const UnitQuaternion& other, double tol) const {
  return 1.0 - std::abs(q_.dot(other.q_)) <= tol;
}

RigidTransform RigidTransform::inverse() const {
  const UnitQuaternion inv = rotation.inverse();
  return {-inv.rotate(translation), inv};
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  return {rotation.rotate(rhs.translation) + translation, rotation * rhs.rotation};
}

RigidTransform Frame3::transform() const {
  return {origin, UnitQuaternion::from_matrix(axes)};
}

Frame3 Frame3::from_transform(const RigidTransform& t) {
  return {t.translation, t.rotation.matrix()};
}

bool is_rotation_matrix(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

double geodesic_distance(const Mat3& a, const Mat3& b) {
  if (!is_rotation_matrix(a) || !is_rotation_matrix(b)) {
    throw std::domain_error("geodesic_distance: input is not a rotation matrix");
  }
  // Same angle as acos((tr - 1) / 2), but the atan2 form keeps full
  // precision near the identity.
  const Mat3 r = a.transpose() * b;
  const Vec3 skew(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * skew.norm(), 0.5 * (r.trace() - 1.0));
}

double geodesic_distance(const UnitQuaternion& a, const UnitQuaternion& b) {
  // atan2 form stays accurate near identity, where acos of the dot loses digits.
  const UnitQuaternion rel = a.inverse() * b;
  const double s = Eigen::Vector3d(rel.x(), rel.y(), rel.z()).norm();
  return 2.0 * std::atan2(s, std::abs(rel.w()));
}

Frame3 build_surface_frame(const Vec3& point, const Vec3& normal, const Vec3& hint_axis) {
  if (!point.allFinite() || !normal.allFinite() || !hint_axis.allFinite()) {
    throw std::domain_error("build_surface_frame: non-finite input");
  }
  if (std::abs(normal.norm() - 1.0) > 1e-6) {
    throw std::domain_error("build_surface_frame: normal is not unit length");
  }
  Vec3 hint = hint_axis;
  if (std::abs(hint.dot(normal)) > 1.0 - 1e-6) {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (std::abs(normal[k]) < std::abs(normal[best])) best = k;
    }
    hint = Vec3::Unit(best);
  }
  const Vec3 x = (hint - hint.dot(normal) * normal).normalized();
  Frame3 f;
  f.origin = point;
  f.axes.col(0) = x;
  f.axes.col(1) = normal.cross(x);
  f.axes.col(2) = normal;
  return f;
}

Mat3 rotation_about_z(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

}  // namespace isagrasp
