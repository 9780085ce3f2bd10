#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace isagrasp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rotation stored as a unit quaternion with the sign fixed to w >= 0.
///
/// q and -q describe the same rotation; canonicalizing keeps serialized
/// values and loss targets stable. Every constructor normalizes.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  /// Throws std::domain_error for a zero or non-finite input.
  UnitQuaternion(double w, double x, double y, double z);

  static UnitQuaternion identity() { return {}; }
  /// `rotvec` is axis * angle (radians).
  static UnitQuaternion from_axis_angle(const Vec3& rotvec);
  static UnitQuaternion from_matrix(const Mat3& r);
  /// Rotation vector with angle in [0, pi]; inverse of from_axis_angle.
  Vec3 to_axis_angle() const;

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }
  /// (w, x, y, z)
  Eigen::Vector4d coeffs() const { return {q_.w(), q_.x(), q_.y(), q_.z()}; }

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  Vec3 rotate(const Vec3& v) const { return q_ * v; }
  UnitQuaternion inverse() const;
  UnitQuaternion operator*(const UnitQuaternion& rhs) const;

  /// Rotation equality, insensitive to the q / -q ambiguity.
  bool same_rotation(const UnitQuaternion& other, double tol = 1e-9) const;

 private:
  explicit UnitQuaternion(const Eigen::Quaterniond& q);
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

struct RigidTransform {
  Vec3 translation = Vec3::Zero();
  UnitQuaternion rotation;

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.inverse().rotate(p - translation); }
  RigidTransform inverse() const;
  /// (this * rhs).apply(p) == this->apply(rhs.apply(p))
  RigidTransform operator*(const RigidTransform& rhs) const;
};

/// Orthonormal right-handed frame. Columns of `axes` are the frame's x, y, z
/// axes expressed in the parent frame.
struct Frame3 {
  Vec3 origin = Vec3::Zero();
  Mat3 axes = Mat3::Identity();

  Vec3 x() const { return axes.col(0); }
  Vec3 y() const { return axes.col(1); }
  Vec3 z() const { return axes.col(2); }

  Vec3 to_world(const Vec3& local) const { return origin + axes * local; }
  Vec3 to_local(const Vec3& world) const { return axes.transpose() * (world - origin); }

  RigidTransform transform() const;
  static Frame3 from_transform(const RigidTransform& t);
};

bool is_rotation_matrix(const Mat3& r, double tol = 1e-6);

/// Angle of the relative rotation A^T B, in [0, pi]. Throws
/// std::domain_error when either input is not a proper rotation.
double geodesic_distance(const Mat3& a, const Mat3& b);
double geodesic_distance(const UnitQuaternion& a, const UnitQuaternion& b);

/// Local frame at a surface point: z = normal, x = hint projected onto the
/// tangent plane. A hint (nearly) parallel to the normal is replaced by the
/// global axis least aligned with the normal, lowest index winning ties.
Frame3 build_surface_frame(const Vec3& point, const Vec3& normal, const Vec3& hint_axis);

/// Rotation about the world z axis.
Mat3 rotation_about_z(double angle);

}  // namespace isagrasp
