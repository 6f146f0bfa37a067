#pragma once

// Frame, rotation and twist algebra shared by the controller and simulator.
// Angles are radians everywhere in this namespace.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rcmtel {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kOrthoTolerance = 1e-9;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

inline Vec3 require_finite(const Vec3& v, const char* what) {
  if (!is_finite(v)) throw std::invalid_argument(std::string(what) + ": non-finite component");
  return v;
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y() * b.z() - a.z() * b.y(),
          a.z() * b.x() - a.x() * b.z(),
          a.x() * b.y() - a.y() * b.x()};
}

inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

/// Proper rotation stored as a 3x3 matrix. The orthonormality residual is
/// kept below kOrthoTolerance by Gram-Schmidt re-orthonormalization.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Accepts matrices within 1e-6 of SO(3); anything farther (or with
  /// negative determinant) is rejected. Near-misses are re-orthonormalized.
  static Rotation from_matrix(const Mat3& m) {
    if (!m.allFinite()) throw std::invalid_argument("rotation: non-finite entry");
    const double res = residual(m);
    if (res > 1e-6 || m.determinant() < 0.0)
      throw std::invalid_argument("rotation: matrix is not a proper rotation");
    Rotation r;
    r.m_ = res > kOrthoTolerance ? orthonormalized(m) : m;
    return r;
  }

  /// Exponential map of a rotation vector (axis * angle).
  static Rotation exp(const Vec3& rotvec) {
    const double angle = rotvec.norm();
    Rotation r;
    if (angle < 1e-15) {
      r.m_ = Mat3::Identity() + hat(rotvec);
      r.m_ = orthonormalized(r.m_);
      return r;
    }
    r.m_ = Eigen::AngleAxisd(angle, rotvec / angle).toRotationMatrix();
    return r;
  }

  static Rotation about_x(double angle) { return exp(Vec3::UnitX() * angle); }
  static Rotation about_y(double angle) { return exp(Vec3::UnitY() * angle); }
  static Rotation about_z(double angle) { return exp(Vec3::UnitZ() * angle); }

  /// Fixed-axis roll/pitch/yaw: R = Rz(yaw) * Ry(pitch) * Rx(roll).
  static Rotation from_rpy(double roll, double pitch, double yaw) {
    return about_z(yaw) * about_y(pitch) * about_x(roll);
  }

  /// Unit quaternion (w, x, y, z); normalized before use.
  static Rotation from_quaternion(double w, double x, double y, double z) {
    Eigen::Quaterniond q(w, x, y, z);
    if (!(q.norm() > 0.0)) throw std::invalid_argument("rotation: zero quaternion");
    return from_matrix(q.normalized().toRotationMatrix());
  }

  const Mat3& matrix() const { return m_; }
  Vec3 x_axis() const { return m_.col(0); }

  Rotation transpose() const {
    Rotation r;
    r.m_ = m_.transpose();
    return r;
  }
  Rotation inverse() const { return transpose(); }

  Rotation operator*(const Rotation& other) const {
    Rotation r;
    r.m_ = m_ * other.m_;
    if (residual(r.m_) > kOrthoTolerance) r.m_ = orthonormalized(r.m_);
    return r;
  }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  /// Canonical quaternion with w >= 0, returned as (w, x, y, z).
  Eigen::Vector4d quaternion() const {
    Eigen::Quaterniond q(m_);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    return {q.w(), q.x(), q.y(), q.z()};
  }

  /// Rotation vector of this rotation (inverse of exp), angle in [0, pi].
  Vec3 log() const {
    Eigen::AngleAxisd aa(m_);
    return aa.axis() * aa.angle();
  }

  double orthonormality_residual() const { return residual(m_); }

  static double residual(const Mat3& m) {
    return (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  }

  static Mat3 orthonormalized(const Mat3& m) {
    Vec3 c0 = m.col(0).normalized();
    Vec3 c1 = (m.col(1) - c0.dot(m.col(1)) * c0).normalized();
    Mat3 out;
    out.col(0) = c0;
    out.col(1) = c1;
    out.col(2) = cross(c0, c1);
    return out;
  }

 private:
  Mat3 m_;
};

/// Pose of a child frame in a parent frame: p_parent = R * p_child + t.
struct RigidTransform {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Rotation(), t}; }

  RigidTransform inverse() const {
    const Rotation rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  Vec3 apply(const Vec3& point) const { return rotation * point + translation; }
};

/// a ∘ b: applies b, then a.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return compose(a, b);
}

struct Twist {
  Vec3 linear = Vec3::Zero();   // m/s
  Vec3 angular = Vec3::Zero();  // rad/s

  static Twist zero() { return {}; }

  bool finite() const { return is_finite(linear) && is_finite(angular); }
  bool is_exact_zero() const {
    return (linear.array() == 0.0).all() && (angular.array() == 0.0).all();
  }

  Twist operator+(const Twist& o) const { return {linear + o.linear, angular + o.angular}; }
  Twist operator*(double s) const { return {linear * s, angular * s}; }
  bool operator==(const Twist& o) const { return linear == o.linear && angular == o.angular; }
};

/// Re-expresses a twist given in a source frame in a rigidly attached
/// target frame. `rel` is the pose of the source in the target, so its
/// translation is the source origin expressed in target coordinates:
///   w' = R w,  v' = R v + t x w'.
inline Twist transform_twist(const Twist& tw, const RigidTransform& rel) {
  const Vec3 w = rel.rotation * tw.angular;
  const Vec3 v = rel.rotation * tw.linear + cross(rel.translation, w);
  return {v, w};
}

/// First-order body-frame step: exact rotation exponential for the angular
/// part, translation advanced by R v dt. dt must lie in (0, 0.1] s.
inline RigidTransform integrate_pose(const RigidTransform& pose, const Twist& body_twist, double dt) {
  if (!(dt > 0.0 && dt <= 0.1)) throw std::domain_error("integrate_pose: dt out of range (0, 0.1]");
  return {pose.rotation * Rotation::exp(body_twist.angular * dt),
          pose.translation + pose.rotation * (body_twist.linear * dt)};
}

}  // namespace rcmtel
