#pragma once

// Remote-center-of-motion velocity controller.
//
// Frames (all x-axes along the tool shaft, pointing towards the tip):
//   {F}   forceps tip frame, tool-attached
//   {C}   application frame, tool-attached; origin is the shaft point that
//         should coincide with the RCM
//   {RCM} the world-fixed pivot point; orientation follows the shaft
//   {EE}  robot end-effector frame, the frame the robot consumes twists in
//
// Pipeline per control tick:
//   operator twist --scale/rotate--> {C}
//                  --lateral demand--> pivot angular rate about {C}
//                  --drift correction--> constrained translation
//                  --clamp--> re-express in {EE}

#include "rcmtel/spatial.hpp"

#include <stdexcept>

namespace rcmtel {

/// Pivot arms shorter than this amplify command noise through the 1/l term.
inline constexpr double kMinPivotArm = 0.005;

class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ControllerConfig {
  double alpha_t = 0.25;
  double alpha_r = 0.4;
  double gain_k = 5.0;       // 1/s
  double v_max = 0.05;       // m/s
  double omega_max = 0.5;    // rad/s
  Rotation input_to_app;     // operator input frame -> {C}

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(std::isfinite(v) && v > 0.0))
        throw std::invalid_argument(std::string("controller config: ") + name + " must be > 0");
    };
    positive(alpha_t, "alpha_t");
    positive(alpha_r, "alpha_r");
    positive(gain_k, "gain_k");
    positive(v_max, "v_max");
    positive(omega_max, "omega_max");
  }
};

struct ToolGeometry {
  double l = 0.1;                  // nominal RCM-to-tip distance, m
  double shaft_length = 0.2;       // distal shaft length, m
  RigidTransform ee_to_tip = RigidTransform::from_translation({0.3, 0.0, 0.0});

  void validate() const {
    if (!(std::isfinite(shaft_length) && shaft_length > 0.0))
      throw std::invalid_argument("tool geometry: shaft_length must be > 0");
    if (!(std::isfinite(l) && l > 0.0 && l <= shaft_length))
      throw std::invalid_argument("tool geometry: l must satisfy 0 < l <= shaft_length");
    require_finite(ee_to_tip.translation, "tool geometry: ee_to_tip");
  }
};

/// World poses of the four controller frames.
class FrameSet {
 public:
  /// Checks that {C} lies on the tip frame's shaft line and that {C} and
  /// {RCM} share the shaft direction. The {RCM} origin may sit off the
  /// line; that offset is the drift the controller corrects.
  FrameSet(RigidTransform world_C, RigidTransform world_F, RigidTransform world_RCM,
           RigidTransform world_EE)
      : world_C_(world_C), world_F_(world_F), world_RCM_(world_RCM), world_EE_(world_EE) {
    constexpr double tol = 1e-9;
    const Vec3 shaft = world_F_.rotation.x_axis();
    const Vec3 c_in_f = world_F_.inverse().apply(world_C_.translation);
    if (std::hypot(c_in_f.y(), c_in_f.z()) > tol)
      throw std::invalid_argument("frame set: {C} origin is off the shaft line");
    if ((world_C_.rotation.x_axis() - shaft).norm() > tol)
      throw std::invalid_argument("frame set: {C} x-axis is not aligned with the shaft");
    if ((world_RCM_.rotation.x_axis() - shaft).norm() > tol)
      throw std::invalid_argument("frame set: {RCM} x-axis is not aligned with the shaft");
  }

  const RigidTransform& world_C() const { return world_C_; }
  const RigidTransform& world_F() const { return world_F_; }
  const RigidTransform& world_RCM() const { return world_RCM_; }
  const RigidTransform& world_EE() const { return world_EE_; }

  /// Rotation taking {F} coordinates to {C} coordinates.
  Rotation c_from_f() const { return world_C_.rotation.transpose() * world_F_.rotation; }

  /// t^F_RCM - t^F_C: RCM origin relative to {C}, in {F} coordinates.
  Vec3 deviation() const {
    return world_F_.rotation.transpose() * (world_RCM_.translation - world_C_.translation);
  }

  /// Distance from the RCM point to the shaft line.
  double rcm_drift() const {
    const Vec3 d = deviation();
    return std::hypot(d.y(), d.z());
  }

  /// Signed distance from {C} to {F} along the shaft.
  double pivot_arm() const {
    return world_F_.rotation.x_axis().dot(world_F_.translation - world_C_.translation);
  }

 private:
  RigidTransform world_C_, world_F_, world_RCM_, world_EE_;
};

/// Rotates the operator twist into {C} and applies the motion scaling.
inline Twist scale_input(const Twist& tw_in, const ControllerConfig& cfg) {
  return {cfg.input_to_app * tw_in.linear * cfg.alpha_t,
          cfg.input_to_app * tw_in.angular * cfg.alpha_r};
}

/// Converts the lateral tip-velocity demand into a pivot about {C}. The roll
/// rate about the shaft passes through; operator pitch/yaw is not used.
/// Throws DegenerateGeometry when the pivot arm is shorter than kMinPivotArm.
inline Vec3 pivot_map(const Vec3& v_C, double omega_C_x, const FrameSet& frames) {
  const double l = frames.pivot_arm();
  if (!(l >= kMinPivotArm))
    throw DegenerateGeometry("pivot arm " + std::to_string(l) + " m is below the minimum");
  const Rotation c_from_f = frames.c_from_f();
  const Vec3 v_F = c_from_f.transpose() * v_C;
  const Vec3 omega_F{omega_C_x, -v_F.z() / l, v_F.y() / l};
  return c_from_f * omega_F;
}

/// Replaces the lateral part of the translation with k * deviation; the
/// insertion component along the shaft is kept.
inline Vec3 drift_correct(const Vec3& v_C, const FrameSet& frames, const ControllerConfig& cfg) {
  const Rotation c_from_f = frames.c_from_f();
  const Vec3 v_F = c_from_f.transpose() * v_C;
  const Vec3 delta = frames.deviation();
  return c_from_f * Vec3{v_F.x(), cfg.gain_k * delta.y(), cfg.gain_k * delta.z()};
}

/// Uniform scale-down so that both norms respect their limits.
inline Twist clamp_twist(const Twist& tw, double v_max, double omega_max) {
  double s = 1.0;
  const double vn = tw.linear.norm();
  const double wn = tw.angular.norm();
  if (vn > v_max) s = std::min(s, v_max / vn);
  if (wn > omega_max) s = std::min(s, omega_max / wn);
  return s < 1.0 ? tw * s : tw;
}

inline Twist to_end_effector(const Twist& tw_C, const FrameSet& frames) {
  return transform_twist(tw_C, compose(frames.world_EE().inverse(), frames.world_C()));
}

/// Constrained twist in {C}, before re-expression in {EE}.
inline Twist constrained_twist(const Twist& tw_in, const FrameSet& frames, const ControllerConfig& cfg) {
  const Twist scaled = scale_input(tw_in, cfg);
  const Vec3 omega = pivot_map(scaled.linear, scaled.angular.x(), frames);
  const Vec3 v = drift_correct(scaled.linear, frames, cfg);
  return clamp_twist({v, omega}, cfg.v_max, cfg.omega_max);
}

/// Full controller tick: operator twist in, {EE} twist out.
inline Twist step(const Twist& tw_in, const FrameSet& frames, const ControllerConfig& cfg) {
  return to_end_effector(constrained_twist(tw_in, frames, cfg), frames);
}

}  // namespace rcmtel
