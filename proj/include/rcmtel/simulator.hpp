#pragma once

// Kinematic stand-in for the robot, forceps end-effector and laryngoscope.
// The robot is an ideal Cartesian velocity follower: whatever {EE} twist is
// commanded is integrated exactly as given.

#include "rcmtel/rcm_controller.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>

namespace rcmtel {

struct ToolState {
  RigidTransform world_EE;
  double jaw_angle = 0.0;   // rad
  double jaw_target = 0.0;  // rad
  double time = 0.0;        // s
};

struct JawModel {
  double jaw_max = 0.6;       // rad
  double rate_limit = 1.5;    // rad/s
  double torque_limit = 0.5;  // N*m, motor rating; not used by the kinematic model

  void validate() const {
    if (!(jaw_max > 0.0 && rate_limit > 0.0 && torque_limit > 0.0))
      throw std::invalid_argument("jaw model: all parameters must be > 0");
  }
};

/// Finite cylinder around the laryngoscope lumen. The mouth sits at
/// `mouth_position` along the axis; the lumen extends `length` beyond it.
struct LaryngoscopeChannel {
  Vec3 point{0.2, 0.0, 0.0};
  Vec3 direction{1.0, 0.0, 0.0};
  double radius = 0.008;
  double mouth_position = 0.0;
  double length = 0.12;

  void validate() const {
    require_finite(point, "channel point");
    if (std::abs(direction.norm() - 1.0) > 1e-9)
      throw std::invalid_argument("channel: direction must be unit norm");
    if (!(radius > 0.0 && length > 0.0)) throw std::invalid_argument("channel: radius and length must be > 0");
  }
};

inline ToolState apply_twist(ToolState state, const Twist& tw_EE, double dt) {
  state.world_EE = integrate_pose(state.world_EE, tw_EE, dt);
  state.time += dt;
  return state;
}

inline RigidTransform tip_pose(const ToolState& state, const ToolGeometry& geom) {
  return compose(state.world_EE, geom.ee_to_tip);
}

/// Frames for a world-fixed RCM point. {C} is the foot of the perpendicular
/// from the RCM point onto the shaft line; {C} and {RCM} take the tip
/// frame's orientation.
inline FrameSet derive_frames(const ToolState& state, const ToolGeometry& geom, const Vec3& world_rcm) {
  const RigidTransform world_F = tip_pose(state, geom);
  const Vec3 shaft = world_F.rotation.x_axis();
  const Vec3 c = world_F.translation + shaft * shaft.dot(world_rcm - world_F.translation);
  return FrameSet({world_F.rotation, c}, world_F, {world_F.rotation, world_rcm}, state.world_EE);
}

/// Frames with the RCM placed `rcm_offset` behind the tip along the shaft.
inline FrameSet derive_frames(const ToolState& state, const ToolGeometry& geom, double rcm_offset) {
  if (!(rcm_offset >= 0.0 && rcm_offset <= geom.shaft_length))
    throw std::invalid_argument("derive_frames: rcm_offset outside [0, shaft_length]");
  const RigidTransform world_F = tip_pose(state, geom);
  const Vec3 rcm = world_F.translation - world_F.rotation.x_axis() * rcm_offset;
  const RigidTransform at_rcm{world_F.rotation, rcm};
  return FrameSet(at_rcm, world_F, at_rcm, state.world_EE);
}

/// Rate-limited move of the jaw towards command * jaw_max.
inline ToolState jaw_step(ToolState state, const JawModel& model, double command, double dt) {
  if (!(command >= 0.0 && command <= 1.0)) throw std::invalid_argument("jaw_step: command outside [0, 1]");
  state.jaw_target = command * model.jaw_max;
  const double max_delta = model.rate_limit * dt;
  const double delta = std::clamp(state.jaw_target - state.jaw_angle, -max_delta, max_delta);
  state.jaw_angle = std::clamp(state.jaw_angle + delta, 0.0, model.jaw_max);
  return state;
}

/// Radius minus the largest radial offset of the shaft segment lying inside
/// the channel; negative means the shaft intersects the wall. Returns the
/// radius when no part of the shaft is inside.
inline double channel_clearance(const ToolState& state, const ToolGeometry& geom, const LaryngoscopeChannel& ch) {
  const RigidTransform world_F = tip_pose(state, geom);
  const Vec3 tip = world_F.translation;
  const Vec3 back = -world_F.rotation.x_axis();  // from tip towards the proximal end

  // Axial coordinate along the channel is affine in the shaft parameter s.
  const double a0 = ch.direction.dot(tip - ch.point);
  const double da = ch.direction.dot(back);
  const double lo_a = ch.mouth_position;
  const double hi_a = ch.mouth_position + ch.length;

  double s_lo = 0.0;
  double s_hi = geom.shaft_length;
  if (std::abs(da) < 1e-15) {
    if (a0 < lo_a || a0 > hi_a) return ch.radius;
  } else {
    double s1 = (lo_a - a0) / da;
    double s2 = (hi_a - a0) / da;
    if (s1 > s2) std::swap(s1, s2);
    s_lo = std::max(s_lo, s1);
    s_hi = std::min(s_hi, s2);
    if (s_lo > s_hi) return ch.radius;
  }

  auto radial = [&](double s) {
    const Vec3 rel = tip + back * s - ch.point;
    return (rel - ch.direction * ch.direction.dot(rel)).norm();
  };
  // Distance to a line is convex along a segment, so the maximum is at an end.
  return ch.radius - std::max(radial(s_lo), radial(s_hi));
}

/// Band-limited synthetic tremor: on each linear axis, a sum of eight
/// sinusoids evenly spaced over [low, high] Hz with seeded random phases.
/// `amplitude` is the per-axis RMS velocity in m/s.
class TremorModel {
 public:
  static constexpr int kComponents = 8;

  TremorModel() : TremorModel(0.0, 6.0, 12.0, 0) {}

  TremorModel(double amplitude, double low_hz, double high_hz, std::uint64_t seed)
      : amplitude_(amplitude), low_(low_hz), high_(high_hz), seed_(seed) {
    if (!(amplitude >= 0.0 && std::isfinite(amplitude)))
      throw std::invalid_argument("tremor: amplitude must be >= 0");
    if (!(low_hz >= 0.0 && low_hz < high_hz && std::isfinite(high_hz)))
      throw std::invalid_argument("tremor: band must satisfy 0 <= low < high");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    for (auto& axis : phases_)
      for (auto& p : axis) p = phase(rng);
  }

  double amplitude() const { return amplitude_; }
  double low() const { return low_; }
  double high() const { return high_; }
  std::uint64_t seed() const { return seed_; }

  double frequency(int i) const { return low_ + (high_ - low_) * i / (kComponents - 1); }

  Vec3 velocity(double t) const {
    if (amplitude_ == 0.0) return Vec3::Zero();
    // Per-component amplitude such that the per-axis RMS equals amplitude_.
    const double a = amplitude_ * std::sqrt(2.0 / kComponents);
    Vec3 v = Vec3::Zero();
    for (int axis = 0; axis < 3; ++axis)
      for (int i = 0; i < kComponents; ++i)
        v[axis] += a * std::sin(2.0 * kPi * frequency(i) * t + phases_[axis][i]);
    return v;
  }

 private:
  double amplitude_;
  double low_;
  double high_;
  std::uint64_t seed_;
  std::array<std::array<double, kComponents>, 3> phases_{};
};

inline Twist inject_tremor(const Twist& tw, const TremorModel& model, double t) {
  return {tw.linear + model.velocity(t), tw.angular};
}

}  // namespace rcmtel
