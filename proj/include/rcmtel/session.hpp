#pragma once

// Deterministic tick engine shared by scripted scenarios, the live service
// and log replay. One call to Session::tick advances the world by one
// control period; all time inside a session is derived from the tick index.

#include "rcmtel/rcm_controller.hpp"
#include "rcmtel/safety.hpp"
#include "rcmtel/simulator.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace rcmtel {

struct SessionConfig {
  double rate_hz = 1000.0;
  int telemetry_decimation = 10;
  double debounce_s = 0.05;
  std::optional<double> staleness_s = 0.2;  // nullopt: twist commands hold until replaced
  ControllerConfig controller;
  ToolGeometry geometry;
  LaryngoscopeChannel channel;
  JawModel jaw;
  RigidTransform initial_ee;
  std::optional<TremorModel> tremor;

  double period() const { return 1.0 / rate_hz; }

  void validate() const {
    if (!(rate_hz >= 100.0 && rate_hz <= 2000.0))
      throw std::invalid_argument("session config: rate must lie in [100, 2000] Hz");
    if (telemetry_decimation < 1) throw std::invalid_argument("session config: decimation must be >= 1");
    if (!(debounce_s >= 0.0 && std::isfinite(debounce_s)))
      throw std::invalid_argument("session config: debounce must be >= 0");
    if (staleness_s && !(*staleness_s > 0.0))
      throw std::invalid_argument("session config: staleness horizon must be > 0");
    controller.validate();
    geometry.validate();
    if (geometry.l < kMinPivotArm) throw std::invalid_argument("session config: l below minimum pivot arm");
    channel.validate();
    jaw.validate();
  }
};

struct TwistCommand {
  Twist twist;
  bool operator==(const TwistCommand&) const = default;
};
struct GripperCommand {
  double value = 0.0;  // 0 closed, 1 fully open
  bool operator==(const GripperCommand&) const = default;
};
struct PedalCommand {
  bool left = false;
  bool right = false;
  bool operator==(const PedalCommand&) const = default;
};
struct SetRcmCommand {
  double offset = 0.1;  // m behind the tip
  bool operator==(const SetRcmCommand&) const = default;
};
struct SetConfigCommand {
  std::optional<double> alpha_t, alpha_r, gain_k, v_max, omega_max;
  bool operator==(const SetConfigCommand&) const = default;
};

using Command = std::variant<TwistCommand, GripperCommand, PedalCommand, SetRcmCommand, SetConfigCommand>;

struct CommandMessage {
  std::uint64_t seq = 0;
  std::int64_t t_client = 0;  // ms, client clock
  Command command;
  bool operator==(const CommandMessage&) const = default;
};

struct TelemetryFrame {
  double t = 0.0;
  RigidTransform world_EE;
  Vec3 tip = Vec3::Zero();
  double jaw = 0.0;
  double rcm_drift = 0.0;
  bool enabled = false;
  Twist commanded;
  Twist gated;
  double clearance = 0.0;
  std::uint64_t last_seq_applied = 0;
  bool fault = false;  // controller rejected the geometry this tick
};

/// Checks that depend on the session's geometry rather than on the wire
/// schema alone. Returns a reason when the command must be rejected.
inline std::optional<std::string> check_command(const SessionConfig& cfg, const Command& cmd) {
  if (const auto* rcm = std::get_if<SetRcmCommand>(&cmd)) {
    if (!(rcm->offset >= kMinPivotArm && rcm->offset <= cfg.geometry.shaft_length))
      return "set_rcm offset outside [min pivot arm, shaft_length]";
  }
  return std::nullopt;
}

class Session {
 public:
  explicit Session(SessionConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    state_.world_EE = cfg_.initial_ee;
    interlock_.debounce_window = std::chrono::duration_cast<Nanos>(std::chrono::duration<double>(cfg_.debounce_s));
    anchor_rcm(cfg_.geometry.l);
  }

  std::optional<std::string> check(const Command& cmd) const { return check_command(cfg_, cmd); }

  TelemetryFrame tick(std::span<const CommandMessage> inbox) {
    const double dt = cfg_.period();
    const double t = static_cast<double>(tick_) / cfg_.rate_hz;
    const Nanos now{std::llround(static_cast<double>(tick_) * 1e9 / cfg_.rate_hz)};

    for (const auto& msg : inbox) {
      apply(msg.command, now);
      if (msg.seq > last_seq_) last_seq_ = msg.seq;
    }

    interlock_ = update(pedals_, now, interlock_);

    Twist input = Twist::zero();
    if (last_twist_tick_) {
      const double age = static_cast<double>(tick_ - *last_twist_tick_) / cfg_.rate_hz;
      if (!cfg_.staleness_s || age <= *cfg_.staleness_s) input = twist_;
    }
    if (cfg_.tremor) input = inject_tremor(input, *cfg_.tremor, t);

    const FrameSet frames = derive_frames(state_, cfg_.geometry, rcm_);
    TelemetryFrame frame;
    try {
      frame.commanded = step(input, frames, cfg_.controller);
    } catch (const DegenerateGeometry&) {
      frame.commanded = Twist::zero();
      frame.fault = true;
    }
    frame.gated = gate(frame.commanded, interlock_);

    frame.t = t;
    frame.world_EE = state_.world_EE;
    frame.tip = frames.world_F().translation;
    frame.jaw = state_.jaw_angle;
    frame.rcm_drift = frames.rcm_drift();
    frame.enabled = interlock_.enabled;
    frame.clearance = channel_clearance(state_, cfg_.geometry, cfg_.channel);
    frame.last_seq_applied = last_seq_;

    state_ = apply_twist(state_, frame.gated, dt);
    state_ = jaw_step(state_, cfg_.jaw, gripper_, dt);
    ++tick_;
    state_.time = static_cast<double>(tick_) / cfg_.rate_hz;
    return frame;
  }

  std::uint64_t ticks() const { return tick_; }
  const ToolState& state() const { return state_; }
  const Vec3& rcm_point() const { return rcm_; }
  const SessionConfig& config() const { return cfg_; }
  bool enabled() const { return interlock_.enabled; }

 private:
  void anchor_rcm(double offset) {
    const RigidTransform world_F = tip_pose(state_, cfg_.geometry);
    rcm_ = world_F.translation - world_F.rotation.x_axis() * offset;
  }

  void apply(const Command& cmd, Nanos now) {
    if (check(cmd)) return;
    std::visit(
        [&](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, TwistCommand>) {
            twist_ = c.twist;
            last_twist_tick_ = tick_;
          } else if constexpr (std::is_same_v<T, GripperCommand>) {
            gripper_ = std::clamp(c.value, 0.0, 1.0);
          } else if constexpr (std::is_same_v<T, PedalCommand>) {
            if (c.left != pedals_.left || c.right != pedals_.right) pedals_.last_change = now;
            pedals_.left = c.left;
            pedals_.right = c.right;
          } else if constexpr (std::is_same_v<T, SetRcmCommand>) {
            cfg_.geometry.l = c.offset;
            anchor_rcm(c.offset);
          } else if constexpr (std::is_same_v<T, SetConfigCommand>) {
            ControllerConfig next = cfg_.controller;
            if (c.alpha_t) next.alpha_t = *c.alpha_t;
            if (c.alpha_r) next.alpha_r = *c.alpha_r;
            if (c.gain_k) next.gain_k = *c.gain_k;
            if (c.v_max) next.v_max = *c.v_max;
            if (c.omega_max) next.omega_max = *c.omega_max;
            try {
              next.validate();
              cfg_.controller = next;
            } catch (const std::invalid_argument&) {
            }
          }
        },
        cmd);
  }

  SessionConfig cfg_;
  ToolState state_;
  InterlockState interlock_;
  PedalState pedals_;
  Vec3 rcm_ = Vec3::Zero();
  Twist twist_;
  std::optional<std::uint64_t> last_twist_tick_;
  double gripper_ = 0.0;
  std::uint64_t last_seq_ = 0;
  std::uint64_t tick_ = 0;
};

}  // namespace rcmtel
