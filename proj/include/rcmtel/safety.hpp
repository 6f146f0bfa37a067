#pragma once

// Dual foot-pedal deadman interlock. Motion is allowed only while both
// pedals are held; enabling waits out a debounce window, disabling is
// immediate.

#include "rcmtel/spatial.hpp"

#include <chrono>
#include <optional>
#include <stdexcept>

namespace rcmtel {

using Nanos = std::chrono::nanoseconds;

struct PedalState {
  bool left = false;
  bool right = false;
  Nanos last_change{0};

  bool both_pressed() const { return left && right; }
};

class TimeRegression : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct InterlockState {
  bool enabled = false;
  Nanos debounce_window = std::chrono::milliseconds(50);
  std::optional<Nanos> pressed_since;  // start of the current both-pressed run
  Nanos last_update{0};
};

inline InterlockState update(const PedalState& pedals, Nanos now, InterlockState state) {
  if (now < state.last_update) throw TimeRegression("interlock: time went backwards");
  state.last_update = now;
  if (!pedals.both_pressed()) {
    state.pressed_since.reset();
    state.enabled = false;
    return state;
  }
  if (!state.pressed_since) state.pressed_since = now;
  state.enabled = (now - *state.pressed_since) >= state.debounce_window;
  return state;
}

inline Twist gate(const Twist& tw, const InterlockState& state) {
  return state.enabled ? tw : Twist::zero();
}

}  // namespace rcmtel
