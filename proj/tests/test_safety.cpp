#include "rcmtel/safety.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <random>

using namespace rcmtel;
using namespace std::chrono_literals;

namespace {

constexpr Nanos kTick = 1ms;

bool bitwise_zero(const Twist& tw) {
  for (int i = 0; i < 3; ++i)
    if (std::bit_cast<std::uint64_t>(tw.linear[i]) != 0 || std::bit_cast<std::uint64_t>(tw.angular[i]) != 0)
      return false;
  return true;
}

PedalState pedals_from_bits(int bits) { return {(bits & 1) != 0, (bits & 2) != 0, Nanos{0}}; }

const Twist kMotion{{0.01, -0.02, 0.03}, {0.1, 0.2, -0.3}};

}  // namespace

TEST(Interlock, BothHeldPastDebounceEnables) {
  InterlockState s;
  const PedalState both{true, true, Nanos{0}};
  s = update(both, 0ms, s);
  EXPECT_FALSE(s.enabled);
  s = update(both, 49ms, s);
  EXPECT_FALSE(s.enabled);
  s = update(both, 50ms, s);
  EXPECT_TRUE(s.enabled);
}

TEST(Interlock, SinglePedalNeverEnables) {
  InterlockState s;
  for (int i = 0; i < 200; ++i) {
    s = update({true, false, Nanos{0}}, i * kTick, s);
    EXPECT_FALSE(s.enabled);
  }
}

TEST(Interlock, ReleaseDisablesImmediately) {
  InterlockState s;
  for (int i = 0; i <= 60; ++i) s = update({true, true, Nanos{0}}, i * kTick, s);
  ASSERT_TRUE(s.enabled);
  s = update({false, true, Nanos{0}}, 61 * kTick, s);
  EXPECT_FALSE(s.enabled);
  EXPECT_TRUE(bitwise_zero(gate(kMotion, s)));
}

TEST(Interlock, ShortPressNeverEnables) {
  InterlockState s;
  for (int i = 0; i < 49; ++i) {
    s = update({true, true, Nanos{0}}, i * kTick, s);
    EXPECT_FALSE(s.enabled) << "tick " << i;
  }
  s = update({false, false, Nanos{0}}, 49 * kTick, s);
  s = update({true, true, Nanos{0}}, 50 * kTick, s);
  EXPECT_FALSE(s.enabled);
}

TEST(Interlock, TimeRegressionRejected) {
  InterlockState s;
  s = update({true, true, Nanos{0}}, 10ms, s);
  EXPECT_THROW(update({true, true, Nanos{0}}, 9ms, s), TimeRegression);
  EXPECT_NO_THROW(update({true, true, Nanos{0}}, 10ms, s));
}

TEST(Gate, EnabledPassesThrough) {
  InterlockState s;
  s.enabled = true;
  EXPECT_EQ(gate(kMotion, s), kMotion);
}

TEST(Gate, DisabledIsBitwiseZero) {
  InterlockState s;
  EXPECT_TRUE(bitwise_zero(gate(kMotion, s)));
  const Twist negative_zero{{-0.0, -0.0, -0.0}, {-0.0, -0.0, -0.0}};
  EXPECT_TRUE(bitwise_zero(gate(negative_zero, s)));
  EXPECT_TRUE(bitwise_zero(gate(Twist::zero(), s)));
}

// Every pedal sequence of length 10 (4^10 sequences) with a 3-tick debounce,
// checked against a run-length oracle.
TEST(Interlock, ExhaustiveSequences) {
  constexpr int kLen = 10;
  constexpr int kDebounceTicks = 3;
  long checked = 0;
  for (int code = 0; code < (1 << (2 * kLen)); ++code) {
    InterlockState s;
    s.debounce_window = kDebounceTicks * kTick;
    int run = 0;  // consecutive both-pressed ticks before this one
    bool prev_enabled = false;
    for (int t = 0; t < kLen; ++t) {
      const PedalState p = pedals_from_bits((code >> (2 * t)) & 3);
      s = update(p, t * kTick, s);
      const bool both = p.both_pressed();
      const bool expected = both && run >= kDebounceTicks;
      ASSERT_EQ(s.enabled, expected) << "code " << code << " tick " << t;
      if (!s.enabled) {
        ASSERT_TRUE(bitwise_zero(gate(kMotion, s)));
      } else {
        ASSERT_EQ(gate(kMotion, s), kMotion);
      }
      if (prev_enabled && !both) {
        ASSERT_FALSE(s.enabled);  // release-to-stop within the same tick
      }
      run = both ? run + 1 : 0;
      prev_enabled = s.enabled;
      ++checked;
    }
  }
  EXPECT_EQ(checked, static_cast<long>(kLen) << (2 * kLen));
}

TEST(Interlock, FuzzedChatterRespectsDebounce) {
  std::mt19937_64 rng(1234);
  std::bernoulli_distribution flip(0.005);
  InterlockState s;
  PedalState p;
  std::optional<Nanos> both_since;
  long enabled_ticks = 0;
  for (long i = 0; i < 1'000'000; ++i) {
    if (flip(rng)) p.left = !p.left;
    if (flip(rng)) p.right = !p.right;
    const Nanos now = i * kTick;
    s = update(p, now, s);
    if (p.both_pressed()) {
      if (!both_since) both_since = now;
    } else {
      both_since.reset();
    }
    if (s.enabled) {
      ++enabled_ticks;
      ASSERT_TRUE(both_since.has_value());
      ASSERT_GE(now - *both_since, s.debounce_window);
    } else {
      ASSERT_TRUE(bitwise_zero(gate(kMotion, s)));
    }
  }
  EXPECT_GT(enabled_ticks, 0);
}
