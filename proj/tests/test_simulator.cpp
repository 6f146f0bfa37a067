#include "rcmtel/simulator.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace rcmtel;
using namespace rcmtel::testing;

namespace {

/// Tool pivoted by `angle` about world z through `pivot`, with the tip
/// `arm` metres beyond the pivot.
ToolState pivoted(const ToolGeometry& geom, const Vec3& pivot, double angle, double arm) {
  const Rotation r = Rotation::about_z(angle);
  const RigidTransform world_F{r, pivot + r * Vec3(arm, 0, 0)};
  ToolState s;
  s.world_EE = compose(world_F, geom.ee_to_tip.inverse());
  return s;
}

double point_line_distance(const Vec3& p, const Vec3& a, const Vec3& dir) {
  const Vec3 rel = p - a;
  return (rel - dir * dir.dot(rel)).norm();
}

}  // namespace

TEST(ApplyTwist, ZeroTwistOnlyAdvancesTime) {
  Rng rng(40);
  ToolState s;
  s.world_EE = random_transform(rng);
  s.jaw_angle = 0.2;
  const ToolState next = apply_twist(s, Twist::zero(), 0.001);
  EXPECT_EQ(next.world_EE.translation, s.world_EE.translation);
  EXPECT_EQ(next.world_EE.rotation.matrix(), s.world_EE.rotation.matrix());
  EXPECT_EQ(next.jaw_angle, s.jaw_angle);
  EXPECT_DOUBLE_EQ(next.time, 0.001);
}

TEST(ApplyTwist, ConstantVelocityDisplacement) {
  ToolState s;
  for (int i = 0; i < 1000; ++i) s = apply_twist(s, {{0.01, 0, 0}, Vec3::Zero()}, 0.001);
  EXPECT_NEAR(s.world_EE.translation.x(), 0.01, 1e-6);
  EXPECT_NEAR(s.world_EE.translation.y(), 0.0, 1e-15);
  EXPECT_NEAR(s.time, 1.0, 1e-9);
}

TEST(ApplyTwist, RollAboutRcmAxisKeepsRcmToTipDistance) {
  const ToolGeometry geom;
  ToolState s;
  const Vec3 rcm = derive_frames(s, geom, geom.l).world_RCM().translation;
  for (int i = 0; i < 1000; ++i) s = apply_twist(s, {Vec3::Zero(), {0.8, 0, 0}}, 0.001);
  const Vec3 tip = tip_pose(s, geom).translation;
  EXPECT_NEAR((tip - rcm).norm(), geom.l, 1e-6);
  EXPECT_NEAR(s.world_EE.rotation.log().x(), 0.8, 1e-9);
}

TEST(ApplyTwist, TipToEndEffectorDistanceIsRigid) {
  Rng rng(41);
  const ToolGeometry geom;
  ToolState s;
  const double d0 = (tip_pose(s, geom).translation - s.world_EE.translation).norm();
  for (int i = 0; i < 10000; ++i) {
    s = apply_twist(s, random_twist(rng, 0.05, 0.5), 0.001);
    const double d = (tip_pose(s, geom).translation - s.world_EE.translation).norm();
    ASSERT_NEAR(d, d0, 1e-6);
  }
}

TEST(DeriveFrames, NominalOffsetClosedForm) {
  const ToolGeometry geom;
  const FrameSet f = derive_frames(ToolState{}, geom, geom.l);
  EXPECT_NEAR((f.world_F().translation - Vec3(0.3, 0, 0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((f.world_RCM().translation - Vec3(0.2, 0, 0)).norm(), 0.0, 1e-15);
  EXPECT_EQ(f.world_C().translation, f.world_RCM().translation);
  EXPECT_NEAR(f.pivot_arm(), geom.l, 1e-15);
  EXPECT_EQ(f.rcm_drift(), 0.0);
}

TEST(DeriveFrames, ZeroOffsetCoincidesWithTip) {
  Rng rng(42);
  ToolState s;
  s.world_EE = random_transform(rng);
  const FrameSet f = derive_frames(s, ToolGeometry{}, 0.0);
  EXPECT_EQ(f.world_RCM().translation, f.world_F().translation);
  EXPECT_EQ(f.world_RCM().rotation.matrix(), f.world_F().rotation.matrix());
}

TEST(DeriveFrames, RejectsOffsetOutsideShaft) {
  const ToolGeometry geom;
  EXPECT_THROW(derive_frames(ToolState{}, geom, -1e-6), std::invalid_argument);
  EXPECT_THROW(derive_frames(ToolState{}, geom, geom.shaft_length + 1e-6), std::invalid_argument);
  EXPECT_NO_THROW(derive_frames(ToolState{}, geom, geom.shaft_length));
}

TEST(DeriveFrames, FrameOriginsColinear) {
  Rng rng(43);
  const ToolGeometry geom;
  for (int i = 0; i < 1000; ++i) {
    ToolState s;
    s.world_EE = random_transform(rng);
    const FrameSet f = derive_frames(s, geom, uniform(rng, 0.0, geom.shaft_length));
    const Vec3 a = f.world_F().translation;
    const Vec3 dir = f.world_F().rotation.x_axis();
    EXPECT_LT(point_line_distance(f.world_RCM().translation, a, dir), 1e-12);
    EXPECT_LT(point_line_distance(f.world_C().translation, a, dir), 1e-12);
    EXPECT_LT(point_line_distance(f.world_EE().translation, a, dir), 1e-12);
  }
}

TEST(DeriveFrames, WorldAnchorProjectsOntoShaft) {
  Rng rng(44);
  const ToolGeometry geom;
  ToolState s;
  s.world_EE = random_transform(rng);
  const Vec3 anchor = derive_frames(s, geom, geom.l).world_RCM().translation;
  s = apply_twist(s, {{0, 0.01, 0.02}, Vec3::Zero()}, 0.05);
  const FrameSet f = derive_frames(s, geom, anchor);
  EXPECT_EQ(f.world_RCM().translation, anchor);
  EXPECT_NEAR(f.rcm_drift(), point_line_distance(anchor, f.world_F().translation, f.world_F().rotation.x_axis()),
              1e-15);
  EXPECT_NEAR(f.rcm_drift(), std::hypot(0.01, 0.02) * 0.05, 1e-12);
}

TEST(JawStep, MatchingCommandIsStationary) {
  const JawModel model;
  ToolState s;
  s.jaw_angle = 0.3;
  const ToolState next = jaw_step(s, model, 0.3 / model.jaw_max, 0.001);
  EXPECT_DOUBLE_EQ(next.jaw_angle, 0.3);
}

TEST(JawStep, FullOpenTiming) {
  JawModel model;
  model.rate_limit = 1.0;
  model.jaw_max = 0.5;
  const double dt = 0.001;
  ToolState s;
  int ticks = 0;
  while (s.jaw_angle < model.jaw_max && ticks < 10000) {
    s = jaw_step(s, model, 1.0, dt);
    ++ticks;
  }
  EXPECT_NEAR(ticks, 500, 1);
  EXPECT_DOUBLE_EQ(s.jaw_target, 0.5);
}

TEST(JawStep, AlternatingCommandsRespectSlewLimit) {
  const JawModel model;
  const double dt = 0.001;
  ToolState s;
  Rng rng(45);
  for (int i = 0; i < 20000; ++i) {
    const double cmd = (i % 2 == 0) ? 1.0 : uniform(rng, 0.0, 1.0);
    const ToolState next = jaw_step(s, model, cmd, dt);
    ASSERT_LE(std::abs(next.jaw_angle - s.jaw_angle), model.rate_limit * dt * (1 + 1e-12));
    ASSERT_GE(next.jaw_angle, 0.0);
    ASSERT_LE(next.jaw_angle, model.jaw_max);
    s = next;
  }
}

TEST(JawStep, RejectsOutOfRangeCommand) {
  EXPECT_THROW(jaw_step(ToolState{}, JawModel{}, 1.01, 0.001), std::invalid_argument);
  EXPECT_THROW(jaw_step(ToolState{}, JawModel{}, -0.01, 0.001), std::invalid_argument);
  EXPECT_THROW(jaw_step(ToolState{}, JawModel{}, std::nan(""), 0.001), std::invalid_argument);
}

TEST(ChannelClearance, ShaftOnAxis) {
  const ToolGeometry geom;
  const LaryngoscopeChannel ch;
  EXPECT_DOUBLE_EQ(channel_clearance(ToolState{}, geom, ch), ch.radius);
}

TEST(ChannelClearance, ParallelOffset) {
  const ToolGeometry geom;
  const LaryngoscopeChannel ch;
  ToolState s;
  s.world_EE.translation = {0, 0.003, 0};
  EXPECT_NEAR(channel_clearance(s, geom, ch), ch.radius - 0.003, 1e-15);
  s.world_EE.translation = {0, 0.006, -0.008};
  EXPECT_NEAR(channel_clearance(s, geom, ch), ch.radius - 0.01, 1e-15);
}

TEST(ChannelClearance, ShaftOutsideChannelReportsRadius) {
  const ToolGeometry geom;
  const LaryngoscopeChannel ch;
  ToolState s;
  s.world_EE.translation = {-0.5, 0.05, 0};
  EXPECT_DOUBLE_EQ(channel_clearance(s, geom, ch), ch.radius);
}

TEST(ChannelClearance, PivotSweepMatchesDenseSampling) {
  const ToolGeometry geom;
  const LaryngoscopeChannel ch;
  const Vec3 mouth = ch.point + ch.direction * ch.mouth_position;
  constexpr int kSamples = 20000;
  for (int k = -100; k <= 100; ++k) {
    const double angle = deg2rad(10.0) * k / 100.0;
    const ToolState s = pivoted(geom, mouth, angle, geom.l);
    const RigidTransform F = tip_pose(s, geom);
    double worst = 0.0;
    bool inside = false;
    for (int i = 0; i <= kSamples; ++i) {
      const Vec3 p = F.translation - F.rotation.x_axis() * (geom.shaft_length * i / kSamples);
      const double axial = ch.direction.dot(p - ch.point);
      if (axial < ch.mouth_position || axial > ch.mouth_position + ch.length) continue;
      inside = true;
      worst = std::max(worst, point_line_distance(p, ch.point, ch.direction));
    }
    ASSERT_TRUE(inside);
    const double oracle = ch.radius - worst;
    const double got = channel_clearance(s, geom, ch);
    EXPECT_LE(got, oracle + 1e-15);
    EXPECT_GT(got, oracle - 1e-5);
    // Pivoting at the mouth: the deepest inside point is the tip.
    EXPECT_NEAR(got, ch.radius - geom.l * std::abs(std::sin(angle)), 1e-12);
  }
}

TEST(Tremor, ZeroAmplitudeLeavesTwist) {
  const TremorModel model(0.0, 6.0, 12.0, 3);
  const Twist tw{{0.1, 0.2, 0.3}, {1, 2, 3}};
  EXPECT_EQ(inject_tremor(tw, model, 1.234), tw);
}

TEST(Tremor, DeterministicForSeed) {
  const TremorModel a(0.01, 6.0, 12.0, 77), b(0.01, 6.0, 12.0, 77), c(0.01, 6.0, 12.0, 78);
  EXPECT_EQ(a.velocity(0.4321), b.velocity(0.4321));
  EXPECT_NE(a.velocity(0.4321), c.velocity(0.4321));
}

TEST(Tremor, OnlyLinearComponentsPerturbed) {
  const TremorModel model(0.01, 6.0, 12.0, 5);
  const Twist out = inject_tremor(Twist::zero(), model, 0.25);
  EXPECT_GT(out.linear.norm(), 0.0);
  EXPECT_EQ(out.angular, Vec3::Zero());
}

TEST(Tremor, SampleRmsMatchesClosedForm) {
  const double A = 0.004;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const TremorModel model(A, 6.0, 12.0, seed);
    // Sum of eight unit-phase sinusoids with amplitude a: RMS = a*sqrt(8/2).
    const double closed = A * std::sqrt(2.0 / TremorModel::kComponents) * std::sqrt(TremorModel::kComponents / 2.0);
    Vec3 sq = Vec3::Zero();
    const int n = 200000;
    for (int i = 0; i < n; ++i) sq += model.velocity(i * 1e-3).cwiseAbs2();
    for (int axis = 0; axis < 3; ++axis) EXPECT_NEAR(std::sqrt(sq[axis] / n), closed, 0.05 * closed);
  }
}

TEST(Tremor, FrequenciesSpanBand) {
  const TremorModel model(0.01, 6.0, 12.0, 0);
  EXPECT_DOUBLE_EQ(model.frequency(0), 6.0);
  EXPECT_DOUBLE_EQ(model.frequency(TremorModel::kComponents - 1), 12.0);
  EXPECT_THROW(TremorModel(0.01, 12.0, 6.0, 0), std::invalid_argument);
  EXPECT_THROW(TremorModel(-1.0, 6.0, 12.0, 0), std::invalid_argument);
}
