#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "areapo/environment.hpp"
#include "areapo/errors.hpp"

using namespace areapo;

namespace {

EnvConfig quiet_config() {
  EnvConfig c;
  c.reset.noise_std.setZero();
  c.reset.p_trunc = 0.0;
  return c;
}

}  // namespace

TEST(Reward, ThreeReferenceValues) {
  const RewardSpec spec;
  EXPECT_EQ(reward(Eigen::Vector4d(M_PI, 0, 0, 0), 0.0, spec), 0.0);
  EXPECT_DOUBLE_EQ(reward(Eigen::Vector4d::Zero(), 0.0, spec), -0.001 * 50.0 * M_PI * M_PI);
  EXPECT_DOUBLE_EQ(reward(Eigen::Vector4d(M_PI, 0, 0, 0), 1.0, spec), -0.001);
}

TEST(Reward, NonPositiveAndZeroOnlyAtGoal) {
  const RewardSpec spec;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int k = 0; k < 1000; ++k) {
    const Eigen::Vector4d s(u(rng), u(rng), u(rng), u(rng));
    EXPECT_LT(reward(s, u(rng), spec), 0.0);
  }
  // Goal reached through a full turn of either joint.
  EXPECT_NEAR(reward(Eigen::Vector4d(3 * M_PI, 2 * M_PI, 0, 0), 0.0, spec), 0.0, 1e-25);
  // Wrapped distance: just past +pi is close to the goal, not 2 pi away.
  EXPECT_NEAR(reward(Eigen::Vector4d(-M_PI + 0.1, 0, 0, 0), 0.0, spec), -0.001 * 50 * 0.01, 1e-12);
}

TEST(Observation, ScalingExamples) {
  EXPECT_EQ(scale_observation(State{0, 0, 0, 0, 0}), Eigen::Vector4d::Zero());
  EXPECT_EQ(scale_observation(State{M_PI, 0, 0, 0, 0}), Eigen::Vector4d(1, 0, 0, 0));
  const Eigen::Vector4d o = scale_observation(State{3 * M_PI, 0, 0, 0, 0});
  EXPECT_NEAR(o(0), 1.0, 1e-15);
  EXPECT_EQ(scale_observation(State{0, 0, 10, -40, 0}), Eigen::Vector4d(0, 0, 0.5, -2.0));
  EXPECT_EQ(wrap_angle(-M_PI), M_PI);
}

TEST(Observation, AngleComponentsInHalfOpenUnitInterval) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int k = 0; k < 10000; ++k) {
    const Eigen::Vector4d o = scale_observation(State{u(rng), u(rng), u(rng), u(rng), 0});
    for (int i = 0; i < 2; ++i) {
      EXPECT_GT(o(i), -1.0);
      EXPECT_LE(o(i), 1.0);
    }
  }
}

TEST(Normalization, FirstObservationAndConstantStream) {
  RunningStats st;
  const Eigen::Vector4d o(0.3, -0.2, 1.0, 5.0);
  EXPECT_EQ(normalize_and_update(o, st, false), Eigen::Vector4d::Zero());
  for (int k = 0; k < 100; ++k) EXPECT_LT(normalize_and_update(o, st, false).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Normalization, AlternatingStreamApproachesUnit) {
  RunningStats st;
  Eigen::Vector4d last;
  for (int k = 0; k < 20000; ++k) {
    const double x = (k % 2 == 0) ? -1.0 : 1.0;
    last = normalize_and_update(Eigen::Vector4d(x, 0, 0, 0), st, false);
  }
  EXPECT_NEAR(st.mean(0), 0.0, 1e-12);
  EXPECT_NEAR(st.variance()(0), 1.0, 1e-12);
  EXPECT_NEAR(last(0), 1.0, 1e-6);
}

TEST(Normalization, FrozenStatsAreUntouched) {
  RunningStats st;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int k = 0; k < 50; ++k) st.update(Eigen::Vector4d(g(rng), g(rng), g(rng), g(rng)));
  const RunningStats before = st;
  for (int k = 0; k < 50; ++k) normalize_and_update(Eigen::Vector4d(g(rng), g(rng), g(rng), g(rng)), st, true);
  EXPECT_EQ(st, before);
}

TEST(Normalization, ClipsAtTen) {
  RunningStats st;
  for (int k = 0; k < 100; ++k) st.update(Eigen::Vector4d(k % 2 ? 0.01 : -0.01, 0, 0, 0));
  EXPECT_EQ(normalize(Eigen::Vector4d(5.0, 0, 0, 0), st)(0), 10.0);
  EXPECT_EQ(normalize(Eigen::Vector4d(-5.0, 0, 0, 0), st)(0), -10.0);
}

TEST(Normalization, BatchMergeMatchesSequentialUpdates) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(3.0, 2.0);
  RunningStats seq, bat;
  for (int round = 0; round < 5; ++round) {
    Eigen::Matrix4Xd xs(4, 17);
    for (Eigen::Index i = 0; i < xs.size(); ++i) xs(i) = g(rng);
    for (int c = 0; c < xs.cols(); ++c) seq.update(xs.col(c));
    bat.update_batch(xs);
  }
  EXPECT_EQ(seq.count, bat.count);
  EXPECT_LT((seq.mean - bat.mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((seq.variance() - bat.variance()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Reset, NoiselessResetIsExactStart) {
  EnvConfig c = quiet_config();
  c.reset.start_state = Eigen::Vector4d(0.1, -0.2, 0.3, 0.4);
  PendulumEnv env(c, 9);
  const auto out = env.reset();
  EXPECT_EQ(out.raw_state.vector(), c.reset.start_state);
  EXPECT_EQ(out.reward, 0.0);
  EXPECT_FALSE(out.truncated);
  EXPECT_EQ(env.steps(), 0);
}

TEST(Reset, SameSeedSameState) {
  EnvConfig c;
  PendulumEnv a(c, 77), b(c, 77);
  EXPECT_EQ(a.reset().raw_state, b.reset().raw_state);
}

TEST(Reset, NoiseStdMatchesSpecification) {
  EnvConfig c;
  c.reset.noise_std = Eigen::Vector4d(0.01, 0.01, 0.0, 0.0);
  PendulumEnv env(c, 11);
  const int n = 10000;
  Eigen::Vector4d sum = Eigen::Vector4d::Zero(), sq = Eigen::Vector4d::Zero();
  for (int k = 0; k < n; ++k) {
    const Eigen::Vector4d x = env.reset().raw_state.vector();
    sum += x;
    sq += x.cwiseProduct(x);
  }
  const Eigen::Vector4d mean = sum / n;
  const Eigen::Vector4d sd = (sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
  EXPECT_NEAR(sd(0), 0.01, 0.001);
  EXPECT_NEAR(sd(1), 0.01, 0.001);
  EXPECT_EQ(sd(2), 0.0);
  EXPECT_EQ(sd(3), 0.0);
}

TEST(Step, TruncatesExactlyAtCap) {
  PendulumEnv env(quiet_config(), 1);
  env.reset();
  for (int k = 1; k < 1000; ++k) ASSERT_FALSE(env.step(0.0).truncated) << "step " << k;
  EXPECT_TRUE(env.step(0.0).truncated);
}

TEST(Step, ProbabilityOneTruncatesEveryStep) {
  EnvConfig c = quiet_config();
  c.reset.p_trunc = 1.0;
  PendulumEnv env(c, 1);
  env.reset();
  for (int k = 0; k < 10; ++k) EXPECT_TRUE(env.step(0.3).truncated);
}

TEST(Step, RandomTruncationCountIsPoisson) {
  EnvConfig c = quiet_config();
  c.reset.p_trunc = 1e-3;
  c.reset.episode_cap = 1 << 30;
  PendulumEnv env(c, 12345);
  env.reset();
  int count = 0;
  for (int k = 0; k < 1000000; ++k) {
    if (env.step(0.0).truncated) {
      ++count;
      env.reset();
    }
  }
  EXPECT_NEAR(count, 1000, 3 * std::sqrt(1000.0));
}

TEST(Step, AppliesActuationAndRewardOfPostStepState) {
  EnvConfig c = quiet_config();
  c.task = Actuation::Acrobot;
  PendulumEnv env(c, 1);
  env.reset();
  const auto out = env.step(2.0);  // clamped to 1
  EXPECT_EQ(out.applied_torque, c.model.torque_limit);
  const State expect = step_rk4(State{}, Vec2<double>(0.0, c.model.torque_limit), 0.01, c.model, 0.002);
  EXPECT_EQ(out.raw_state, expect);
  EXPECT_EQ(out.reward, reward(expect.vector(), c.model.torque_limit, c.reward));
  EXPECT_THROW(env.step(NAN), InvalidInput);
}

TEST(VectorEnv, SingleEnvMatchesManualStepAndReset) {
  EnvConfig c;
  c.reset.p_trunc = 0.05;
  VectorEnv vec(c, 1, 42);
  PendulumEnv solo(c, derive_seed(42, 0));
  vec.reset();
  solo.reset();
  for (int k = 0; k < 500; ++k) {
    const double a = std::sin(0.1 * k);
    const auto v = vec.step(std::span<const double>(&a, 1))[0];
    auto s = solo.step(a);
    EXPECT_EQ(v.truncated, s.truncated);
    EXPECT_EQ(v.reward, s.reward);
    if (s.truncated) {
      EXPECT_TRUE(v.has_terminal_observation);
      EXPECT_EQ(v.raw_state, solo.reset().raw_state);
    } else {
      EXPECT_EQ(v.raw_state, s.raw_state);
    }
  }
}

TEST(VectorEnv, TerminalObservationIsPreReset) {
  EnvConfig c = quiet_config();
  c.reset.p_trunc = 1.0;
  VectorEnv vec(c, 3, 1);
  vec.set_freeze(true);
  vec.reset();
  const std::vector<double> a{0.5, -0.5, 0.0};
  const auto outs = vec.step(a);
  for (int i = 0; i < 3; ++i) {
    ASSERT_TRUE(outs[i].truncated);
    ASSERT_TRUE(outs[i].has_terminal_observation);
    const State moved = step_rk4(State{}, apply_actuation(c.task, a[i] * 6.0, 6.0), 0.01, c.model, 0.002);
    EXPECT_EQ(outs[i].terminal_observation, normalize(scale_observation(moved), vec.stats()));
    EXPECT_EQ(outs[i].raw_state, State{});
  }
}

TEST(VectorEnv, LengthMismatchRejected) {
  VectorEnv vec(EnvConfig{}, 4, 0);
  vec.reset();
  const std::vector<double> a{0.0, 0.0};
  EXPECT_THROW(vec.step(a), InvalidInput);
}

TEST(VectorEnv, IdenticalEnvsUnderZeroActionStayIdentical) {
  VectorEnv vec(quiet_config(), 4, 3);
  vec.reset();
  const std::vector<double> a(4, 0.0);
  for (int k = 0; k < 100; ++k) {
    const auto outs = vec.step(a);
    for (int i = 1; i < 4; ++i) EXPECT_EQ(outs[i].raw_state, outs[0].raw_state);
  }
}

TEST(VectorEnv, TruncationTimesDecorrelated) {
  EnvConfig c = quiet_config();
  c.reset.p_trunc = 0.02;
  VectorEnv vec(c, 2, 8);
  vec.reset();
  const std::vector<double> a(2, 0.0);
  const int n = 50000;
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (int k = 0; k < n; ++k) {
    const auto outs = vec.step(a);
    const double x = outs[0].truncated, y = outs[1].truncated;
    sx += x;
    sy += y;
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
  }
  const double corr = (sxy / n - sx * sy / n / n) /
                      std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
  EXPECT_LT(std::abs(corr), 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(VectorEnv, StatsUseAllObservations) {
  VectorEnv vec(EnvConfig{}, 5, 2);
  vec.reset();
  EXPECT_EQ(vec.stats().count, 5.0);
  const std::vector<double> a(5, 0.1);
  vec.step(a);
  EXPECT_EQ(vec.stats().count, 10.0);
  vec.set_freeze(true);
  vec.step(a);
  EXPECT_EQ(vec.stats().count, 10.0);
}

TEST(Trajectory, CsvRoundTrip) {
  Trajectory t;
  t.task = Actuation::Acrobot;
  t.points = {{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, -0.6}, {0.01, 1.0 / 3, 2e-300, -1.5, 4.0, 6.0, -0.001}};
  std::stringstream ss;
  write_trajectory_csv(t, ss);
  EXPECT_EQ(ss.str().substr(0, 30), "t,q1,q2,qd1,qd2,torque,reward\n");
  const Trajectory back = read_trajectory_csv(ss, Actuation::Acrobot, 0.01);
  ASSERT_EQ(back.points.size(), 2u);
  EXPECT_EQ(back.points[1].q1, 1.0 / 3);
  EXPECT_EQ(back.points[1].q2, 2e-300);
  EXPECT_EQ(back.points[0].reward, -0.6);
}

TEST(EnvConfig, Validation) {
  EnvConfig c;
  EXPECT_NO_THROW(c.validate());
  c.sim_dt = 0.0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = EnvConfig{};
  c.reset.p_trunc = 1.5;
  EXPECT_THROW(c.validate(), InvalidInput);
}
