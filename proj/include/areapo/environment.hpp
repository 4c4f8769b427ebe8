#pragma once

// Continuing-task wrapper around the pendulum plant: observation scaling,
// running observation normalization, quadratic reward, noisy resets and
// random truncation, single and vectorized.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "areapo/config.hpp"
#include "areapo/dynamics.hpp"

namespace areapo {

using State = PendulumState<double>;
using Model = ModelParams<double>;

/// Maps an angle to (-pi, pi].
double wrap_angle(double a);

struct RewardSpec {
  Eigen::Vector4d q_diag{50.0, 50.0, 4.0, 2.0};
  double r_weight = 1.0;
  double alpha = 0.001;
  Eigen::Vector4d goal{M_PI, 0.0, 0.0, 0.0};

  void validate() const;
};

struct ResetSpec {
  Eigen::Vector4d start_state = Eigen::Vector4d::Zero();
  Eigen::Vector4d noise_std{0.01, 0.01, 0.05, 0.05};
  int episode_cap = 1000;
  double p_trunc = 1e-3;

  void validate() const;
};

/// Streaming per-component mean/variance (Chan et al. parallel update).
struct RunningStats {
  double count = 0.0;
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Vector4d m2 = Eigen::Vector4d::Zero();

  void update(const Eigen::Vector4d& x);
  /// Merges a batch of observations (one per column) in a single step.
  void update_batch(const Eigen::Matrix4Xd& xs);
  Eigen::Vector4d variance() const;
  Eigen::Vector4d stddev() const { return (variance().array() + 1e-8).sqrt(); }

  friend bool operator==(const RunningStats&, const RunningStats&) = default;
};

/// Reward  -alpha [ (s-g)^T Q (s-g) + a R a ]  with wrapped angle differences.
double reward(const Eigen::Vector4d& state, double action, const RewardSpec& spec);

/// [wrap(q1)/pi, wrap(q2)/pi, qd1/v_max, qd2/v_max].
Eigen::Vector4d scale_observation(const State& state, double v_max = 20.0);

/// (obs - mean) / std clipped to [-clip, clip]; updates `stats` first unless frozen.
Eigen::Vector4d normalize_and_update(const Eigen::Vector4d& obs, RunningStats& stats, bool freeze,
                                     double clip = 10.0);
Eigen::Vector4d normalize(const Eigen::Vector4d& obs, const RunningStats& stats, double clip = 10.0);

struct EnvConfig {
  Actuation task = Actuation::Pendubot;
  Model model;
  RewardSpec reward;
  ResetSpec reset;
  double control_dt = 0.01;
  double sim_dt = 0.002;
  double v_max = 20.0;
  double obs_clip = 10.0;

  void validate() const;
  void bind(FieldTable& table);
};

struct StepOutcome {
  /// Scaled and (when a normalizer is involved) normalized observation.
  Eigen::Vector4d observation = Eigen::Vector4d::Zero();
  /// Scaled observation before normalization.
  Eigen::Vector4d scaled_observation = Eigen::Vector4d::Zero();
  double reward = 0.0;
  bool truncated = false;
  State raw_state;
  double applied_torque = 0.0;
  /// Pre-reset observation of a truncated step (vectorized auto-reset only).
  Eigen::Vector4d terminal_observation = Eigen::Vector4d::Zero();
  bool has_terminal_observation = false;
};

class PendulumEnv {
 public:
  PendulumEnv(EnvConfig config, std::uint64_t seed);

  StepOutcome reset();
  /// Action in [-1, 1] (clamped), scaled by the torque limit.
  StepOutcome step(double action);

  const State& state() const { return state_; }
  int steps() const { return steps_; }
  const EnvConfig& config() const { return config_; }

 private:
  StepOutcome outcome(double reward, bool truncated, double torque) const;

  EnvConfig config_;
  std::mt19937_64 rng_;
  State state_;
  int steps_ = 0;
};

/// N environments with a shared observation normalizer and auto-reset.
class VectorEnv {
 public:
  VectorEnv(const EnvConfig& config, int n_envs, std::uint64_t seed);

  std::vector<StepOutcome> reset();
  std::vector<StepOutcome> step(std::span<const double> actions);

  int size() const { return static_cast<int>(envs_.size()); }
  const PendulumEnv& env(int i) const { return envs_.at(i); }
  RunningStats& stats() { return stats_; }
  const RunningStats& stats() const { return stats_; }
  void set_freeze(bool freeze) { freeze_ = freeze; }

 private:
  void normalize_all(std::vector<StepOutcome>& outs);

  std::vector<PendulumEnv> envs_;
  RunningStats stats_;
  bool freeze_ = false;
  double obs_clip_;
};

/// Per-env seed derived from a base seed; independent streams for distinct indices.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

struct TrajectoryPoint {
  double t = 0, q1 = 0, q2 = 0, qd1 = 0, qd2 = 0, torque = 0, reward = 0;
};

struct Trajectory {
  Actuation task = Actuation::Pendubot;
  double dt = 0.01;
  std::vector<TrajectoryPoint> points;
};

/// CSV with header `t,q1,q2,qd1,qd2,torque,reward`.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);
Trajectory read_trajectory_csv(std::istream& in, Actuation task, double dt);

}  // namespace areapo
