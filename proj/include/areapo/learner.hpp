#pragma once

// Average-reward entropy-advantage PPO: rollout collection, dual GAE over
// the reward and entropy streams, incremental gain tracking and the clipped
// surrogate update of a shared policy/critic parameter vector.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "areapo/checkpoint.hpp"
#include "areapo/config.hpp"
#include "areapo/environment.hpp"
#include "areapo/evaluation.hpp"
#include "areapo/nn.hpp"

namespace areapo {

struct LearnerConfig {
  double tau = 2.0;
  double lambda_reward = 0.8;
  double lambda_entropy = 0.6;
  double clip_epsilon = 0.05;
  double gain_step = 0.01;
  double learning_rate = 5e-4;
  double p_trunc = 1e-3;
  double c2 = 0.5;
  double vf_coef = 0.25;
  int n_envs = 64;
  int rollout_steps = 128;
  int n_epochs = 6;
  int batch_size = 1024;
  bool adv_minibatch_norm = true;
  double max_grad_norm = 10.0;
  double log_std_init = -1.0;
  std::string action_squash = "tanh";  // tanh | clamp
  std::int64_t total_frames = 30'000'000;
  int eval_interval = 100;  // iterations
  std::vector<int> policy_hidden{256, 256};
  std::vector<int> critic_hidden{512, 512};

  void validate() const;
  void bind(FieldTable& table);
  int frames_per_iteration() const { return n_envs * rollout_steps; }
  nn::Squash squash_mode() const { return action_squash == "clamp" ? nn::Squash::Clamp : nn::Squash::Tanh; }
};

/// Column j = t * n_envs + e holds step t of environment e.
struct RolloutBatch {
  int n_envs = 0;
  int n_steps = 0;
  Eigen::Matrix4Xd observations;
  Eigen::RowVectorXd actions;    // clamped
  Eigen::RowVectorXd pre_squash;  // Gaussian draw
  Eigen::RowVectorXd log_prob;
  Eigen::RowVectorXd rewards;
  Eigen::RowVectorXd entropy_rewards;  // -tau * log_prob
  Eigen::RowVectorXd values;
  Eigen::RowVectorXd entropy_values;
  std::vector<std::uint8_t> truncated;
  Eigen::Matrix4Xd bootstrap_observations;  // zero where not truncated
  Eigen::RowVectorXd bootstrap_values;      // NaN where not truncated
  Eigen::RowVectorXd bootstrap_entropy_values;
  Eigen::RowVectorXd last_values;  // per env, value of the observation after the final step
  Eigen::RowVectorXd last_entropy_values;

  int size() const { return n_envs * n_steps; }
  int index(int step, int env) const { return step * n_envs + env; }
  /// Zero-filled batch with NaN bootstrap values.
  static RolloutBatch empty(int n_envs, int n_steps);
};

struct AdvantageSet {
  Eigen::RowVectorXd reward;    // A
  Eigen::RowVectorXd entropy;   // A_H
  Eigen::RowVectorXd combined;  // A + c2 A_H
  Eigen::RowVectorXd reward_targets;
  Eigen::RowVectorXd entropy_targets;
};

/// Steps every environment `steps` times with the sampling policy. `obs` holds the
/// current normalized observation of each env (one per column) and is advanced.
RolloutBatch collect_rollouts(const nn::GaussianPolicy& policy, const nn::Critic& critic, VectorEnv& envs,
                              Eigen::Matrix4Xd& obs, int steps, double tau, std::mt19937_64& rng);

/// Undiscounted GAE per stream; recursions restart at truncations, bootstrapping from the critic.
AdvantageSet dual_gae(const RolloutBatch& batch, const GainEstimates& gains, const LearnerConfig& config);

/// rho += eta mean(A), rho_H += eta mean(A_H) over the whole batch.
GainEstimates update_gains(const GainEstimates& gains, const AdvantageSet& adv, double eta);

/// Clipped surrogate -mean(min(r A, clip(r, 1-eps, 1+eps) A)) and its derivative with
/// respect to each log-probability.
struct Surrogate {
  double loss = 0.0;
  Eigen::RowVectorXd dloss_dlogp;
  double clip_fraction = 0.0;
};
Surrogate clipped_surrogate(const Eigen::RowVectorXd& ratio, const Eigen::RowVectorXd& advantage, double epsilon);

/// Mean 0, population std 1 (std floored at 1e-8).
Eigen::RowVectorXd normalize_advantages(const Eigen::RowVectorXd& adv);

struct PpoDiagnostics {
  double policy_loss = 0.0;  // averaged over minibatches
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double ratio_mean = 0.0;
  double ratio_max = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm
  int updates = 0;
};

/// Epochs of shuffled minibatch updates. On a non-finite loss every parameter and the
/// optimizer state are restored and NumericalError is thrown.
PpoDiagnostics ppo_update(const RolloutBatch& batch, const AdvantageSet& adv, nn::GaussianPolicy& policy,
                          nn::Critic& critic, nn::OptimizerState& opt, const LearnerConfig& config,
                          std::mt19937_64& rng);

Eigen::VectorXd joint_parameters(const nn::GaussianPolicy& policy, const nn::Critic& critic);
void assign_joint_parameters(nn::GaussianPolicy& policy, nn::Critic& critic, const Eigen::VectorXd& flat);

struct TrainOptions {
  LearnerConfig learner;
  EnvConfig env;
  EvalConfig eval;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::ostream* progress = nullptr;
};

struct TrainResult {
  int iterations = 0;
  std::int64_t frames = 0;
  double best_score = 0.0;
  int best_iteration = -1;
  CriteriaReport best_criteria;
  std::string best_checkpoint;
  std::string final_checkpoint;
};

inline constexpr const char* kTrainingLogHeader =
    "iter,frames,rho_hat,rho_H_hat,policy_loss,value_loss,clip_frac,log_std,eval_score";

/// Writes training_log.csv, best.ckpt and final.ckpt into out_dir. On failure the last
/// consistent state is written to last_good.ckpt before rethrowing.
TrainResult train(const TrainOptions& options);

}  // namespace areapo
