#include "areapo/learner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "areapo/errors.hpp"

namespace areapo {

void LearnerConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw InvalidInput(std::string("learner.") + name + " must be positive");
  };
  if (!(tau >= 0)) throw InvalidInput("learner.tau must be non-negative");
  if (!(lambda_reward >= 0 && lambda_reward <= 1)) throw InvalidInput("learner.lambda_reward must lie in [0, 1]");
  if (!(lambda_entropy >= 0 && lambda_entropy <= 1)) throw InvalidInput("learner.lambda_entropy must lie in [0, 1]");
  if (!(clip_epsilon > 0 && clip_epsilon < 1)) throw InvalidInput("learner.clip_epsilon must lie in (0, 1)");
  positive(gain_step, "gain_step");
  positive(learning_rate, "learning_rate");
  if (!(p_trunc >= 0 && p_trunc <= 1)) throw InvalidInput("learner.p_trunc must lie in [0, 1]");
  if (!(c2 >= 0)) throw InvalidInput("learner.c2 must be non-negative");
  positive(vf_coef, "vf_coef");
  positive(n_envs, "n_envs");
  positive(rollout_steps, "rollout_steps");
  positive(n_epochs, "n_epochs");
  positive(batch_size, "batch_size");
  positive(max_grad_norm, "max_grad_norm");
  positive(static_cast<double>(total_frames), "total_frames");
  positive(eval_interval, "eval_interval");
  if (!std::isfinite(log_std_init)) throw InvalidInput("learner.log_std_init must be finite");
  if (action_squash != "tanh" && action_squash != "clamp")
    throw InvalidInput("learner.action_squash must be tanh or clamp, got '" + action_squash + "'");
  if (frames_per_iteration() % batch_size != 0)
    throw InvalidInput("learner.batch_size must divide n_envs * rollout_steps");
  for (int h : policy_hidden) positive(h, "policy_hidden");
  for (int h : critic_hidden) positive(h, "critic_hidden");
}

void LearnerConfig::bind(FieldTable& t) {
  t.add("learner.tau", tau)
      .add("learner.lambda_reward", lambda_reward)
      .add("learner.lambda_entropy", lambda_entropy)
      .add("learner.clip_epsilon", clip_epsilon)
      .add("learner.gain_step", gain_step)
      .add("learner.learning_rate", learning_rate)
      .add("learner.p_trunc", p_trunc)
      .add("learner.c2", c2)
      .add("learner.vf_coef", vf_coef)
      .add("learner.n_envs", n_envs)
      .add("learner.rollout_steps", rollout_steps)
      .add("learner.n_epochs", n_epochs)
      .add("learner.batch_size", batch_size)
      .add("learner.adv_minibatch_norm", adv_minibatch_norm)
      .add("learner.max_grad_norm", max_grad_norm)
      .add("learner.log_std_init", log_std_init)
      .add("learner.action_squash", action_squash)
      .add("learner.total_frames", total_frames)
      .add("learner.eval_interval", eval_interval)
      .add("learner.policy_hidden", policy_hidden)
      .add("learner.critic_hidden", critic_hidden);
}

RolloutBatch RolloutBatch::empty(int n_envs, int n_steps) {
  if (n_envs < 1 || n_steps < 1) throw InvalidInput("rollout batch dimensions must be positive");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const int n = n_envs * n_steps;
  RolloutBatch b;
  b.n_envs = n_envs;
  b.n_steps = n_steps;
  b.observations = Eigen::Matrix4Xd::Zero(4, n);
  for (auto* row : {&b.actions, &b.pre_squash, &b.log_prob, &b.rewards, &b.entropy_rewards, &b.values,
                    &b.entropy_values})
    *row = Eigen::RowVectorXd::Zero(n);
  b.truncated.assign(static_cast<std::size_t>(n), 0);
  b.bootstrap_observations = Eigen::Matrix4Xd::Zero(4, n);
  b.bootstrap_values = Eigen::RowVectorXd::Constant(n, nan);
  b.bootstrap_entropy_values = Eigen::RowVectorXd::Constant(n, nan);
  b.last_values = Eigen::RowVectorXd::Zero(n_envs);
  b.last_entropy_values = Eigen::RowVectorXd::Zero(n_envs);
  return b;
}

RolloutBatch collect_rollouts(const nn::GaussianPolicy& policy, const nn::Critic& critic, VectorEnv& envs,
                              Eigen::Matrix4Xd& obs, int steps, double tau, std::mt19937_64& rng) {
  const int n = envs.size();
  if (obs.cols() != n) throw InvalidInput("collect_rollouts: observation count does not match env count");
  RolloutBatch b = RolloutBatch::empty(n, steps);
  std::vector<double> actions(static_cast<std::size_t>(n));
  for (int t = 0; t < steps; ++t) {
    const int base = t * n;
    b.observations.middleCols(base, n) = obs;
    const auto samples = nn::policy_sample_batch(policy, obs, rng);
    const Eigen::MatrixXd v = critic.values(obs);
    for (int e = 0; e < n; ++e) {
      const auto& s = samples[static_cast<std::size_t>(e)];
      actions[static_cast<std::size_t>(e)] = s.action;
      b.actions(base + e) = s.action;
      b.pre_squash(base + e) = s.pre_squash;
      b.log_prob(base + e) = s.log_prob;
      b.entropy_rewards(base + e) = -tau * s.log_prob;
      b.values(base + e) = v(0, e);
      b.entropy_values(base + e) = v(1, e);
    }
    std::vector<StepOutcome> outs;
    try {
      outs = envs.step(actions);
    } catch (const InvalidInput& err) {
      int bad = 0;
      while (bad < n && std::isfinite(actions[static_cast<std::size_t>(bad)])) ++bad;
      throw InvalidInput("rollout env " + std::to_string(bad < n ? bad : 0) + ", step " + std::to_string(t) + ": " +
                         err.what());
    }
    std::vector<int> truncated;
    for (int e = 0; e < n; ++e) {
      const auto& o = outs[static_cast<std::size_t>(e)];
      b.rewards(base + e) = o.reward;
      obs.col(e) = o.observation;
      if (o.truncated) {
        b.truncated[static_cast<std::size_t>(base + e)] = 1;
        b.bootstrap_observations.col(base + e) = o.terminal_observation;
        truncated.push_back(e);
      }
    }
    if (!truncated.empty()) {
      Eigen::MatrixXd term(4, static_cast<Eigen::Index>(truncated.size()));
      for (std::size_t k = 0; k < truncated.size(); ++k)
        term.col(static_cast<Eigen::Index>(k)) = b.bootstrap_observations.col(base + truncated[k]);
      const Eigen::MatrixXd tv = critic.values(term);
      for (std::size_t k = 0; k < truncated.size(); ++k) {
        b.bootstrap_values(base + truncated[k]) = tv(0, static_cast<Eigen::Index>(k));
        b.bootstrap_entropy_values(base + truncated[k]) = tv(1, static_cast<Eigen::Index>(k));
      }
    }
  }
  const Eigen::MatrixXd last = critic.values(obs);
  b.last_values = last.row(0);
  b.last_entropy_values = last.row(1);
  return b;
}

namespace {

Eigen::RowVectorXd gae_stream(const RolloutBatch& b, const Eigen::RowVectorXd& rewards, double gain,
                              const Eigen::RowVectorXd& values, const Eigen::RowVectorXd& bootstrap,
                              const Eigen::RowVectorXd& last, double lambda) {
  Eigen::RowVectorXd adv(b.size());
  for (int e = 0; e < b.n_envs; ++e) {
    double next_adv = 0.0;
    for (int t = b.n_steps - 1; t >= 0; --t) {
      const int j = b.index(t, e);
      double next_value;
      if (b.truncated[static_cast<std::size_t>(j)]) {
        next_value = bootstrap(j);
        if (!std::isfinite(next_value))
          throw InvalidInput("invalid batch: missing bootstrap value at env " + std::to_string(e) + ", step " +
                             std::to_string(t));
        next_adv = 0.0;
      } else if (t == b.n_steps - 1) {
        next_value = last(e);
        next_adv = 0.0;
      } else {
        next_value = values(b.index(t + 1, e));
      }
      const double delta = rewards(j) - gain + next_value - values(j);
      next_adv = delta + lambda * next_adv;
      adv(j) = next_adv;
    }
  }
  return adv;
}

}  // namespace

AdvantageSet dual_gae(const RolloutBatch& b, const GainEstimates& gains, const LearnerConfig& config) {
  const int n = b.size();
  if (n == 0 || b.rewards.size() != n || b.values.size() != n || b.entropy_values.size() != n ||
      b.entropy_rewards.size() != n || static_cast<int>(b.truncated.size()) != n || b.bootstrap_values.size() != n ||
      b.bootstrap_entropy_values.size() != n || b.last_values.size() != b.n_envs ||
      b.last_entropy_values.size() != b.n_envs)
    throw InvalidInput("invalid batch: inconsistent rollout dimensions");
  AdvantageSet a;
  a.reward = gae_stream(b, b.rewards, gains.rho, b.values, b.bootstrap_values, b.last_values, config.lambda_reward);
  a.entropy = gae_stream(b, b.entropy_rewards, gains.rho_entropy, b.entropy_values, b.bootstrap_entropy_values,
                         b.last_entropy_values, config.lambda_entropy);
  a.combined = a.reward + config.c2 * a.entropy;
  a.reward_targets = a.reward + b.values;
  a.entropy_targets = a.entropy + b.entropy_values;
  return a;
}

GainEstimates update_gains(const GainEstimates& gains, const AdvantageSet& adv, double eta) {
  GainEstimates g = gains;
  g.rho += eta * adv.reward.mean();
  g.rho_entropy += eta * adv.entropy.mean();
  return g;
}

Surrogate clipped_surrogate(const Eigen::RowVectorXd& ratio, const Eigen::RowVectorXd& advantage, double epsilon) {
  const Eigen::Index n = ratio.size();
  if (n == 0 || advantage.size() != n) throw InvalidInput("clipped_surrogate: size mismatch");
  Surrogate s;
  s.dloss_dlogp.resize(n);
  double sum = 0.0;
  int clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = ratio(i), a = advantage(i);
    const double rc = std::clamp(r, 1.0 - epsilon, 1.0 + epsilon);
    const double unclipped = r * a, clip_term = rc * a;
    // d(r)/d(log p) = r; the clipped branch is flat in the parameters.
    if (unclipped <= clip_term) {
      sum += unclipped;
      s.dloss_dlogp(i) = -a * r / static_cast<double>(n);
    } else {
      sum += clip_term;
      s.dloss_dlogp(i) = 0.0;
    }
    if (std::abs(r - 1.0) > epsilon) ++clipped;
  }
  s.loss = -sum / static_cast<double>(n);
  s.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
  return s;
}

Eigen::RowVectorXd normalize_advantages(const Eigen::RowVectorXd& adv) {
  const double mean = adv.mean();
  const double var = (adv.array() - mean).square().mean();
  return (adv.array() - mean) / std::max(std::sqrt(var), 1e-8);
}

Eigen::VectorXd joint_parameters(const nn::GaussianPolicy& policy, const nn::Critic& critic) {
  Eigen::VectorXd flat(policy.parameter_count() + critic.parameter_count());
  flat << policy.flatten(), critic.net.flatten();
  return flat;
}

void assign_joint_parameters(nn::GaussianPolicy& policy, nn::Critic& critic, const Eigen::VectorXd& flat) {
  const Eigen::Index np = policy.parameter_count();
  if (flat.size() != np + critic.parameter_count()) throw InvalidInput("joint parameter count mismatch");
  policy.assign(flat.head(np));
  critic.net.assign(flat.tail(critic.parameter_count()));
}

PpoDiagnostics ppo_update(const RolloutBatch& batch, const AdvantageSet& adv, nn::GaussianPolicy& policy,
                          nn::Critic& critic, nn::OptimizerState& opt, const LearnerConfig& config,
                          std::mt19937_64& rng) {
  const int n = batch.size();
  const int mb = std::min(config.batch_size, n);
  if (adv.combined.size() != n) throw InvalidInput("ppo_update: advantage and batch sizes differ");
  const Eigen::VectorXd snapshot = joint_parameters(policy, critic);
  const nn::OptimizerState opt_snapshot = opt;
  Eigen::VectorXd params = snapshot;
  const Eigen::Index np = policy.parameter_count();

  std::vector<int> order(static_cast<std::size_t>(n));
  PpoDiagnostics d;
  double ratio_sum = 0.0;
  long ratio_count = 0;
  for (int epoch = 0; epoch < config.n_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start + mb <= n; start += mb) {
      Eigen::MatrixXd obs(4, mb);
      Eigen::RowVectorXd pre(mb), old_lp(mb), a(mb), tr(mb), th(mb);
      for (int k = 0; k < mb; ++k) {
        const int j = order[static_cast<std::size_t>(start + k)];
        obs.col(k) = batch.observations.col(j);
        pre(k) = batch.pre_squash(j);
        old_lp(k) = batch.log_prob(j);
        a(k) = adv.combined(j);
        tr(k) = adv.reward_targets(j);
        th(k) = adv.entropy_targets(j);
      }
      if (config.adv_minibatch_norm) a = normalize_advantages(a);

      const nn::LogProbBatch lp = nn::log_prob_batch(policy, obs, pre);
      const Eigen::RowVectorXd ratio = (lp.log_prob - old_lp).array().exp();
      const Surrogate sur = clipped_surrogate(ratio, a, config.clip_epsilon);

      nn::Mlp<double>::Cache cache;
      const Eigen::MatrixXd v = critic.net.forward(obs, &cache);
      Eigen::MatrixXd err(2, mb);
      err.row(0) = v.row(0) - tr;
      err.row(1) = v.row(1) - th;
      const double value_loss = config.vf_coef * err.array().square().colwise().sum().mean();

      if (!std::isfinite(sur.loss) || !std::isfinite(value_loss)) {
        assign_joint_parameters(policy, critic, snapshot);
        opt = opt_snapshot;
        std::ostringstream msg;
        msg << "non-finite loss in ppo_update (epoch " << epoch << ", minibatch " << start / mb
            << "): policy_loss=" << sur.loss << " value_loss=" << value_loss << " ratio_max=" << ratio.maxCoeff();
        throw NumericalError(msg.str());
      }

      Eigen::VectorXd grad(params.size());
      grad.head(np) = nn::log_prob_gradient(policy, lp, pre, sur.dloss_dlogp);
      const Eigen::MatrixXd dy = (2.0 * config.vf_coef / mb) * err;
      grad.tail(params.size() - np) = nn::Mlp<double>::flatten(critic.net.backward(cache, dy));

      nn::OptimizerReport rep;
      try {
        rep = nn::optimizer_step(opt, params, grad, config.max_grad_norm);
      } catch (const NumericalError&) {
        assign_joint_parameters(policy, critic, snapshot);
        opt = opt_snapshot;
        throw;
      }
      assign_joint_parameters(policy, critic, params);

      d.policy_loss += sur.loss;
      d.value_loss += value_loss;
      d.clip_fraction += sur.clip_fraction;
      d.grad_norm += rep.grad_norm;
      d.ratio_max = std::max(d.ratio_max, ratio.maxCoeff());
      ratio_sum += ratio.sum();
      ratio_count += mb;
      ++d.updates;
    }
  }
  if (d.updates > 0) {
    d.policy_loss /= d.updates;
    d.value_loss /= d.updates;
    d.clip_fraction /= d.updates;
    d.grad_norm /= d.updates;
    d.ratio_mean = ratio_sum / static_cast<double>(ratio_count);
  }
  return d;
}

namespace {

Checkpoint make_checkpoint(const TrainOptions& o, int iteration, std::int64_t frames,
                           const nn::GaussianPolicy& policy, const nn::Critic& critic,
                           const nn::OptimizerState& opt, const RunningStats& stats, const GainEstimates& gains) {
  Checkpoint c;
  c.task = o.env.task;
  c.iteration = iteration;
  c.frames = frames;
  c.policy = policy;
  c.critic = critic;
  c.optimizer = opt;
  c.obs_stats = stats;
  c.gains = gains;
  return c;
}

std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : std::string("nan"); }

}  // namespace

TrainResult train(const TrainOptions& o) {
  namespace fs = std::filesystem;
  o.learner.validate();
  EnvConfig env = o.env;
  env.reset.p_trunc = o.learner.p_trunc;
  env.validate();
  o.eval.normalizers.validate();

  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  const fs::path dir(o.out_dir);
  std::ofstream log(dir / "training_log.csv", std::ios::trunc);
  if (!log) throw InvalidInput("cannot write training log in '" + o.out_dir + "'");
  log << kTrainingLogHeader << '\n';

  std::mt19937_64 init_rng(derive_seed(o.seed, 0));
  std::mt19937_64 sample_rng(derive_seed(o.seed, 1));
  std::mt19937_64 shuffle_rng(derive_seed(o.seed, 2));
  constexpr int kObsDim = 4;
  nn::GaussianPolicy policy = nn::GaussianPolicy::create(kObsDim, o.learner.policy_hidden, o.learner.log_std_init,
                                                         init_rng, o.learner.squash_mode());
  nn::Critic critic = nn::Critic::create(kObsDim, o.learner.critic_hidden, init_rng);
  nn::AdamConfig adam;
  adam.learning_rate = o.learner.learning_rate;
  nn::OptimizerState opt = nn::OptimizerState::zeros(policy.parameter_count() + critic.parameter_count(), adam);
  GainEstimates gains;

  VectorEnv envs(env, o.learner.n_envs, derive_seed(o.seed, 3));
  Eigen::Matrix4Xd obs(4, o.learner.n_envs);
  {
    const auto outs = envs.reset();
    for (int e = 0; e < o.learner.n_envs; ++e) obs.col(e) = outs[static_cast<std::size_t>(e)].observation;
  }

  const std::int64_t per_iter = o.learner.frames_per_iteration();
  const int iterations = static_cast<int>((o.learner.total_frames + per_iter - 1) / per_iter);
  TrainResult result;
  result.best_checkpoint = (dir / "best.ckpt").string();
  result.final_checkpoint = (dir / "final.ckpt").string();
  double best_return = -std::numeric_limits<double>::infinity();
  std::int64_t frames = 0;
  int iter = 0;
  try {
    for (iter = 0; iter < iterations; ++iter) {
      const RolloutBatch batch =
          collect_rollouts(policy, critic, envs, obs, o.learner.rollout_steps, o.learner.tau, sample_rng);
      frames += per_iter;
      const AdvantageSet adv = dual_gae(batch, gains, o.learner);
      gains = update_gains(gains, adv, o.learner.gain_step);
      const PpoDiagnostics diag = ppo_update(batch, adv, policy, critic, opt, o.learner, shuffle_rng);

      double score = std::numeric_limits<double>::quiet_NaN();
      if ((iter + 1) % o.learner.eval_interval == 0 || iter + 1 == iterations) {
        const Trajectory traj = run_episode(policy, envs.stats(), env, NoiseSpec{}, o.eval);
        const CriteriaReport crit = compute_criteria(traj, o.eval);
        double ret = 0.0;
        for (const auto& p : traj.points) ret += p.reward;
        score = crit.score;
        if (result.best_iteration < 0 || score > result.best_score ||
            (score == result.best_score && ret > best_return)) {
          result.best_score = score;
          result.best_iteration = iter;
          result.best_criteria = crit;
          best_return = ret;
          save_checkpoint(make_checkpoint(o, iter, frames, policy, critic, opt, envs.stats(), gains),
                          result.best_checkpoint);
        }
        if (o.progress)
          *o.progress << "iter " << iter + 1 << "/" << iterations << " frames " << frames << " rho " << gains.rho
                      << " success " << crit.success << " swingup " << crit.swingup_time << " score " << score
                      << " return " << ret << std::endl;
      }
      log << iter << ',' << frames << ',' << fmt(gains.rho) << ',' << fmt(gains.rho_entropy) << ','
          << fmt(diag.policy_loss) << ',' << fmt(diag.value_loss) << ',' << fmt(diag.clip_fraction) << ','
          << fmt(policy.log_std) << ',' << fmt(score) << '\n';
      log.flush();
    }
  } catch (...) {
    try {
      save_checkpoint(make_checkpoint(o, iter, frames, policy, critic, opt, envs.stats(), gains),
                      (dir / "last_good.ckpt").string());
    } catch (...) {
    }
    throw;
  }
  save_checkpoint(make_checkpoint(o, iterations - 1, frames, policy, critic, opt, envs.stats(), gains),
                  result.final_checkpoint);
  result.iterations = iterations;
  result.frames = frames;
  return result;
}

}  // namespace areapo
