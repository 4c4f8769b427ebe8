#include "areapo/environment.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "areapo/errors.hpp"

namespace areapo {

double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * M_PI);
  if (r <= -M_PI) r += 2.0 * M_PI;
  return r;
}

void RewardSpec::validate() const {
  if ((q_diag.array() < 0).any()) throw InvalidInput("reward Q diagonal must be non-negative");
  if (r_weight < 0) throw InvalidInput("reward R must be non-negative");
  if (!(alpha > 0)) throw InvalidInput("reward alpha must be positive");
  if (!goal.allFinite()) throw InvalidInput("reward goal must be finite");
}

void ResetSpec::validate() const {
  if ((noise_std.array() < 0).any()) throw InvalidInput("reset noise_std must be non-negative");
  // p_trunc = 1 is accepted as the degenerate "truncate every step" setting.
  if (!(p_trunc >= 0 && p_trunc <= 1)) throw InvalidInput("p_trunc must lie in [0, 1]");
  if (episode_cap < 1) throw InvalidInput("episode_cap must be at least 1");
}

void RunningStats::update(const Eigen::Vector4d& x) {
  count += 1.0;
  const Eigen::Vector4d delta = x - mean;
  mean += delta / count;
  m2 += delta.cwiseProduct(x - mean);
}

void RunningStats::update_batch(const Eigen::Matrix4Xd& xs) {
  const double n = static_cast<double>(xs.cols());
  if (n == 0) return;
  const Eigen::Vector4d batch_mean = xs.rowwise().mean();
  const Eigen::Vector4d batch_m2 = (xs.colwise() - batch_mean).rowwise().squaredNorm();
  const double total = count + n;
  const Eigen::Vector4d delta = batch_mean - mean;
  mean += delta * (n / total);
  m2 += batch_m2 + delta.cwiseProduct(delta) * (count * n / total);
  count = total;
}

Eigen::Vector4d RunningStats::variance() const {
  if (count <= 0) return Eigen::Vector4d::Zero();
  return (m2 / count).cwiseMax(0.0);
}

double reward(const Eigen::Vector4d& state, double action, const RewardSpec& spec) {
  Eigen::Vector4d d = state - spec.goal;
  d(0) = wrap_angle(d(0));
  d(1) = wrap_angle(d(1));
  const double cost = d.cwiseProduct(d).dot(spec.q_diag) + action * spec.r_weight * action;
  return -spec.alpha * cost;
}

Eigen::Vector4d scale_observation(const State& s, double v_max) {
  return {wrap_angle(s.q1) / M_PI, wrap_angle(s.q2) / M_PI, s.qd1 / v_max, s.qd2 / v_max};
}

Eigen::Vector4d normalize(const Eigen::Vector4d& obs, const RunningStats& stats, double clip) {
  return ((obs - stats.mean).array() / stats.stddev().array()).cwiseMax(-clip).cwiseMin(clip);
}

Eigen::Vector4d normalize_and_update(const Eigen::Vector4d& obs, RunningStats& stats, bool freeze,
                                     double clip) {
  if (!freeze) stats.update(obs);
  return normalize(obs, stats, clip);
}

void EnvConfig::validate() const {
  model.validate();
  reward.validate();
  reset.validate();
  if (!(control_dt > 0) || !(sim_dt > 0) || sim_dt > control_dt)
    throw InvalidInput("require 0 < sim_dt <= control_dt");
  if (!(v_max > 0)) throw InvalidInput("v_max must be positive");
  if (!(obs_clip > 0)) throw InvalidInput("obs_clip must be positive");
}

void EnvConfig::bind(FieldTable& t) {
  t.add("env.task", task);
  bind_model_params(t, model, "model.");
  t.add("env.reward_q_diag", reward.q_diag)
      .add("env.reward_r", reward.r_weight)
      .add("env.reward_alpha", reward.alpha)
      .add("env.reward_goal", reward.goal)
      .add("env.start_state", reset.start_state)
      .add("env.reset_noise_std", reset.noise_std)
      .add("env.episode_cap", reset.episode_cap)
      .add("env.control_dt", control_dt)
      .add("env.sim_dt", sim_dt)
      .add("env.v_max", v_max)
      .add("env.obs_clip", obs_clip);
}

PendulumEnv::PendulumEnv(EnvConfig config, std::uint64_t seed) : config_(std::move(config)), rng_(seed) {
  config_.validate();
}

StepOutcome PendulumEnv::outcome(double r, bool truncated, double torque) const {
  StepOutcome out;
  out.scaled_observation = scale_observation(state_, config_.v_max);
  out.observation = out.scaled_observation;
  out.reward = r;
  out.truncated = truncated;
  out.raw_state = state_;
  out.applied_torque = torque;
  return out;
}

StepOutcome PendulumEnv::reset() {
  Eigen::Vector4d x = config_.reset.start_state;
  for (int i = 0; i < 4; ++i) {
    if (config_.reset.noise_std(i) > 0) {
      std::normal_distribution<double> noise(0.0, config_.reset.noise_std(i));
      x(i) += noise(rng_);
    }
  }
  state_ = State::from_vector(x, 0.0);
  steps_ = 0;
  return outcome(0.0, false, 0.0);
}

StepOutcome PendulumEnv::step(double action) {
  if (!std::isfinite(action)) throw InvalidInput("step: non-finite action");
  const double a = std::clamp(action, -1.0, 1.0);
  const double limit = config_.model.torque_limit;
  const Vec2<double> tau = apply_actuation(config_.task, a * limit, limit);
  state_ = step_rk4(state_, tau, config_.control_dt, config_.model, config_.sim_dt);
  const double torque = tau(active_joint(config_.task));
  const double r = reward(state_.vector(), torque, config_.reward);
  ++steps_;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  const bool truncated = steps_ >= config_.reset.episode_cap || u < config_.reset.p_trunc;
  return outcome(r, truncated, torque);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer over (base, index).
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

VectorEnv::VectorEnv(const EnvConfig& config, int n_envs, std::uint64_t seed) : obs_clip_(config.obs_clip) {
  if (n_envs < 1) throw InvalidInput("VectorEnv needs at least one environment");
  envs_.reserve(n_envs);
  for (int i = 0; i < n_envs; ++i) envs_.emplace_back(config, derive_seed(seed, static_cast<std::uint64_t>(i)));
}

void VectorEnv::normalize_all(std::vector<StepOutcome>& outs) {
  if (!freeze_) {
    Eigen::Matrix4Xd batch(4, static_cast<Eigen::Index>(outs.size()));
    for (std::size_t i = 0; i < outs.size(); ++i) batch.col(static_cast<Eigen::Index>(i)) = outs[i].scaled_observation;
    stats_.update_batch(batch);
  }
  for (auto& o : outs) {
    o.observation = normalize(o.scaled_observation, stats_, obs_clip_);
    if (o.has_terminal_observation) o.terminal_observation = normalize(o.terminal_observation, stats_, obs_clip_);
  }
}

std::vector<StepOutcome> VectorEnv::reset() {
  std::vector<StepOutcome> outs;
  outs.reserve(envs_.size());
  for (auto& e : envs_) outs.push_back(e.reset());
  normalize_all(outs);
  return outs;
}

std::vector<StepOutcome> VectorEnv::step(std::span<const double> actions) {
  if (actions.size() != envs_.size())
    throw InvalidInput("vector_env_step: got " + std::to_string(actions.size()) + " actions for " +
                       std::to_string(envs_.size()) + " environments");
  std::vector<StepOutcome> outs;
  outs.reserve(envs_.size());
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    StepOutcome o = envs_[i].step(actions[i]);
    if (o.truncated) {
      // Keep the step's reward/torque/flag; swap in the fresh reset observation.
      StepOutcome fresh = envs_[i].reset();
      o.terminal_observation = o.scaled_observation;
      o.has_terminal_observation = true;
      o.scaled_observation = fresh.scaled_observation;
      o.raw_state = fresh.raw_state;
    }
    outs.push_back(o);
  }
  normalize_all(outs);
  return outs;
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  out << "t,q1,q2,qd1,qd2,torque,reward\n";
  for (const auto& p : traj.points) {
    out << format_double(p.t) << ',' << format_double(p.q1) << ',' << format_double(p.q2) << ','
        << format_double(p.qd1) << ',' << format_double(p.qd2) << ',' << format_double(p.torque) << ','
        << format_double(p.reward) << '\n';
  }
}

Trajectory read_trajectory_csv(std::istream& in, Actuation task, double dt) {
  Trajectory traj;
  traj.task = task;
  traj.dt = dt;
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,q1,q2,qd1,qd2,torque,reward", 0) != 0)
    throw InvalidInput("trajectory CSV: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    double v[7];
    for (double& x : v) {
      if (!std::getline(row, cell, ',')) throw InvalidInput("trajectory CSV: short row '" + line + "'");
      x = parse_double(cell);
    }
    traj.points.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6]});
  }
  return traj;
}

}  // namespace areapo
