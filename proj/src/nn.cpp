#include "areapo/nn.hpp"

#include <algorithm>

namespace areapo::nn {

GaussianPolicy GaussianPolicy::create(int obs_dim, const std::vector<int>& hidden, double log_std_init,
                                      std::mt19937_64& rng, Squash squash) {
  std::vector<int> sizes{obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  GaussianPolicy p{Mlp<double>(sizes), log_std_init, squash};
  p.mean_net.init_orthogonal(rng, std::sqrt(2.0), 0.01);
  return p;
}

Eigen::VectorXd GaussianPolicy::flatten() const {
  Eigen::VectorXd out(parameter_count());
  out.head(mean_net.parameter_count()) = mean_net.flatten();
  out(out.size() - 1) = log_std;
  return out;
}

void GaussianPolicy::assign(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != parameter_count()) throw InvalidInput("GaussianPolicy::assign: parameter count mismatch");
  mean_net.assign(flat.head(mean_net.parameter_count()));
  log_std = flat(flat.size() - 1);
}

double policy_mean(const GaussianPolicy& policy, const Eigen::VectorXd& obs) {
  return policy.mean_net.forward(obs)(0, 0);
}

double policy_action(const GaussianPolicy& policy, const Eigen::VectorXd& obs) {
  return policy.squash_action(policy_mean(policy, obs));
}

PolicySample policy_sample(const GaussianPolicy& policy, const Eigen::VectorXd& obs, std::mt19937_64& rng) {
  return policy_sample_batch(policy, obs, rng).front();
}

std::vector<PolicySample> policy_sample_batch(const GaussianPolicy& policy, const Eigen::MatrixXd& obs,
                                              std::mt19937_64& rng) {
  if (!obs.allFinite()) throw InvalidInput("policy_sample: non-finite observation");
  const Eigen::MatrixXd mean = policy.mean_net.forward(obs);
  const double std = std::exp(policy.log_std);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<PolicySample> out(static_cast<std::size_t>(obs.cols()));
  for (Eigen::Index i = 0; i < obs.cols(); ++i) {
    const double u = mean(0, i) + std * gauss(rng);
    double lp = gaussian_log_density(u, mean(0, i), policy.log_std);
    if (policy.squash == Squash::Tanh) lp += tanh_log_jacobian(u);
    out[i] = {policy.squash_action(u), u, lp};
  }
  return out;
}

double log_prob(const GaussianPolicy& policy, const Eigen::VectorXd& obs, double pre_squash) {
  const double lp = gaussian_log_density(pre_squash, policy_mean(policy, obs), policy.log_std);
  return policy.squash == Squash::Tanh ? lp + tanh_log_jacobian(pre_squash) : lp;
}

LogProbBatch log_prob_batch(const GaussianPolicy& policy, const Eigen::MatrixXd& obs,
                            const Eigen::RowVectorXd& pre_squash) {
  if (pre_squash.size() != obs.cols()) throw InvalidInput("log_prob_batch: size mismatch");
  LogProbBatch out;
  out.mean = policy.mean_net.forward(obs, &out.cache).row(0);
  const double inv_std = std::exp(-policy.log_std);
  const Eigen::ArrayXXd z = (pre_squash - out.mean).array() * inv_std;
  out.log_prob = (-0.5 * z.square() - policy.log_std - kLogSqrt2Pi).matrix();
  if (policy.squash == Squash::Tanh)
    for (Eigen::Index i = 0; i < out.log_prob.size(); ++i) out.log_prob(i) += tanh_log_jacobian(pre_squash(i));
  return out;
}

Eigen::VectorXd log_prob_gradient(const GaussianPolicy& policy, const LogProbBatch& batch,
                                  const Eigen::RowVectorXd& pre_squash, const Eigen::RowVectorXd& weights) {
  // d log N / d mean = (u - mean) / var;  d log N / d log_std = z^2 - 1.
  const double inv_var = std::exp(-2.0 * policy.log_std);
  const Eigen::RowVectorXd diff = pre_squash - batch.mean;
  const Eigen::MatrixXd d_mean = (weights.array() * diff.array() * inv_var).matrix();
  const auto g = policy.mean_net.backward(batch.cache, d_mean);
  Eigen::VectorXd out(policy.parameter_count());
  out.head(policy.mean_net.parameter_count()) = Mlp<double>::flatten(g);
  out(out.size() - 1) = (weights.array() * (diff.array().square() * inv_var - 1.0)).sum();
  return out;
}

Critic Critic::create(int obs_dim, const std::vector<int>& hidden, std::mt19937_64& rng) {
  std::vector<int> sizes{obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(2);
  Critic c{Mlp<double>(sizes)};
  c.net.init_orthogonal(rng, std::sqrt(2.0), 1.0);
  return c;
}

OptimizerState OptimizerState::zeros(Eigen::Index n, AdamConfig config) {
  return {config, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
}

OptimizerReport optimizer_step(OptimizerState& opt, Eigen::VectorXd& params, const Eigen::VectorXd& gradients,
                               double max_grad_norm) {
  if (gradients.size() != params.size() || opt.m.size() != params.size())
    throw InvalidInput("optimizer_step: size mismatch");
  if (!gradients.allFinite()) throw NumericalError("optimizer_step: non-finite gradient, update aborted");
  OptimizerReport report;
  report.grad_norm = gradients.norm();
  if (max_grad_norm > 0 && report.grad_norm > max_grad_norm) report.clip_scale = max_grad_norm / report.grad_norm;
  const auto& c = opt.config;
  opt.step += 1;
  opt.m = c.beta1 * opt.m + ((1.0 - c.beta1) * report.clip_scale) * gradients;
  opt.v = c.beta2 * opt.v + ((1.0 - c.beta2) * report.clip_scale * report.clip_scale) * gradients.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  params.array() -= c.learning_rate * (opt.m.array() / bc1) / ((opt.v.array() / bc2).sqrt() + c.epsilon);
  return report;
}

}  // namespace areapo::nn
