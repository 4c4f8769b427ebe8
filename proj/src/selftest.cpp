#include "areapo/selftest.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include "areapo/environment.hpp"
#include "areapo/errors.hpp"
#include "areapo/nn.hpp"
#include "areapo/tabular.hpp"

namespace areapo {
namespace {

std::string sci(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

SelftestCheck check(std::string group, std::string name, bool pass, std::string detail) {
  return {std::move(group), std::move(name), pass, std::move(detail)};
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// 2-state deterministic cycle with rewards 0 and 1: gain 1/2, bias (0, 1/2).
tabular::Fixture builtin_cycle() {
  tabular::Fixture f;
  f.name = "builtin:two_state_cycle";
  f.mdp.n_states = 2;
  f.mdp.n_actions = 1;
  f.mdp.transition = {(Eigen::MatrixXd(2, 2) << 0, 1, 1, 0).finished()};
  f.mdp.reward = (Eigen::MatrixXd(2, 1) << 0, 1).finished();
  f.policy = tabular::TabularPolicy::uniform(2, 1);
  f.tau = 1.0;
  f.expected_gain = 0.5;
  f.expected_entropy_gain = 0.0;
  f.expected_bias = Eigen::Vector2d(0.0, 0.5);
  return f;
}

void check_fixture(const tabular::Fixture& f, std::vector<SelftestCheck>& out) {
  const std::string prefix = "fixture " + f.name;
  try {
    const tabular::OracleResult r = tabular::exact_soft_advantage(f.mdp, f.policy, f.tau);
    const double scale = 1.0 + f.mdp.reward.cwiseAbs().maxCoeff();
    if (f.expected_gain) {
      const double d = std::abs(r.gain - *f.expected_gain);
      out.push_back(check("oracle", prefix + " gain", d <= 1e-9 * scale,
                          "computed " + format_double(r.gain) + ", expected " + format_double(*f.expected_gain)));
    }
    if (f.expected_entropy_gain) {
      const double d = std::abs(r.entropy_gain - *f.expected_entropy_gain);
      out.push_back(check("oracle", prefix + " entropy gain", d <= 1e-9 * (1.0 + f.tau),
                          "computed " + format_double(r.entropy_gain) + ", expected " +
                              format_double(*f.expected_entropy_gain)));
    }
    if (f.expected_bias) {
      const bool shape = f.expected_bias->size() == r.bias.size();
      const double d = shape ? (r.bias - *f.expected_bias).cwiseAbs().maxCoeff() : INFINITY;
      out.push_back(check("oracle", prefix + " bias", shape && d <= 1e-9 * scale, "max deviation " + sci(d)));
    }
    out.push_back(check("oracle", prefix + " decomposition", r.decomposition_error <= 1e-12,
                        "max |A~ - (A + A_H)| = " + sci(r.decomposition_error)));
  } catch (const std::exception& e) {
    out.push_back(check("oracle", prefix, false, e.what()));
  }
}

void oracle_checks(const SelftestOptions& opt, std::vector<SelftestCheck>& out) {
  std::mt19937_64 rng(20240611);
  double bellman = 0.0, bellman_h = 0.0, decomposition = 0.0, baseline = 0.0;
  for (int k = 0; k < 20; ++k) {
    const int ns = 2 + static_cast<int>(rng() % 9), na = 1 + static_cast<int>(rng() % 4);
    const auto mdp = tabular::random_recurrent_mdp(ns, na, rng);
    const auto pi = tabular::random_policy(ns, na, rng);
    const double tau = 0.5 + static_cast<double>(rng() % 4) * 0.5;
    const auto r = tabular::exact_soft_advantage(mdp, pi, tau);
    bellman = std::max(bellman, tabular::bellman_residual(mdp, pi, mdp.reward, r.gain, r.bias));
    bellman_h = std::max(bellman_h, tabular::bellman_residual(mdp, pi, tabular::entropy_reward(pi, tau),
                                                              r.entropy_gain, r.entropy_bias));
    decomposition = std::max(decomposition, r.decomposition_error);
    baseline = std::max(baseline, (pi.probs.cwiseProduct(r.reward_advantage)).rowwise().sum().cwiseAbs().maxCoeff());
  }
  out.push_back(check("oracle", "bias Bellman residual (20 random MDPs)", bellman < 1e-10, sci(bellman)));
  out.push_back(check("oracle", "entropy bias Bellman residual", bellman_h < 1e-10, sci(bellman_h)));
  out.push_back(check("oracle", "soft advantage decomposition", decomposition <= 1e-12, sci(decomposition)));
  out.push_back(check("oracle", "policy-weighted advantage vanishes", baseline < 1e-10, sci(baseline)));

  check_fixture(builtin_cycle(), out);
  for (const auto& path : opt.fixtures) {
    try {
      check_fixture(tabular::load_fixture(path), out);
    } catch (const std::exception& e) {
      out.push_back(check("oracle", "fixture " + path, false, e.what()));
    }
  }
}

void physics_checks(std::vector<SelftestCheck>& out) {
  Model p;
  const double dt = 0.002;
  State s{1.2, -0.7, 0.0, 0.0, 0.0};
  const double e0 = total_energy(s, p);
  double drift = 0.0;
  for (int k = 0; k < 5000; ++k) {
    s = step_rk4(s, Vec2<double>::Zero().eval(), dt, p);
    drift = std::max(drift, std::abs(total_energy(s, p) - e0));
  }
  out.push_back(check("physics", "energy conservation, 10 s unactuated", drift < 1e-3, sci(drift) + " J"));
  const State hanging{0.0, 0.0, 0.0, 0.0, 0.0};
  const State upright{M_PI, 0.0, 0.0, 0.0, 0.0};
  const double a0 = forward_dynamics(hanging, Vec2<double>::Zero().eval(), p).cwiseAbs().maxCoeff();
  const double a1 = forward_dynamics(upright, Vec2<double>::Zero().eval(), p).cwiseAbs().maxCoeff();
  out.push_back(check("physics", "hanging equilibrium at rest", a0 < 1e-9, sci(a0) + " rad/s^2"));
  out.push_back(check("physics", "upright equilibrium at rest", a1 < 1e-9, sci(a1) + " rad/s^2"));
}

void gradient_checks(std::vector<SelftestCheck>& out) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int batch = 8;
  Eigen::MatrixXd obs(4, batch);
  for (Eigen::Index i = 0; i < obs.size(); ++i) obs(i) = gauss(rng);
  const double h = 1e-6;

  nn::GaussianPolicy policy = nn::GaussianPolicy::create(4, {16, 16}, -0.5, rng);
  // Larger output weights so the mean actually depends on the inputs.
  policy.mean_net.weight(2) *= 100.0;
  Eigen::RowVectorXd pre(batch), w(batch);
  for (int i = 0; i < batch; ++i) {
    pre(i) = gauss(rng);
    w(i) = gauss(rng);
  }
  const auto lp = nn::log_prob_batch(policy, obs, pre);
  const Eigen::VectorXd analytic = nn::log_prob_gradient(policy, lp, pre, w);
  const Eigen::VectorXd theta = policy.flatten();
  double err_mean = 0.0, err_std = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    nn::GaussianPolicy q = policy;
    Eigen::VectorXd t = theta;
    t(i) += h;
    q.assign(t);
    const double fp = nn::log_prob_batch(q, obs, pre).log_prob.dot(w);
    t(i) -= 2 * h;
    q.assign(t);
    const double fm = nn::log_prob_batch(q, obs, pre).log_prob.dot(w);
    double& slot = i + 1 == theta.size() ? err_std : err_mean;  // log_std is the last entry
    slot = std::max(slot, rel_err(analytic(i), (fp - fm) / (2 * h)));
  }
  out.push_back(check("gradient", "policy mean network vs central differences", err_mean < 1e-4, sci(err_mean)));
  out.push_back(check("gradient", "policy log_std vs central differences", err_std < 1e-4, sci(err_std)));

  nn::Critic critic = nn::Critic::create(4, {16, 16}, rng);
  Eigen::MatrixXd dy(2, batch);
  for (Eigen::Index i = 0; i < dy.size(); ++i) dy(i) = gauss(rng);
  for (int head = 0; head < 2; ++head) {
    Eigen::MatrixXd dyh = Eigen::MatrixXd::Zero(2, batch);
    dyh.row(head) = dy.row(head);
    nn::Mlp<double>::Cache cache;
    critic.net.forward(obs, &cache);
    const Eigen::VectorXd g = nn::Mlp<double>::flatten(critic.net.backward(cache, dyh));
    const Eigen::VectorXd c = critic.net.flatten();
    double err = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      nn::Mlp<double> q = critic.net;
      Eigen::VectorXd t = c;
      t(i) += h;
      q.assign(t);
      const double fp = q.forward(obs).cwiseProduct(dyh).sum();
      t(i) -= 2 * h;
      q.assign(t);
      const double fm = q.forward(obs).cwiseProduct(dyh).sum();
      err = std::max(err, rel_err(g(i), (fp - fm) / (2 * h)));
    }
    out.push_back(check("gradient", std::string("critic ") + (head == 0 ? "reward" : "entropy") +
                                        " head vs central differences",
                        err < 1e-4, sci(err)));
  }
}

void reward_checks(std::vector<SelftestCheck>& out) {
  const RewardSpec spec;
  const double at_goal = reward(spec.goal, 0.0, spec);
  const double hanging = reward(Eigen::Vector4d::Zero(), 0.0, spec);
  const double unit = reward(spec.goal, 1.0, spec);
  out.push_back(check("reward", "goal state, zero action", at_goal == 0.0, format_double(at_goal)));
  const double expect_hanging = -0.001 * 50.0 * M_PI * M_PI;
  out.push_back(check("reward", "hanging state, zero action", std::abs(hanging - expect_hanging) <= 1e-15,
                      format_double(hanging) + " vs " + format_double(expect_hanging)));
  out.push_back(check("reward", "goal state, unit action", std::abs(unit + 0.001) <= 1e-18, format_double(unit)));
}

}  // namespace

std::vector<std::string> selftest_groups() { return {"oracle", "physics", "gradient", "reward"}; }

std::vector<SelftestCheck> run_selftest(const SelftestOptions& options) {
  std::vector<std::string> groups;
  if (options.filter.empty()) {
    groups = selftest_groups();
  } else {
    std::istringstream in(options.filter);
    std::string g;
    while (std::getline(in, g, ',')) {
      if (g.empty()) continue;
      bool known = false;
      for (const auto& k : selftest_groups()) known |= k == g;
      if (!known) throw InvalidInput("unknown selftest group '" + g + "'");
      groups.push_back(g);
    }
  }
  std::vector<SelftestCheck> out;
  for (const auto& g : groups) {
    if (g == "oracle") oracle_checks(options, out);
    if (g == "physics") physics_checks(out);
    if (g == "gradient") gradient_checks(out);
    if (g == "reward") reward_checks(out);
  }
  return out;
}

bool print_selftest(const std::vector<SelftestCheck>& checks, std::ostream& out) {
  bool all = true;
  for (const auto& c : checks) {
    out << (c.pass ? "PASS" : "FAIL") << "  [" << c.group << "] " << c.name;
    if (!c.detail.empty()) out << "  (" << c.detail << ")";
    out << '\n';
    all &= c.pass;
  }
  return all;
}

}  // namespace areapo
