#include "areapo/tabular.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "areapo/config.hpp"
#include "areapo/errors.hpp"

namespace areapo::tabular {
namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kSolveTol = 1e-10;

std::vector<int> reachable_from(const Eigen::MatrixXd& chain, int start, bool reverse) {
  const int n = static_cast<int>(chain.rows());
  std::vector<int> seen(n, 0), stack{start};
  seen[start] = 1;
  while (!stack.empty()) {
    const int s = stack.back();
    stack.pop_back();
    for (int t = 0; t < n; ++t) {
      const double p = reverse ? chain(t, s) : chain(s, t);
      if (p > 0 && !seen[t]) {
        seen[t] = 1;
        stack.push_back(t);
      }
    }
  }
  return seen;
}

}  // namespace

void TabularMDP::validate() const {
  if (n_states < 1 || n_actions < 1) throw InvalidInput("MDP needs at least one state and one action");
  if (static_cast<int>(transition.size()) != n_actions) throw InvalidInput("MDP: one transition matrix per action");
  if (reward.rows() != n_states || reward.cols() != n_actions) throw InvalidInput("MDP: reward table shape");
  if (!reward.allFinite()) throw InvalidInput("MDP: rewards must be finite");
  for (int a = 0; a < n_actions; ++a) {
    const auto& p = transition[a];
    if (p.rows() != n_states || p.cols() != n_states) throw InvalidInput("MDP: transition matrix shape");
    if ((p.array() < 0).any() || !p.allFinite()) throw InvalidInput("MDP: transition probabilities must be in [0,1]");
    for (int s = 0; s < n_states; ++s) {
      if (std::abs(p.row(s).sum() - 1.0) > kRowSumTol)
        throw InvalidInput("MDP: P[" + std::to_string(s) + "][" + std::to_string(a) + "] does not sum to 1");
    }
  }
}

void TabularPolicy::validate(int n_states, int n_actions) const {
  if (probs.rows() != n_states || probs.cols() != n_actions) throw InvalidInput("policy table shape");
  if ((probs.array() < 0).any() || !probs.allFinite()) throw InvalidInput("policy entries must be non-negative");
  for (int s = 0; s < n_states; ++s)
    if (std::abs(probs.row(s).sum() - 1.0) > kRowSumTol)
      throw InvalidInput("policy row " + std::to_string(s) + " does not sum to 1");
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  return {Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions)};
}

Eigen::MatrixXd induced_transition(const TabularMDP& mdp, const TabularPolicy& policy) {
  mdp.validate();
  policy.validate(mdp.n_states, mdp.n_actions);
  Eigen::MatrixXd chain = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
  for (int a = 0; a < mdp.n_actions; ++a) chain += policy.probs.col(a).asDiagonal() * mdp.transition[a];
  return chain;
}

Eigen::VectorXd induced_reward(const Eigen::MatrixXd& reward, const TabularPolicy& policy) {
  return policy.probs.cwiseProduct(reward).rowwise().sum();
}

void check_irreducible(const Eigen::MatrixXd& chain) {
  const auto fwd = reachable_from(chain, 0, false);
  const auto bwd = reachable_from(chain, 0, true);
  std::string bad;
  for (std::size_t s = 0; s < fwd.size(); ++s) {
    if (!(fwd[s] && bwd[s])) bad += (bad.empty() ? "" : ", ") + std::to_string(s);
  }
  if (!bad.empty())
    throw PreconditionViolation("policy-induced chain is reducible; states not communicating with state 0: " + bad);
}

Eigen::VectorXd stationary_distribution(const TabularMDP& mdp, const TabularPolicy& policy) {
  const Eigen::MatrixXd chain = induced_transition(mdp, policy);
  check_irreducible(chain);
  const int n = mdp.n_states;
  // d^T (P - I) = 0 with one balance equation replaced by sum(d) = 1.
  Eigen::MatrixXd a = chain.transpose() - Eigen::MatrixXd::Identity(n, n);
  a.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1.0;
  const Eigen::VectorXd d = a.partialPivLu().solve(b);
  const double residual = (chain.transpose() * d - d).lpNorm<Eigen::Infinity>();
  if (!d.allFinite() || residual > kSolveTol || std::abs(d.sum() - 1.0) > kSolveTol)
    throw NumericalError("stationary_distribution: residual " + std::to_string(residual));
  return d;
}

double exact_gain(const TabularMDP& mdp, const TabularPolicy& policy) {
  return stationary_distribution(mdp, policy).dot(induced_reward(mdp.reward, policy));
}

GainBias solve_gain_bias(const TabularMDP& mdp, const TabularPolicy& policy, const Eigen::MatrixXd& reward,
                         int reference_state) {
  const Eigen::MatrixXd chain = induced_transition(mdp, policy);
  check_irreducible(chain);
  const int n = mdp.n_states;
  if (reference_state < 0 || reference_state >= n) throw InvalidInput("reference state out of range");
  // Unknowns [v; rho]:  (I - P) v + rho 1 = r_pi,  v(ref) = 0.
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + 1, n + 1);
  k.topLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n) - chain;
  k.topRightCorner(n, 1).setOnes();
  k(n, reference_state) = 1.0;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs.head(n) = induced_reward(reward, policy);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
  if (!lu.isInvertible())
    throw NumericalError("gain/bias system is singular (rank " + std::to_string(lu.rank()) + " of " +
                         std::to_string(n + 1) + ")");
  const Eigen::VectorXd x = lu.solve(rhs);
  const double scale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
  const double residual = (k * x - rhs).lpNorm<Eigen::Infinity>();
  if (!x.allFinite() || residual > kSolveTol * scale)
    throw NumericalError("gain/bias solve residual " + std::to_string(residual) + " exceeds tolerance");
  return {x(n), x.head(n)};
}

Eigen::VectorXd exact_bias(const TabularMDP& mdp, const TabularPolicy& policy) {
  return solve_gain_bias(mdp, policy, mdp.reward).bias;
}

Eigen::MatrixXd entropy_reward(const TabularPolicy& policy, double tau) {
  return policy.probs.unaryExpr([tau](double p) { return p > 0 ? -tau * std::log(p) : 0.0; });
}

double exact_entropy_gain(const TabularMDP& mdp, const TabularPolicy& policy, double tau) {
  return stationary_distribution(mdp, policy).dot(induced_reward(entropy_reward(policy, tau), policy));
}

Eigen::VectorXd exact_entropy_bias(const TabularMDP& mdp, const TabularPolicy& policy, double tau) {
  return solve_gain_bias(mdp, policy, entropy_reward(policy, tau)).bias;
}

double bellman_residual(const TabularMDP& mdp, const TabularPolicy& policy, const Eigen::MatrixXd& reward,
                        double gain, const Eigen::VectorXd& bias) {
  const Eigen::MatrixXd chain = induced_transition(mdp, policy);
  const Eigen::VectorXd lhs = bias.array() + gain;
  const Eigen::VectorXd rhs = induced_reward(reward, policy) + chain * bias;
  return (lhs - rhs).lpNorm<Eigen::Infinity>();
}

Eigen::MatrixXd bias_advantage(const TabularMDP& mdp, const Eigen::MatrixXd& reward, double gain,
                               const Eigen::VectorXd& bias) {
  Eigen::MatrixXd adv(mdp.n_states, mdp.n_actions);
  for (int a = 0; a < mdp.n_actions; ++a)
    adv.col(a) = reward.col(a).array() - gain + (mdp.transition[a] * bias).array() - bias.array();
  return adv;
}

OracleResult exact_soft_advantage(const TabularMDP& mdp, const TabularPolicy& policy, double tau) {
  OracleResult out;
  const Eigen::MatrixXd h = entropy_reward(policy, tau);
  const Eigen::VectorXd d = stationary_distribution(mdp, policy);
  out.gain = d.dot(induced_reward(mdp.reward, policy));
  out.entropy_gain = d.dot(induced_reward(h, policy));
  out.bias = solve_gain_bias(mdp, policy, mdp.reward).bias;
  out.entropy_bias = solve_gain_bias(mdp, policy, h).bias;
  out.reward_advantage = bias_advantage(mdp, mdp.reward, out.gain, out.bias);
  out.entropy_advantage = bias_advantage(mdp, h, out.entropy_gain, out.entropy_bias);

  out.soft_reward = (mdp.reward + h).array() - (out.gain + out.entropy_gain);
  out.soft_value = out.bias + out.entropy_bias;
  out.soft_advantage.resize(mdp.n_states, mdp.n_actions);
  for (int a = 0; a < mdp.n_actions; ++a)
    out.soft_advantage.col(a) =
        out.soft_reward.col(a) + mdp.transition[a] * out.soft_value - out.soft_value;

  out.decomposition_error =
      (out.soft_advantage - out.reward_advantage - out.entropy_advantage).lpNorm<Eigen::Infinity>();
  if (!(out.decomposition_error <= 1e-12))
    throw NumericalError("soft advantage decomposition error " + std::to_string(out.decomposition_error));
  return out;
}

TabularMDP random_recurrent_mdp(int n_states, int n_actions, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.reward.resize(n_states, n_actions);
  for (int a = 0; a < n_actions; ++a) {
    Eigen::MatrixXd p(n_states, n_states);
    for (int s = 0; s < n_states; ++s) {
      for (int t = 0; t < n_states; ++t) p(s, t) = unit(rng);
      p.row(s) /= p.row(s).sum();
    }
    mdp.transition.push_back(std::move(p));
  }
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = gauss(rng);
  return mdp;
}

TabularPolicy random_policy(int n_states, int n_actions, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.1, 1.0);
  TabularPolicy policy{Eigen::MatrixXd(n_states, n_actions)};
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) policy.probs(s, a) = unit(rng);
    policy.probs.row(s) /= policy.probs.row(s).sum();
  }
  return policy;
}

namespace {

class TokenReader {
 public:
  TokenReader(std::istream& in, std::string name) : name_(std::move(name)) {
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      std::istringstream row(hash == std::string::npos ? line : line.substr(0, hash));
      std::string tok;
      while (row >> tok) tokens_.push_back(tok);
    }
  }
  bool done() const { return pos_ >= tokens_.size(); }
  std::string word() {
    if (done()) throw ConfigError("unexpected end of fixture", name_);
    return tokens_[pos_++];
  }
  double number() {
    const std::string tok = word();
    try {
      return parse_double(tok);
    } catch (const InvalidInput&) {
      throw ConfigError("expected a number, got '" + tok + "'", name_);
    }
  }
  int count() {
    const double v = number();
    if (v < 1 || v != std::floor(v)) throw ConfigError("expected a positive count", name_);
    return static_cast<int>(v);
  }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

Fixture parse_fixture(std::istream& in, const std::string& name) {
  TokenReader tr(in, name);
  Fixture f;
  f.name = name;
  bool have_policy = false;
  auto need_shape = [&] {
    if (f.mdp.n_states < 1 || f.mdp.n_actions < 1)
      throw ConfigError("'states' and 'actions' must precede tables", name);
  };
  while (!tr.done()) {
    const std::string key = tr.word();
    if (key == "states") {
      f.mdp.n_states = tr.count();
    } else if (key == "actions") {
      f.mdp.n_actions = tr.count();
    } else if (key == "transitions") {
      need_shape();
      const int n = f.mdp.n_states;
      f.mdp.transition.assign(f.mdp.n_actions, Eigen::MatrixXd::Zero(n, n));
      for (int s = 0; s < n; ++s)
        for (int a = 0; a < f.mdp.n_actions; ++a)
          for (int t = 0; t < n; ++t) f.mdp.transition[a](s, t) = tr.number();
    } else if (key == "rewards" || key == "policy") {
      need_shape();
      Eigen::MatrixXd table(f.mdp.n_states, f.mdp.n_actions);
      for (int s = 0; s < f.mdp.n_states; ++s)
        for (int a = 0; a < f.mdp.n_actions; ++a) table(s, a) = tr.number();
      if (key == "rewards") {
        f.mdp.reward = table;
      } else {
        f.policy.probs = table;
        have_policy = true;
      }
    } else if (key == "tau") {
      f.tau = tr.number();
    } else if (key == "expected_gain") {
      f.expected_gain = tr.number();
    } else if (key == "expected_entropy_gain") {
      f.expected_entropy_gain = tr.number();
    } else if (key == "expected_bias") {
      need_shape();
      Eigen::VectorXd v(f.mdp.n_states);
      for (int s = 0; s < f.mdp.n_states; ++s) v(s) = tr.number();
      f.expected_bias = v;
    } else {
      throw ConfigError("unknown fixture keyword '" + key + "'", name);
    }
  }
  need_shape();
  if (!have_policy) f.policy = TabularPolicy::uniform(f.mdp.n_states, f.mdp.n_actions);
  try {
    f.mdp.validate();
    f.policy.validate(f.mdp.n_states, f.mdp.n_actions);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what(), name);
  }
  return f;
}

Fixture load_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open fixture '" + path + "'");
  return parse_fixture(in, path);
}

void write_fixture(const Fixture& f, std::ostream& out) {
  out << "states " << f.mdp.n_states << "\nactions " << f.mdp.n_actions << "\ntransitions\n";
  for (int s = 0; s < f.mdp.n_states; ++s)
    for (int a = 0; a < f.mdp.n_actions; ++a) {
      for (int t = 0; t < f.mdp.n_states; ++t) out << (t ? " " : "") << format_double(f.mdp.transition[a](s, t));
      out << '\n';
    }
  auto table = [&](const char* key, const Eigen::MatrixXd& m) {
    out << key << '\n';
    for (int s = 0; s < m.rows(); ++s) {
      for (int a = 0; a < m.cols(); ++a) out << (a ? " " : "") << format_double(m(s, a));
      out << '\n';
    }
  };
  table("rewards", f.mdp.reward);
  table("policy", f.policy.probs);
  out << "tau " << format_double(f.tau) << '\n';
  if (f.expected_gain) out << "expected_gain " << format_double(*f.expected_gain) << '\n';
  if (f.expected_entropy_gain) out << "expected_entropy_gain " << format_double(*f.expected_entropy_gain) << '\n';
  if (f.expected_bias) {
    out << "expected_bias";
    for (int s = 0; s < f.expected_bias->size(); ++s) out << ' ' << format_double((*f.expected_bias)(s));
    out << '\n';
  }
}

}  // namespace areapo::tabular
