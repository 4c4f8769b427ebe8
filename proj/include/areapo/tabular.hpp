#pragma once

// Exact average-reward quantities on small recurrent MDPs: stationary
// distribution, gain, bias, their entropy counterparts and the soft bias
// advantage. Used as ground truth for the sample-based estimators.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace areapo::tabular {

struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  /// transition[a](s, s') = p(s' | s, a)
  std::vector<Eigen::MatrixXd> transition;
  /// reward(s, a)
  Eigen::MatrixXd reward;

  void validate() const;
};

struct TabularPolicy {
  /// probs(s, a) = pi(a | s)
  Eigen::MatrixXd probs;

  void validate(int n_states, int n_actions) const;
  static TabularPolicy uniform(int n_states, int n_actions);
};

/// P_pi(s, s') = sum_a pi(a|s) p(s'|s,a)
Eigen::MatrixXd induced_transition(const TabularMDP& mdp, const TabularPolicy& policy);
/// r_pi(s) = sum_a pi(a|s) r(s,a)
Eigen::VectorXd induced_reward(const Eigen::MatrixXd& reward, const TabularPolicy& policy);

/// Throws PreconditionViolation naming the states that are not mutually reachable with state 0.
void check_irreducible(const Eigen::MatrixXd& chain);

Eigen::VectorXd stationary_distribution(const TabularMDP& mdp, const TabularPolicy& policy);

/// Gain and bias of an arbitrary per-(s,a) reward table under `policy`, v(reference) = 0.
struct GainBias {
  double gain = 0.0;
  Eigen::VectorXd bias;
};
GainBias solve_gain_bias(const TabularMDP& mdp, const TabularPolicy& policy, const Eigen::MatrixXd& reward,
                         int reference_state = 0);

double exact_gain(const TabularMDP& mdp, const TabularPolicy& policy);
Eigen::VectorXd exact_bias(const TabularMDP& mdp, const TabularPolicy& policy);

/// -tau log pi(a|s), with 0 where pi(a|s) = 0.
Eigen::MatrixXd entropy_reward(const TabularPolicy& policy, double tau);
double exact_entropy_gain(const TabularMDP& mdp, const TabularPolicy& policy, double tau);
Eigen::VectorXd exact_entropy_bias(const TabularMDP& mdp, const TabularPolicy& policy, double tau);

/// Max over s of |v(s) + gain - sum_a pi(a|s) [r(s,a) + sum_s' p(s'|s,a) v(s')]|.
double bellman_residual(const TabularMDP& mdp, const TabularPolicy& policy, const Eigen::MatrixXd& reward,
                        double gain, const Eigen::VectorXd& bias);

/// A(s,a) = r(s,a) - gain + sum_s' p(s'|s,a) v(s') - v(s)
Eigen::MatrixXd bias_advantage(const TabularMDP& mdp, const Eigen::MatrixXd& reward, double gain,
                               const Eigen::VectorXd& bias);

struct OracleResult {
  double gain = 0.0;
  Eigen::VectorXd bias;
  double entropy_gain = 0.0;
  Eigen::VectorXd entropy_bias;
  Eigen::MatrixXd reward_advantage;   // A
  Eigen::MatrixXd entropy_advantage;  // A_H
  Eigen::MatrixXd soft_reward;        // r~(s,a) = r - tau log pi - (rho + rho_H)
  Eigen::VectorXd soft_value;         // v~ = v + v_H
  Eigen::MatrixXd soft_advantage;     // A~ = E[r~ + v~(s')] - v~(s)
  double decomposition_error = 0.0;   // max |A~ - (A + A_H)|
};

/// Full pipeline; throws NumericalError when the soft advantage and its
/// decomposition disagree by more than 1e-12.
OracleResult exact_soft_advantage(const TabularMDP& mdp, const TabularPolicy& policy, double tau);

/// MDP with strictly positive transitions (hence recurrent under every policy).
TabularMDP random_recurrent_mdp(int n_states, int n_actions, std::mt19937_64& rng);
/// Policy with entries bounded away from zero.
TabularPolicy random_policy(int n_states, int n_actions, std::mt19937_64& rng);

/// Plain-text fixture: MDP plus optional policy, temperature and expected values.
struct Fixture {
  std::string name;
  TabularMDP mdp;
  TabularPolicy policy;
  double tau = 1.0;
  std::optional<double> expected_gain;
  std::optional<double> expected_entropy_gain;
  std::optional<Eigen::VectorXd> expected_bias;
};

Fixture parse_fixture(std::istream& in, const std::string& name);
Fixture load_fixture(const std::string& path);
void write_fixture(const Fixture& fixture, std::ostream& out);

}  // namespace areapo::tabular
