#pragma once

// Competition-style scoring of a controller: noisy/perturbed episode
// rollouts, trajectory cost criteria, an aggregate score, and the six-category
// robustness sweep.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "areapo/checkpoint.hpp"
#include "areapo/config.hpp"
#include "areapo/environment.hpp"
#include "areapo/nn.hpp"

namespace areapo {

struct Impulse {
  double time = 0.0;      // s
  double duration = 0.0;  // s
  int joint = 0;
  double magnitude = 0.0;  // N m, added to the joint torque while active
};

struct NoiseSpec {
  double velocity_noise_std = 0.0;  // rad/s, on measured velocities
  double torque_noise_std = 0.0;    // N m, on commanded torque
  double torque_response = 1.0;     // applied = response * commanded
  int delay_steps = 0;              // control steps of torque delay
  std::vector<Impulse> impulses;
  std::vector<std::pair<std::string, double>> model_scaling;  // (parameter, factor)
  std::uint64_t seed = 0;

  void validate() const;
  bool is_nominal() const;
};

/// Noise config file keys: noise.velocity_std, noise.torque_std, noise.torque_response,
/// noise.delay_steps, noise.seed, noise.impulses = "t:dur:joint:mag; ...", noise.model_scaling = "name:factor, ...".
NoiseSpec load_noise_spec(const KeyValueConfig& cfg);

struct SuccessThresholds {
  double angle_tol = 0.1;     // rad, both joints, wrapped distance to upright
  double velocity_tol = 0.5;  // rad/s, both joints
  double hold_time = 1.0;     // s, the final segment that must stay upright
};

/// Cost value at which a criterion contributes zero to the score.
struct ScoreNormalizers {
  double swingup_time = 10.0;
  double energy = 100.0;
  double torque_cost = 100.0;
  double torque_smoothness = 1.0;
  double velocity_cost = 1000.0;

  void validate() const;
};

struct EvalConfig {
  double duration = 10.0;
  SuccessThresholds thresholds;
  ScoreNormalizers normalizers;

  void bind(FieldTable& table);
};

struct CriteriaReport {
  bool success = false;
  double swingup_time = 0.0;
  double energy = 0.0;
  double torque_cost = 0.0;
  double torque_smoothness = 0.0;
  double velocity_cost = 0.0;
  double score = 0.0;

  friend bool operator==(const CriteriaReport&, const CriteriaReport&) = default;
};

/// Deterministic-mean rollout from the noiseless start state with frozen normalization.
Trajectory run_episode(const nn::GaussianPolicy& policy, const RunningStats& stats, const EnvConfig& env,
                       const NoiseSpec& noise, const EvalConfig& eval);
/// Throws CheckpointError when the checkpoint was trained for another task.
Trajectory run_episode(const Checkpoint& ckpt, const EnvConfig& env, const NoiseSpec& noise, const EvalConfig& eval);

/// Upright test used by both the success flag and the swing-up time.
bool is_upright(const TrajectoryPoint& p, const SuccessThresholds& th);

CriteriaReport compute_criteria(const Trajectory& traj, const EvalConfig& eval);

/// success * mean_i (1 - min(c_i / n_i, 1)) over the five costs.
double aggregate_score(const CriteriaReport& criteria, const ScoreNormalizers& normalizers);

enum class RobustnessCategory { Model, VelocityNoise, TorqueNoise, TorqueStepResponse, TimeDelay, Perturbations };
inline constexpr int kNumRobustnessCategories = 6;

std::string category_name(RobustnessCategory c);
RobustnessCategory parse_category(const std::string& name);
std::vector<RobustnessCategory> all_categories();

struct SweepConfig {
  std::vector<std::string> model_params{"mass_1",    "mass_2",    "length_1", "length_2",
                                        "com_1",     "com_2",     "inertia_1", "inertia_2"};
  std::vector<double> model_factors{0.8, 0.9, 1.1, 1.2};
  std::vector<double> velocity_noise{0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> torque_noise{0.1, 0.2, 0.5, 1.0, 1.5, 2.0};
  std::vector<double> torque_response{0.6, 0.8, 0.9, 1.1, 1.2, 1.4};
  std::vector<int> delay_steps{1, 2, 3, 4, 5};
  int perturbation_seeds = 10;
  int perturbation_count = 2;
  double perturbation_magnitude = 1.0;
  double perturbation_duration = 0.05;
  double perturbation_window_start = 1.0;
  double perturbation_window_end = 7.0;
  std::uint64_t seed = 0;

  void bind(FieldTable& table);
  /// Grid where every category reduces to the nominal episode.
  static SweepConfig zero_severity();
};

struct SweepPoint {
  RobustnessCategory category = RobustnessCategory::Model;
  std::string setting;
  bool success = false;
  std::string cause;  // non-empty when the episode raised an error
};

struct CategoryScore {
  RobustnessCategory category = RobustnessCategory::Model;
  double pass_rate = 0.0;
  int points = 0;
};

struct RobustnessReport {
  std::vector<CategoryScore> categories;
  double overall = 0.0;
  std::vector<SweepPoint> points;
};

/// Every sweep point of the selected categories, in a fixed order.
std::vector<std::pair<SweepPoint, NoiseSpec>> sweep_points(const SweepConfig& sweep,
                                                           const std::vector<RobustnessCategory>& categories);

/// `jobs` > 1 evaluates points on worker threads; the report is identical for any value.
RobustnessReport robustness_suite(const nn::GaussianPolicy& policy, const RunningStats& stats, const EnvConfig& env,
                                  const EvalConfig& eval, const SweepConfig& sweep,
                                  const std::vector<RobustnessCategory>& categories, int jobs = 1);

/// Mean of the category pass rates present in `categories`.
double overall_score(const std::vector<CategoryScore>& categories);

struct LabeledCriteria {
  std::string label;
  CriteriaReport report;
};
struct LabeledRobustness {
  std::string label;
  RobustnessReport report;
};

void write_performance_csv(const std::vector<LabeledCriteria>& rows, std::ostream& out);
std::vector<LabeledCriteria> read_performance_csv(std::istream& in);
void write_robustness_csv(const std::vector<LabeledRobustness>& rows, std::ostream& out);
/// Per-point log: category,setting,success,cause.
void write_sweep_points_csv(const RobustnessReport& report, std::ostream& out);

/// Writes performance.csv and robustness.csv into `dir` (header-only for empty lists), plus
/// robustness_points[_k].csv and robustness[_k].svg for each robustness report k (no suffix for k = 0).
void export_report(const std::vector<LabeledCriteria>& performance, const std::vector<LabeledRobustness>& robustness,
                   const std::string& dir);

}  // namespace areapo
