#include "areapo/evaluation.hpp"

#include <atomic>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "areapo/errors.hpp"
#include "areapo/svg.hpp"

namespace areapo {
namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    const auto a = item.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    const auto b = item.find_last_not_of(" \t");
    out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

std::string setting_label(const char* key, double v) { return std::string(key) + "=" + format_double(v); }

}  // namespace

void NoiseSpec::validate() const {
  if (velocity_noise_std < 0 || torque_noise_std < 0) throw InvalidInput("noise magnitudes must be non-negative");
  if (!(torque_response >= 0)) throw InvalidInput("torque_response must be non-negative");
  if (delay_steps < 0) throw InvalidInput("delay_steps must be non-negative");
  for (const auto& imp : impulses) {
    if (imp.duration < 0) throw InvalidInput("impulse duration must be non-negative");
    if (imp.joint < 0 || imp.joint > 1) throw InvalidInput("impulse joint must be 0 or 1");
  }
  for (const auto& [name, factor] : model_scaling) {
    if (!(factor > 0)) throw InvalidInput("model scaling factor for '" + name + "' must be positive");
  }
}

bool NoiseSpec::is_nominal() const {
  bool scaled = false;
  for (const auto& ms : model_scaling) scaled |= ms.second != 1.0;
  bool kicked = false;
  for (const auto& imp : impulses) kicked |= imp.magnitude != 0.0 && imp.duration > 0.0;
  return velocity_noise_std == 0 && torque_noise_std == 0 && torque_response == 1.0 && delay_steps == 0 && !scaled &&
         !kicked;
}

NoiseSpec load_noise_spec(const KeyValueConfig& cfg) {
  NoiseSpec n;
  std::string impulses, scaling;
  FieldTable t;
  t.add("noise.velocity_std", n.velocity_noise_std)
      .add("noise.torque_std", n.torque_noise_std)
      .add("noise.torque_response", n.torque_response)
      .add("noise.delay_steps", n.delay_steps)
      .add("noise.seed", n.seed)
      .add("noise.impulses", impulses)
      .add("noise.model_scaling", scaling);
  t.apply(cfg, /*allow_unknown=*/true);
  try {
    for (const auto& item : split(impulses, ';')) {
      const auto f = split(item, ':');
      if (f.size() != 4) throw InvalidInput("impulse '" + item + "' must be time:duration:joint:magnitude");
      n.impulses.push_back({parse_double(f[0]), parse_double(f[1]), static_cast<int>(parse_double(f[2])),
                            parse_double(f[3])});
    }
    for (const auto& item : split(scaling, ',')) {
      const auto f = split(item, ':');
      if (f.size() != 2) throw InvalidInput("model scaling '" + item + "' must be name:factor");
      Model probe;
      (void)model_param(probe, f[0]);
      n.model_scaling.emplace_back(f[0], parse_double(f[1]));
    }
    n.validate();
  } catch (const InvalidInput& e) {
    const ConfigEntry* where = cfg.find("noise.impulses");
    throw ConfigError(e.what(), where ? where->source : std::string("noise config"), where ? where->line : 0);
  }
  return n;
}

void ScoreNormalizers::validate() const {
  for (double v : {swingup_time, energy, torque_cost, torque_smoothness, velocity_cost})
    if (!(v > 0)) throw ConfigError("score normalizers must be positive");
}

void EvalConfig::bind(FieldTable& t) {
  t.add("eval.duration", duration)
      .add("eval.angle_tol", thresholds.angle_tol)
      .add("eval.velocity_tol", thresholds.velocity_tol)
      .add("eval.hold_time", thresholds.hold_time)
      .add("eval.norm_swingup_time", normalizers.swingup_time)
      .add("eval.norm_energy", normalizers.energy)
      .add("eval.norm_torque_cost", normalizers.torque_cost)
      .add("eval.norm_torque_smoothness", normalizers.torque_smoothness)
      .add("eval.norm_velocity_cost", normalizers.velocity_cost);
}

Trajectory run_episode(const nn::GaussianPolicy& policy, const RunningStats& stats, const EnvConfig& env,
                       const NoiseSpec& noise, const EvalConfig& eval) {
  env.validate();
  noise.validate();
  Model model = env.model;
  for (const auto& [name, factor] : noise.model_scaling) model_param(model, name) *= factor;
  model.validate();

  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int steps = static_cast<int>(std::lround(eval.duration / env.control_dt));
  const int joint = active_joint(env.task);
  std::deque<double> fifo(static_cast<std::size_t>(noise.delay_steps), 0.0);

  Trajectory traj;
  traj.task = env.task;
  traj.dt = env.control_dt;
  traj.points.reserve(static_cast<std::size_t>(std::max(steps, 0)));
  State s = State::from_vector(env.reset.start_state, 0.0);
  for (int k = 0; k < steps; ++k) {
    State measured = s;
    if (noise.velocity_noise_std > 0) {
      measured.qd1 += noise.velocity_noise_std * gauss(rng);
      measured.qd2 += noise.velocity_noise_std * gauss(rng);
    }
    const Eigen::Vector4d obs = normalize(scale_observation(measured, env.v_max), stats, env.obs_clip);
    double command = nn::policy_action(policy, obs) * model.torque_limit;
    if (noise.torque_noise_std > 0) command += noise.torque_noise_std * gauss(rng);
    command *= noise.torque_response;
    if (noise.delay_steps > 0) {
      fifo.push_back(command);
      command = fifo.front();
      fifo.pop_front();
    }
    Vec2<double> tau = apply_actuation(env.task, command, model.torque_limit);
    const double applied = tau(joint);
    const double t = k * env.control_dt;
    for (const auto& imp : noise.impulses)
      if (t >= imp.time && t < imp.time + imp.duration) tau(imp.joint) += imp.magnitude;
    const State next = step_rk4(s, tau, env.control_dt, model, env.sim_dt);
    traj.points.push_back({t, s.q1, s.q2, s.qd1, s.qd2, applied, reward(next.vector(), applied, env.reward)});
    s = next;
  }
  return traj;
}

Trajectory run_episode(const Checkpoint& ckpt, const EnvConfig& env, const NoiseSpec& noise, const EvalConfig& eval) {
  if (ckpt.task != env.task)
    throw CheckpointError("checkpoint was trained for " + std::string(to_string(ckpt.task)) + ", environment is " +
                          std::string(to_string(env.task)));
  return run_episode(ckpt.policy, ckpt.obs_stats, env, noise, eval);
}

bool is_upright(const TrajectoryPoint& p, const SuccessThresholds& th) {
  return std::abs(wrap_angle(p.q1 - M_PI)) < th.angle_tol && std::abs(wrap_angle(p.q2)) < th.angle_tol &&
         std::abs(p.qd1) < th.velocity_tol && std::abs(p.qd2) < th.velocity_tol;
}

CriteriaReport compute_criteria(const Trajectory& traj, const EvalConfig& eval) {
  const auto& pts = traj.points;
  if (pts.empty()) throw InvalidInput("compute_criteria: empty trajectory");
  const double dt = traj.dt;
  const int joint = active_joint(traj.task);
  CriteriaReport rep;

  std::size_t first_upright = pts.size();
  while (first_upright > 0 && is_upright(pts[first_upright - 1], eval.thresholds)) --first_upright;
  const double held = static_cast<double>(pts.size() - first_upright) * dt;
  const double episode = static_cast<double>(pts.size()) * dt;
  rep.success = first_upright < pts.size() && held >= eval.thresholds.hold_time - 1e-9;
  rep.swingup_time = rep.success ? pts[first_upright].t - pts.front().t : episode;

  double smooth = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto& p = pts[k];
    const double qd_active = joint == 0 ? p.qd1 : p.qd2;
    rep.energy += std::abs(p.torque * qd_active) * dt;
    rep.torque_cost += p.torque * p.torque * dt;
    rep.velocity_cost += (p.qd1 * p.qd1 + p.qd2 * p.qd2) * dt;
    if (k > 0) smooth += std::abs(p.torque - pts[k - 1].torque);
  }
  rep.torque_smoothness = pts.size() > 1 ? smooth / static_cast<double>(pts.size() - 1) : 0.0;
  rep.score = aggregate_score(rep, eval.normalizers);
  return rep;
}

double aggregate_score(const CriteriaReport& c, const ScoreNormalizers& n) {
  n.validate();
  if (!c.success) return 0.0;
  const double costs[] = {c.swingup_time, c.energy, c.torque_cost, c.torque_smoothness, c.velocity_cost};
  const double norms[] = {n.swingup_time, n.energy, n.torque_cost, n.torque_smoothness, n.velocity_cost};
  double sum = 0.0;
  for (int i = 0; i < 5; ++i) sum += 1.0 - std::min(costs[i] / norms[i], 1.0);
  return sum / 5.0;
}

std::string category_name(RobustnessCategory c) {
  switch (c) {
    case RobustnessCategory::Model: return "model";
    case RobustnessCategory::VelocityNoise: return "velocity_noise";
    case RobustnessCategory::TorqueNoise: return "torque_noise";
    case RobustnessCategory::TorqueStepResponse: return "torque_step_response";
    case RobustnessCategory::TimeDelay: return "time_delay";
    case RobustnessCategory::Perturbations: return "perturbations";
  }
  return "unknown";
}

RobustnessCategory parse_category(const std::string& name) {
  for (auto c : all_categories())
    if (category_name(c) == name) return c;
  if (name == "delay") return RobustnessCategory::TimeDelay;
  if (name == "response") return RobustnessCategory::TorqueStepResponse;
  throw InvalidInput("unknown robustness category '" + name + "'");
}

std::vector<RobustnessCategory> all_categories() {
  return {RobustnessCategory::Model,        RobustnessCategory::VelocityNoise,     RobustnessCategory::TorqueNoise,
          RobustnessCategory::TorqueStepResponse, RobustnessCategory::TimeDelay, RobustnessCategory::Perturbations};
}

void SweepConfig::bind(FieldTable& t) {
  t.add("sweep.model_params", model_params)
      .add("sweep.model_factors", model_factors)
      .add("sweep.velocity_noise", velocity_noise)
      .add("sweep.torque_noise", torque_noise)
      .add("sweep.torque_response", torque_response)
      .add("sweep.delay_steps", delay_steps)
      .add("sweep.perturbation_seeds", perturbation_seeds)
      .add("sweep.perturbation_count", perturbation_count)
      .add("sweep.perturbation_magnitude", perturbation_magnitude)
      .add("sweep.perturbation_duration", perturbation_duration)
      .add("sweep.perturbation_window_start", perturbation_window_start)
      .add("sweep.perturbation_window_end", perturbation_window_end)
      .add("sweep.seed", seed);
}

SweepConfig SweepConfig::zero_severity() {
  SweepConfig s;
  s.model_factors = {1.0};
  s.velocity_noise = {0.0};
  s.torque_noise = {0.0};
  s.torque_response = {1.0};
  s.delay_steps = {0};
  s.perturbation_magnitude = 0.0;
  return s;
}

std::vector<std::pair<SweepPoint, NoiseSpec>> sweep_points(const SweepConfig& sweep,
                                                           const std::vector<RobustnessCategory>& categories) {
  std::vector<std::pair<SweepPoint, NoiseSpec>> out;
  auto add = [&](RobustnessCategory c, std::string setting, NoiseSpec n) {
    n.seed = derive_seed(sweep.seed, out.size());
    out.push_back({SweepPoint{c, std::move(setting), false, {}}, std::move(n)});
  };
  for (auto c : categories) {
    switch (c) {
      case RobustnessCategory::Model:
        for (const auto& name : sweep.model_params)
          for (double f : sweep.model_factors) {
            NoiseSpec n;
            n.model_scaling = {{name, f}};
            add(c, name + "*" + format_double(f), n);
          }
        break;
      case RobustnessCategory::VelocityNoise:
        for (double s : sweep.velocity_noise) {
          NoiseSpec n;
          n.velocity_noise_std = s;
          add(c, setting_label("velocity_std", s), n);
        }
        break;
      case RobustnessCategory::TorqueNoise:
        for (double s : sweep.torque_noise) {
          NoiseSpec n;
          n.torque_noise_std = s;
          add(c, setting_label("torque_std", s), n);
        }
        break;
      case RobustnessCategory::TorqueStepResponse:
        for (double f : sweep.torque_response) {
          NoiseSpec n;
          n.torque_response = f;
          add(c, setting_label("response", f), n);
        }
        break;
      case RobustnessCategory::TimeDelay:
        for (int d : sweep.delay_steps) {
          NoiseSpec n;
          n.delay_steps = d;
          add(c, "delay_steps=" + std::to_string(d), n);
        }
        break;
      case RobustnessCategory::Perturbations:
        for (int i = 0; i < sweep.perturbation_seeds; ++i) {
          std::mt19937_64 rng(derive_seed(sweep.seed ^ 0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(i)));
          std::uniform_real_distribution<double> when(sweep.perturbation_window_start, sweep.perturbation_window_end);
          std::bernoulli_distribution coin(0.5);
          NoiseSpec n;
          for (int k = 0; k < sweep.perturbation_count; ++k) {
            const double t = when(rng);
            const int joint = coin(rng) ? 1 : 0;
            const double sign = coin(rng) ? 1.0 : -1.0;
            n.impulses.push_back({t, sweep.perturbation_duration, joint, sign * sweep.perturbation_magnitude});
          }
          add(c, "impulse_seed=" + std::to_string(i), n);
        }
        break;
    }
  }
  return out;
}

double overall_score(const std::vector<CategoryScore>& categories) {
  if (categories.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& c : categories) sum += c.pass_rate;
  return sum / static_cast<double>(categories.size());
}

RobustnessReport robustness_suite(const nn::GaussianPolicy& policy, const RunningStats& stats, const EnvConfig& env,
                                  const EvalConfig& eval, const SweepConfig& sweep,
                                  const std::vector<RobustnessCategory>& categories, int jobs) {
  auto work = sweep_points(sweep, categories);
  auto run_one = [&](std::size_t i) {
    auto& [point, noise] = work[i];
    try {
      point.success = compute_criteria(run_episode(policy, stats, env, noise, eval), eval).success;
    } catch (const std::exception& e) {
      point.success = false;
      point.cause = e.what();
    }
  };
  if (jobs <= 1) {
    for (std::size_t i = 0; i < work.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < work.size(); i = next.fetch_add(1)) run_one(i);
      });
    for (auto& th : pool) th.join();
  }

  RobustnessReport report;
  for (auto c : categories) {
    CategoryScore cs{c, 0.0, 0};
    int passed = 0;
    for (const auto& [point, noise] : work) {
      if (point.category != c) continue;
      ++cs.points;
      passed += point.success ? 1 : 0;
    }
    cs.pass_rate = cs.points ? static_cast<double>(passed) / cs.points : 0.0;
    report.categories.push_back(cs);
  }
  report.overall = overall_score(report.categories);
  for (auto& [point, noise] : work) report.points.push_back(std::move(point));
  return report;
}

void write_performance_csv(const std::vector<LabeledCriteria>& rows, std::ostream& out) {
  out << "label,success,swingup_time,energy,torque_cost,torque_smoothness,velocity_cost,score\n";
  for (const auto& [label, r] : rows) {
    out << label << ',' << (r.success ? 1 : 0) << ',' << format_double(r.swingup_time) << ','
        << format_double(r.energy) << ',' << format_double(r.torque_cost) << ',' << format_double(r.torque_smoothness)
        << ',' << format_double(r.velocity_cost) << ',' << format_double(r.score) << '\n';
  }
}

std::vector<LabeledCriteria> read_performance_csv(std::istream& in) {
  std::vector<LabeledCriteria> rows;
  std::string line;
  if (!std::getline(in, line) || line.rfind("label,success,", 0) != 0)
    throw InvalidInput("performance CSV: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) throw InvalidInput("performance CSV: expected 8 fields in '" + line + "'");
    LabeledCriteria row;
    row.label = f[0];
    row.report.success = f[1] == "1";
    row.report.swingup_time = parse_double(f[2]);
    row.report.energy = parse_double(f[3]);
    row.report.torque_cost = parse_double(f[4]);
    row.report.torque_smoothness = parse_double(f[5]);
    row.report.velocity_cost = parse_double(f[6]);
    row.report.score = parse_double(f[7]);
    rows.push_back(row);
  }
  return rows;
}

void write_robustness_csv(const std::vector<LabeledRobustness>& rows, std::ostream& out) {
  out << "label";
  for (auto c : all_categories()) out << ',' << category_name(c);
  out << ",overall\n";
  for (const auto& [label, r] : rows) {
    out << label;
    for (auto c : all_categories()) {
      out << ',';
      for (const auto& cs : r.categories)
        if (cs.category == c) out << format_double(cs.pass_rate);
    }
    out << ',' << format_double(r.overall) << '\n';
  }
}

void write_sweep_points_csv(const RobustnessReport& report, std::ostream& out) {
  out << "category,setting,success,cause\n";
  for (const auto& p : report.points) {
    std::string cause = p.cause;
    for (char& ch : cause)
      if (ch == ',' || ch == '\n') ch = ';';
    out << category_name(p.category) << ',' << p.setting << ',' << (p.success ? 1 : 0) << ',' << cause << '\n';
  }
}

void export_report(const std::vector<LabeledCriteria>& performance, const std::vector<LabeledRobustness>& robustness,
                   const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  auto open = [&](const std::string& name) {
    std::ofstream f(fs::path(dir) / name);
    if (!f) throw InvalidInput("cannot write '" + (fs::path(dir) / name).string() + "'");
    return f;
  };
  {
    auto f = open("performance.csv");
    write_performance_csv(performance, f);
  }
  {
    auto f = open("robustness.csv");
    write_robustness_csv(robustness, f);
  }
  for (std::size_t i = 0; i < robustness.size(); ++i) {
    const std::string suffix = i == 0 ? "" : "_" + std::to_string(i);
    {
      auto f = open("robustness_points" + suffix + ".csv");
      write_sweep_points_csv(robustness[i].report, f);
    }
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& cs : robustness[i].report.categories) {
      labels.push_back(category_name(cs.category));
      values.push_back(cs.pass_rate);
    }
    auto f = open("robustness" + suffix + ".svg");
    svg::percent_bar_chart(f, "Robustness: " + robustness[i].label, labels, values);
  }
}

}  // namespace areapo
