// areapo: train, evaluate and stress-test double-pendulum swing-up controllers.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "areapo/checkpoint.hpp"
#include "areapo/config.hpp"
#include "areapo/environment.hpp"
#include "areapo/errors.hpp"
#include "areapo/evaluation.hpp"
#include "areapo/learner.hpp"
#include "areapo/selftest.hpp"
#include "areapo/svg.hpp"

namespace fs = std::filesystem;
using namespace areapo;

namespace {

constexpr int kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitCheckpoint = 3;

std::string output_root() {
  const char* env = std::getenv("AREAPO_OUTPUT_ROOT");
  return env && *env ? env : "runs";
}

// Every setting a subcommand may consult, bound to its dotted key.
struct Settings {
  EnvConfig env;
  LearnerConfig learner;
  EvalConfig eval;
  SweepConfig sweep;
  std::uint64_t seed = 0;
  FieldTable table;

  Settings() {
    env.bind(table);
    learner.bind(table);
    eval.bind(table);
    sweep.bind(table);
    table.add("run.seed", seed);
  }
  Settings(const Settings&) = delete;

  void validate() const {
    try {
      env.validate();
      learner.validate();
      eval.normalizers.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what(), "resolved config");
    }
  }
};

struct Layers {
  std::vector<std::string> files;
  std::vector<std::string> sets;
};

void add_layer_options(CLI::App* cmd, Layers& layers) {
  cmd->add_option("--config", layers.files, "Config file (repeatable, later files override earlier ones)");
  cmd->add_option("--set", layers.sets, "Override one key, e.g. --set learner.tau=1.5 (repeatable)");
}

// Splits noise.* keys off so that the remaining keys can be checked strictly.
std::pair<KeyValueConfig, KeyValueConfig> load_layers(const Layers& layers, const std::string& noise_file = {}) {
  KeyValueConfig all;
  for (const auto& f : layers.files) all.merge(KeyValueConfig::load_file(f));
  if (!noise_file.empty()) all.merge(KeyValueConfig::load_file(noise_file));
  for (const auto& s : layers.sets) all.set_assignment(s);
  KeyValueConfig main, noise;
  for (const auto& [key, e] : all.entries()) (key.rfind("noise.", 0) == 0 ? noise : main).set(key, e.value, e.source, e.line);
  return {main, noise};
}

void write_noise(std::ostream& out, const NoiseSpec& n) {
  out << "noise.velocity_std = " << format_double(n.velocity_noise_std) << '\n'
      << "noise.torque_std = " << format_double(n.torque_noise_std) << '\n'
      << "noise.torque_response = " << format_double(n.torque_response) << '\n'
      << "noise.delay_steps = " << n.delay_steps << '\n'
      << "noise.seed = " << n.seed << '\n'
      << "noise.impulses = ";
  for (std::size_t i = 0; i < n.impulses.size(); ++i) {
    const auto& p = n.impulses[i];
    out << (i ? "; " : "") << format_double(p.time) << ':' << format_double(p.duration) << ':' << p.joint << ':'
        << format_double(p.magnitude);
  }
  out << "\nnoise.model_scaling = ";
  for (std::size_t i = 0; i < n.model_scaling.size(); ++i)
    out << (i ? ", " : "") << n.model_scaling[i].first << ':' << format_double(n.model_scaling[i].second);
  out << '\n';
}

void write_snapshot(const fs::path& dir, const Settings& st, const NoiseSpec* noise = nullptr) {
  fs::create_directories(dir);
  std::ofstream out(dir / "resolved_config.txt", std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + (dir / "resolved_config.txt").string());
  st.table.write(out);
  if (noise) write_noise(out, *noise);
}

void trajectory_svg(const Trajectory& traj, const std::string& title, std::ostream& out) {
  std::vector<double> t, q1, q2, qd1, qd2, tau;
  for (const auto& p : traj.points) {
    t.push_back(p.t);
    q1.push_back(p.q1);
    q2.push_back(p.q2);
    qd1.push_back(p.qd1);
    qd2.push_back(p.qd2);
    tau.push_back(p.torque);
  }
  svg::line_chart(out, title, t, "time [s]",
                  {{"Joint positions", "rad", {{"q1", q1}, {"q2", q2}}},
                   {"Joint velocities", "rad/s", {{"qd1", qd1}, {"qd2", qd2}}},
                   {"Applied torque", "N m", {{std::string(to_string(traj.task)), tau}}}});
}

void print_criteria(const CriteriaReport& c, std::ostream& out) {
  out << "success            " << (c.success ? "true" : "false") << '\n'
      << "swingup_time [s]   " << format_double(c.swingup_time) << '\n'
      << "energy [J]         " << format_double(c.energy) << '\n'
      << "torque_cost        " << format_double(c.torque_cost) << '\n'
      << "torque_smoothness  " << format_double(c.torque_smoothness) << '\n'
      << "velocity_cost      " << format_double(c.velocity_cost) << '\n'
      << "score              " << format_double(c.score) << '\n';
}

Checkpoint load_for(const std::string& path, Settings& st, const KeyValueConfig& cfg) {
  Checkpoint ckpt = load_checkpoint(path);
  if (!cfg.find("env.task")) st.env.task = ckpt.task;
  return ckpt;
}

struct TrainArgs {
  Layers layers;
  std::string task, out;
  std::uint64_t seed = 0;
  std::int64_t frames = 0;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, CLI::App* cmd) {
  Settings st;
  auto [cfg, noise_cfg] = load_layers(a.layers);
  if (!noise_cfg.empty()) throw ConfigError("noise keys are not used by train", noise_cfg.entries().begin()->second.source);
  st.table.apply(cfg);
  if (!a.task.empty()) st.env.task = parse_actuation(a.task);
  if (cmd->count("--frames")) st.learner.total_frames = a.frames;
  if (cmd->count("--seed")) {
    st.seed = a.seed;
  } else if (!cfg.find("run.seed")) {
    st.seed = std::random_device{}();
    std::cerr << "no seed given, using " << st.seed << '\n';
  }
  st.validate();
  const fs::path dir = a.out.empty() ? fs::path(output_root()) / ("train-" + std::string(to_string(st.env.task)) +
                                                                   "-seed" + std::to_string(st.seed))
                                     : fs::path(a.out);
  write_snapshot(dir, st);

  TrainOptions opts;
  opts.learner = st.learner;
  opts.env = st.env;
  opts.eval = st.eval;
  opts.seed = st.seed;
  opts.out_dir = dir.string();
  opts.progress = a.quiet ? nullptr : &std::cerr;
  const TrainResult r = train(opts);
  std::cout << "iterations " << r.iterations << ", frames " << r.frames << '\n'
            << "best iteration " << r.best_iteration << ", score " << format_double(r.best_score) << '\n';
  print_criteria(r.best_criteria, std::cout);
  std::cout << "wrote " << r.best_checkpoint << ", " << r.final_checkpoint << '\n';
  return kExitOk;
}

struct EvalArgs {
  Layers layers;
  std::string checkpoint, noise_config, out;
};

int cmd_eval(const EvalArgs& a) {
  Settings st;
  auto [cfg, noise_cfg] = load_layers(a.layers, a.noise_config);
  st.table.apply(cfg);
  const Checkpoint ckpt = load_for(a.checkpoint, st, cfg);
  const NoiseSpec noise = load_noise_spec(noise_cfg);
  st.validate();
  const fs::path dir = a.out.empty() ? fs::path(output_root()) / "eval" : fs::path(a.out);
  write_snapshot(dir, st, &noise);

  const Trajectory traj = run_episode(ckpt, st.env, noise, st.eval);
  const CriteriaReport crit = compute_criteria(traj, st.eval);
  print_criteria(crit, std::cout);
  {
    std::ofstream f(dir / "trajectory.csv");
    write_trajectory_csv(traj, f);
  }
  {
    std::ofstream f(dir / "trajectory.svg");
    trajectory_svg(traj, std::string(to_string(traj.task)) + (noise.is_nominal() ? " swing-up" : " swing-up (noisy)"),
                   f);
  }
  {
    std::ofstream f(dir / "performance.csv");
    write_performance_csv({{fs::path(a.checkpoint).filename().string(), crit}}, f);
  }
  return kExitOk;
}

struct RobustArgs {
  Layers layers;
  std::string checkpoint, categories, out;
  int jobs = 1;
};

int cmd_robust(const RobustArgs& a) {
  Settings st;
  auto [cfg, noise_cfg] = load_layers(a.layers);
  if (!noise_cfg.empty()) throw ConfigError("noise keys are not used by robust (the sweep grid defines the noise)",
                                            noise_cfg.entries().begin()->second.source);
  st.table.apply(cfg);
  std::vector<RobustnessCategory> cats;
  if (a.categories.empty()) {
    cats = all_categories();
  } else {
    std::istringstream in(a.categories);
    std::string name;
    try {
      while (std::getline(in, name, ','))
        if (!name.empty()) cats.push_back(parse_category(name));
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what(), "--categories");
    }
    if (cats.size() < all_categories().size())
      std::cerr << "warning: overall score computed over " << cats.size() << " of " << all_categories().size()
                << " categories\n";
  }
  const Checkpoint ckpt = load_for(a.checkpoint, st, cfg);
  if (ckpt.task != st.env.task) throw CheckpointError("checkpoint task does not match env.task");
  st.validate();
  const fs::path dir = a.out.empty() ? fs::path(output_root()) / "robust" : fs::path(a.out);
  write_snapshot(dir, st);

  const RobustnessReport report =
      robustness_suite(ckpt.policy, ckpt.obs_stats, st.env, st.eval, st.sweep, cats, std::max(1, a.jobs));
  for (const auto& c : report.categories)
    std::cout << category_name(c.category) << ' ' << format_double(c.pass_rate) << " (" << c.points << " points)\n";
  std::cout << "overall " << format_double(report.overall) << '\n';
  const std::string label = fs::path(a.checkpoint).filename().string();
  {
    std::ofstream f(dir / "robustness.csv");
    write_robustness_csv({{label, report}}, f);
  }
  {
    std::ofstream f(dir / "robustness_points.csv");
    write_sweep_points_csv(report, f);
  }
  {
    std::ofstream f(dir / "robustness.svg");
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& c : report.categories) {
      labels.push_back(category_name(c.category));
      values.push_back(c.pass_rate);
    }
    svg::percent_bar_chart(f, "Robustness: " + label, labels, values);
  }
  return kExitOk;
}

struct SelftestArgs {
  std::string filter, out;
  std::vector<std::string> fixtures;
};

int cmd_selftest(const SelftestArgs& a) {
  const fs::path dir = a.out.empty() ? fs::path(output_root()) / "selftest" : fs::path(a.out);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "resolved_config.txt");
    f << "selftest.filter = " << a.filter << "\nselftest.fixtures = ";
    for (std::size_t i = 0; i < a.fixtures.size(); ++i) f << (i ? "," : "") << a.fixtures[i];
    f << '\n';
  }
  SelftestOptions opt;
  opt.filter = a.filter;
  opt.fixtures = a.fixtures;
  std::vector<SelftestCheck> checks;
  try {
    checks = run_selftest(opt);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what(), "--filter");
  }
  const bool ok = print_selftest(checks, std::cout);
  std::cout << (ok ? "all checks passed" : "SELFTEST FAILED") << '\n';
  return ok ? kExitOk : kExitFailure;
}

struct ExportArgs {
  std::string training_log, trajectory, task = "pendubot", checkpoint, policy_only, out;
  double dt = 0.01;
};

int cmd_export(const ExportArgs& a) {
  if (a.training_log.empty() && a.trajectory.empty() && a.policy_only.empty())
    throw ConfigError("nothing to export: give --training-log, --trajectory or --policy-only");
  const fs::path dir = a.out.empty() ? fs::path(output_root()) / "export" : fs::path(a.out);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "resolved_config.txt");
    f << "export.training_log = " << a.training_log << "\nexport.trajectory = " << a.trajectory
      << "\nexport.task = " << a.task << "\nexport.dt = " << format_double(a.dt)
      << "\nexport.checkpoint = " << a.checkpoint << "\nexport.policy_only = " << a.policy_only << '\n';
  }
  if (!a.training_log.empty()) {
    std::ifstream in(a.training_log);
    if (!in) throw ConfigError("cannot open training log '" + a.training_log + "'");
    std::string line;
    std::getline(in, line);
    if (line != kTrainingLogHeader) throw InvalidInput("'" + a.training_log + "' is not a training log");
    std::vector<double> frames, rho, rho_h, pl, vl, clip, log_std, score;
    while (std::getline(in, line)) {
      std::vector<double> f;
      std::istringstream row(line);
      std::string cell;
      while (std::getline(row, cell, ',')) f.push_back(cell == "nan" ? NAN : parse_double(cell));
      if (f.size() != 9) throw InvalidInput("malformed training log row '" + line + "'");
      frames.push_back(f[1]);
      rho.push_back(f[2]);
      rho_h.push_back(f[3]);
      pl.push_back(f[4]);
      vl.push_back(f[5]);
      clip.push_back(f[6]);
      log_std.push_back(f[7]);
      score.push_back(f[8]);
    }
    std::ofstream out(dir / "training_log.svg");
    svg::line_chart(out, "Training", frames, "frames",
                    {{"Gain estimates", "per step", {{"rho_hat", rho}, {"rho_H_hat", rho_h}}},
                     {"Losses", "loss", {{"policy", pl}, {"value", vl}}},
                     {"Clip fraction", "fraction", {{"clip_frac", clip}}},
                     {"Policy log std", "log std", {{"log_std", log_std}}},
                     {"Evaluation score", "score", {{"eval_score", score}}}});
    std::cout << "wrote " << (dir / "training_log.svg").string() << '\n';
  }
  if (!a.trajectory.empty()) {
    std::ifstream in(a.trajectory);
    if (!in) throw ConfigError("cannot open trajectory '" + a.trajectory + "'");
    const Trajectory traj = read_trajectory_csv(in, parse_actuation(a.task), a.dt);
    std::ofstream out(dir / "trajectory.svg");
    trajectory_svg(traj, a.task + " trajectory", out);
    std::cout << "wrote " << (dir / "trajectory.svg").string() << '\n';
  }
  if (!a.policy_only.empty()) {
    if (a.checkpoint.empty()) throw ConfigError("--policy-only needs --checkpoint");
    save_checkpoint(load_checkpoint(a.checkpoint).policy_only(), a.policy_only);
    std::cout << "wrote " << a.policy_only << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Average-reward entropy-advantage PPO for acrobot/pendubot swing-up.\n"
               "Default output root: $AREAPO_OUTPUT_ROOT (or ./runs)."};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a controller");
  add_layer_options(train_cmd, train_args.layers);
  train_cmd->add_option("--task", train_args.task, "acrobot or pendubot")
      ->check(CLI::IsMember({"acrobot", "pendubot"}));
  train_cmd->add_option("--seed", train_args.seed, "Seed (random and logged when omitted)");
  train_cmd->add_option("--frames", train_args.frames, "Total environment frames");
  train_cmd->add_option("--out", train_args.out, "Output directory");
  train_cmd->add_flag("--quiet", train_args.quiet, "No progress lines on stderr");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one episode");
  add_layer_options(eval_cmd, eval_args.layers);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--noise-config", eval_args.noise_config, "Config file with noise.* keys");
  eval_cmd->add_option("--out", eval_args.out, "Output directory");

  RobustArgs robust_args;
  auto* robust_cmd = app.add_subcommand("robust", "Run the robustness sweep");
  add_layer_options(robust_cmd, robust_args.layers);
  robust_cmd->add_option("--checkpoint", robust_args.checkpoint, "Checkpoint file")->required();
  robust_cmd->add_option("--categories", robust_args.categories,
                         "Comma-separated subset of model, velocity_noise, torque_noise, torque_step_response, "
                         "time_delay (delay), perturbations");
  robust_cmd->add_option("--jobs", robust_args.jobs, "Worker threads");
  robust_cmd->add_option("--out", robust_args.out, "Output directory");

  SelftestArgs selftest_args;
  auto* selftest_cmd = app.add_subcommand("selftest", "Run oracle, physics, gradient and reward checks");
  selftest_cmd->add_option("--filter", selftest_args.filter, "Comma-separated groups: oracle, physics, gradient, reward");
  selftest_cmd->add_option("--fixture", selftest_args.fixtures, "Extra MDP fixture file (repeatable)");
  selftest_cmd->add_option("--out", selftest_args.out, "Output directory");

  ExportArgs export_args;
  auto* export_cmd = app.add_subcommand("export", "Render logs and trajectories, strip checkpoints");
  export_cmd->add_option("--training-log", export_args.training_log, "training_log.csv to plot");
  export_cmd->add_option("--trajectory", export_args.trajectory, "trajectory.csv to plot");
  export_cmd->add_option("--task", export_args.task, "Task of the trajectory")
      ->check(CLI::IsMember({"acrobot", "pendubot"}));
  export_cmd->add_option("--dt", export_args.dt, "Trajectory time step");
  export_cmd->add_option("--checkpoint", export_args.checkpoint, "Checkpoint to strip");
  export_cmd->add_option("--policy-only", export_args.policy_only, "Write a policy-only copy here");
  export_cmd->add_option("--out", export_args.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, train_cmd);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*robust_cmd) return cmd_robust(robust_args);
    if (*selftest_cmd) return cmd_selftest(selftest_args);
    if (*export_cmd) return cmd_export(export_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
