#include "lqrtune/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "lqrtune/presets.hpp"

namespace lqrtune {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string preset = "good2d";
  std::string config_path;
  std::uint64_t seed = 0;
  double horizon = -1.0;
  double burn_in = -1.0;
};

struct TuneOptions {
  int iterations = -1;
  std::string out_dir;
  int representers = -1;
  int mc_samples = -1;
  int quadrature_order = -1;
  int extra_candidates = -1;
  bool no_corners = false;
  bool corners = false;
  bool no_wall_time = false;
  bool save_trajectories = false;
  bool no_trace = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--preset", o.preset, "good2d | poor2d | poor4d | custom");
  cmd->add_option("--config", o.config_path, "JSON config file; flags override its keys");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--horizon", o.horizon, "Episode length in seconds");
  cmd->add_option("--burn-in", o.burn_in, "Initial seconds excluded from the cost");
}

ExperimentPreset resolve(const CLI::App* cmd, const CommonOptions& o) {
  ExperimentPreset p;
  const bool preset_flag = cmd->count("--preset") > 0;
  if (!o.config_path.empty()) {
    p = load_config_file(o.config_path, o.preset, preset_flag);
  } else {
    p = make_preset(o.preset);
  }
  if (cmd->count("--seed")) p.config.seed = o.seed;
  if (o.horizon >= 0.0) p.config.episode.horizon_s = o.horizon;
  if (o.burn_in >= 0.0) p.config.episode.burn_in_s = o.burn_in;
  return p;
}

std::string format_vec(const Eigen::VectorXd& v) {
  std::ostringstream s;
  s << std::setprecision(4) << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) s << (i ? ", " : "") << v[i];
  s << ']';
  return s.str();
}

Eigen::VectorXd theta_for(const TunerConfig& cfg, const std::string& text) {
  const Eigen::VectorXd theta = parse_vector(text);
  if (theta.size() != cfg.design_map.dim()) {
    throw ConfigError("theta needs " + std::to_string(cfg.design_map.dim()) + " entries");
  }
  if (!cfg.design_map.domain.contains(theta)) {
    throw ConfigError("theta " + format_vec(theta) + " is outside the design domain");
  }
  return theta;
}

int cmd_tune(const CLI::App* cmd, const CommonOptions& common, const TuneOptions& o, std::ostream& out,
             std::ostream& err) {
  ExperimentPreset p = resolve(cmd, common);
  TunerConfig& cfg = p.config;
  if (o.iterations >= 0) cfg.n_iterations = o.iterations;
  if (o.representers >= 0) cfg.representers = o.representers;
  if (o.mc_samples >= 0) cfg.mc_samples = o.mc_samples;
  if (o.quadrature_order >= 0) cfg.quadrature_order = o.quadrature_order;
  if (o.extra_candidates >= 0) cfg.extra_candidates = o.extra_candidates;
  if (o.no_corners) cfg.init_corner_evals = false;
  if (o.corners) cfg.init_corner_evals = true;
  if (o.no_wall_time) cfg.record_wall_time = false;
  cfg.episode.record_trajectory = o.save_trajectories;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  fs::path dir = o.out_dir;
  if (dir.empty()) {
    const char* env = std::getenv("LQR_AUTOTUNE_OUT");
    dir = env && *env ? fs::path(env) : fs::path("lqr_autotune_out");
  }
  fs::create_directories(dir);
  if (!o.no_trace) fs::create_directories(dir / "trace");
  if (o.save_trajectories) fs::create_directories(dir / "trajectories");

  {
    std::ofstream cfg_out(dir / "config.json");
    cfg_out << config_to_json(cfg, p.name).dump(2) << '\n';
  }
  std::ofstream history(dir / "history.csv");
  const int D = cfg.design_map.dim();
  write_history_header(history, D);

  TuningCallbacks callbacks;
  callbacks.on_record = [&](const IterationRecord& rec) {
    write_history_row(history, rec, D);
    history.flush();
    if (o.quiet) return;
    out << (rec.initial ? "init " : "iter ") << std::setw(3) << rec.index << "  theta=" << format_vec(rec.theta)
        << "  J=" << std::setprecision(5) << rec.j_hat << (rec.stable ? "" : " (unstable)");
    if (rec.best_guess) {
      out << "  best_guess=" << format_vec(*rec.best_guess) << " (mean " << std::setprecision(5)
          << *rec.best_guess_mean << ")";
    }
    out << '\n';
  };
  if (!o.no_trace) {
    callbacks.on_trace = [&](const AcquisitionTrace& t) {
      std::ostringstream name;
      name << "iter_" << std::setw(4) << std::setfill('0') << t.iteration << ".json";
      std::ofstream f(dir / "trace" / name.str());
      f << trace_to_json(t).dump() << '\n';
    };
  }
  if (o.save_trajectories) {
    callbacks.on_episode = [&](const IterationRecord& rec, const CostEvaluation& ev) {
      std::ostringstream name;
      name << "eval_" << std::setw(4) << std::setfill('0') << rec.index << ".csv";
      std::ofstream f(dir / "trajectories" / name.str());
      f << std::setprecision(10);
      write_trajectory_csv(f, ev.trajectory);
    };
  }

  const TuningResult result = run_tuning(cfg, callbacks);
  {
    std::ofstream f(dir / "surrogate_final.json");
    f << surrogate_to_json(result.hyper, result.data, cfg.design_map.domain).dump(2) << '\n';
  }
  out << "best guess " << format_vec(result.best_guess) << " predicted cost " << std::setprecision(5)
      << result.best_guess_mean << "\nrun artifact written to " << dir.string() << '\n';
  if (result.aborted) {
    err << "error: run aborted: " << result.abort_reason << '\n';
    return exit_code::kAborted;
  }
  return exit_code::kOk;
}

int cmd_validate(const CLI::App* cmd, const CommonOptions& common, const std::string& theta_text, int episodes,
                 const std::string& csv_path, std::ostream& out) {
  ExperimentPreset p = resolve(cmd, common);
  const Eigen::VectorXd theta = theta_for(p.config, theta_text);
  if (episodes < 1) throw ConfigError("--episodes must be at least 1");
  std::optional<TuningContext> ctx;
  try {
    ctx.emplace(p.config);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const ValidationResult v = validate_controller(theta, *ctx, episodes, p.config.seed);

  out << std::left << std::setw(28) << "theta" << std::setw(12) << "mean" << std::setw(12) << "std"
      << "stable\n";
  std::ostringstream mean, sd;
  mean << std::setprecision(5) << v.mean;
  sd << std::setprecision(5) << v.std;
  out << std::setw(28) << format_vec(theta) << std::setw(12) << mean.str() << std::setw(12) << sd.str()
      << v.stable_count << '/' << episodes << '\n'
      << std::right << "J = " << mean.str() << " +- " << sd.str() << '\n';

  if (!csv_path.empty()) {
    std::ofstream f(csv_path);
    if (!f) throw ConfigError("cannot write '" + csv_path + "'");
    f << std::setprecision(12) << "episode,j_hat,stable\n";
    for (std::size_t e = 0; e < v.costs.size(); ++e) {
      f << e << ',' << v.costs[e] << ',' << (v.stable_flags[e] ? 1 : 0) << '\n';
    }
    f << "mean," << v.mean << ",\nstd," << v.std << ",\n";
  }
  return exit_code::kOk;
}

int cmd_simulate(const CLI::App* cmd, const CommonOptions& common, const std::string& theta_text,
                 const std::string& gain_text, double duration, const std::string& out_path, int stride,
                 std::ostream& out) {
  ExperimentPreset p = resolve(cmd, common);
  TunerConfig& cfg = p.config;
  if (duration >= 0.0) cfg.episode.horizon_s = duration;
  cfg.episode.burn_in_s = std::min(cfg.episode.burn_in_s, cfg.episode.horizon_s);
  cfg.episode.record_trajectory = true;
  if (stride < 1) throw ConfigError("--stride must be at least 1");

  std::optional<TuningContext> ctx;
  try {
    ctx.emplace(cfg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  ControllerGain gain;
  if (!gain_text.empty()) {
    if (gain_text == "zero") {
      gain.F = Eigen::MatrixXd::Zero(1, 4);
      gain.Fz = 0.0;
    } else {
      const Eigen::VectorXd g = parse_vector(gain_text);
      if (g.size() != 4 && g.size() != 5) throw ConfigError("--gain needs 4 entries (F) or 5 (F, Fz)");
      gain.F = g.head(4).transpose();
      gain.Fz = g.size() == 5 ? g[4] : cfg.Fz;
    }
  } else if (!theta_text.empty()) {
    gain = synthesize(theta_for(cfg, theta_text), *ctx);
  } else {
    throw ConfigError("simulate needs --theta or --gain");
  }

  const CostEvaluation ev = run_episode(gain, cfg.plant, cfg.episode, cfg.performance, cfg.limits, cfg.seed);
  std::ofstream f(out_path);
  if (!f) throw ConfigError("cannot write '" + out_path + "'");
  f << std::setprecision(10);
  write_trajectory_csv(f, ev.trajectory, stride);

  out << "gain F=" << format_vec(gain.F.row(0).transpose()) << " Fz=" << gain.Fz << '\n'
      << (ev.stable ? "stable" : "unstable");
  if (!ev.stable) out << " (" << to_string(*ev.violation) << " bound at step " << *ev.failure_step << ")";
  out << ", steps " << ev.steps_run << ", J = " << std::setprecision(6) << ev.j_hat << '\n'
      << "trajectory written to " << out_path << '\n';
  return exit_code::kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Automatic LQR tuning with Entropy Search on a simulated balancing pole"};
  app.require_subcommand(1);

  CommonOptions common;
  TuneOptions tune;
  auto* tune_cmd = app.add_subcommand("tune", "Run the tuning loop and write a run artifact");
  add_common(tune_cmd, common);
  tune_cmd->add_option("--iterations", tune.iterations, "Loop iterations after the initial evaluations");
  tune_cmd->add_option("--out", tune.out_dir, "Output directory (default $LQR_AUTOTUNE_OUT)");
  tune_cmd->add_option("--representers", tune.representers);
  tune_cmd->add_option("--mc-samples", tune.mc_samples);
  tune_cmd->add_option("--quadrature-order", tune.quadrature_order);
  tune_cmd->add_option("--extra-candidates", tune.extra_candidates);
  tune_cmd->add_flag("--no-corners", tune.no_corners, "Skip the domain-corner evaluations");
  tune_cmd->add_flag("--corners", tune.corners, "Evaluate the domain corners first");
  tune_cmd->add_flag("--no-wall-time", tune.no_wall_time, "Write wall_ms as 0 (byte-reproducible history)");
  tune_cmd->add_flag("--save-trajectories", tune.save_trajectories);
  tune_cmd->add_flag("--no-trace", tune.no_trace, "Skip per-iteration acquisition traces");
  tune_cmd->add_flag("--quiet", tune.quiet);

  std::string theta_text;
  int episodes = 5;
  std::string csv_path;
  auto* validate_cmd = app.add_subcommand("validate", "Evaluate one controller over several episodes");
  add_common(validate_cmd, common);
  validate_cmd->add_option("--theta", theta_text, "Design parameters, comma separated")->required();
  validate_cmd->add_option("--episodes", episodes);
  validate_cmd->add_option("--csv", csv_path, "Per-episode costs");

  std::string gain_text;
  double duration = -1.0;
  std::string traj_path = "trajectory.csv";
  int stride = 1;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate one episode and write its trajectory");
  add_common(sim_cmd, common);
  sim_cmd->add_option("--theta", theta_text, "Design parameters, comma separated");
  sim_cmd->add_option("--gain", gain_text, "'zero' or F1,F2,F3,F4[,Fz]");
  sim_cmd->add_option("--duration", duration, "Seconds (default: preset horizon)");
  sim_cmd->add_option("--out", traj_path, "Trajectory CSV path");
  sim_cmd->add_option("--stride", stride, "Write every n-th step");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::kOk : exit_code::kUsage;
  }

  try {
    if (tune_cmd->parsed()) return cmd_tune(tune_cmd, common, tune, out, err);
    if (validate_cmd->parsed()) return cmd_validate(validate_cmd, common, theta_text, episodes, csv_path, out);
    if (sim_cmd->parsed()) {
      return cmd_simulate(sim_cmd, common, theta_text, gain_text, duration, traj_path, stride, out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kAborted;
  }
  return exit_code::kUsage;
}

}  // namespace lqrtune
