// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "lqrtune/auto_tuner.hpp"
#include "lqrtune/cli.hpp"
#include "lqrtune/entropy_search.hpp"
#include "lqrtune/gp_model.hpp"
#include "lqrtune/lqr_core.hpp"
#include "lqrtune/plant_sim.hpp"
#include "lqrtune/presets.hpp"

using namespace lqrtune;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Detail {
 public:
  template <typename T>
  Detail& operator<<(const T& v) {
    s_ << v;
    return *this;
  }
  std::string str() const { return s_.str(); }

 private:
  std::ostringstream s_;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

NominalModel scalar_model(double a, double b) {
  return {Eigen::MatrixXd::Constant(1, 1, a), Eigen::MatrixXd::Constant(1, 1, b), 0.001};
}

Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = normal(rng);
  return G * G.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

Hyperparams hyper(const Eigen::VectorXd& ls, double sigma, double sigma_n) {
  Hyperparams h;
  h.lengthscales = ls;
  h.signal_std = sigma;
  h.noise_std = sigma_n;
  return h;
}

// ---------------------------------------------------------------------------

Outcome c1_dare_oracle() {
  const auto t0 = Clock::now();
  const NominalModel m = scalar_model(1.0, 1.0);
  const WeightPair w{Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1)};
  const double P = solve_dare(m, w)(0, 0);
  const double F = lqr_gain(m, w).F(0, 0);
  const double p_err = std::abs(P - (1.0 + std::sqrt(5.0)) / 2.0);
  const double f_err = std::abs(F + (std::sqrt(5.0) - 1.0) / 2.0);
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = p_err <= 1e-8 && f_err <= 1e-8 && t < 1.0;
  o.detail = (Detail() << "|P-golden|=" << p_err << " |F+(sqrt5-1)/2|=" << f_err << " in " << t << " s").str();
  return o;
}

Outcome c2_scale_invariance() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> log_c(std::log(1e-3), std::log(1e3));
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 4;
    const int nu = 1 + trial % 2;
    NominalModel model{Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, nu), 0.01};
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) model.A(i, j) = 0.7 * normal(rng);
      for (int j = 0; j < nu; ++j) model.B(i, j) = normal(rng);
    }
    const WeightPair w{random_spd(n, rng), random_spd(nu, rng)};
    const double c = std::exp(log_c(rng));
    const WeightPair wc{c * w.Wx, c * w.Wu};
    worst = std::max(worst, (lqr_gain(model, w).F - lqr_gain(model, wc).F).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-8, (Detail() << "20 triples, max |dF| = " << worst).str()};
}

Outcome c3_stability_sweep() {
  const auto t0 = Clock::now();
  const NominalModel model = linearize_and_discretize(PoleParams::short_pole(), 0.001);
  const DesignWeightMap map = DesignWeightMap::two_d();
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const Eigen::Vector2d theta(0.01 + i * 9.99 / 4.0, 0.01 + j * 9.99 / 4.0);
      worst = std::max(worst, closed_loop_spectral_radius(model, lqr_gain(model, design_weights(map, theta))));
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1.0 && t < 10.0,
          (Detail() << "max spectral radius over 5x5 grid = " << std::setprecision(12) << worst
                    << std::setprecision(6) << " in " << t << " s")
              .str()};
}

Outcome c4_energy() {
  PoleParams p = PoleParams::short_pole();
  p.xi = 0.0;
  const auto energy = [&](const PlantState& x) {
    return 0.5 * p.m * p.r * p.r * x.psi_dot * x.psi_dot + p.m * p.g * p.r * std::cos(x.psi);
  };
  double worst = 0.0;
  for (const PlantState start : {PlantState{0.01, 0, 0, 0, 0}, PlantState{0.3, 0, 0, 0, 0},
                                 PlantState{1.0, -2.0, 0, 0, 0}, PlantState{3.0, 0.5, 0, 0, 0}}) {
    PlantState x = start;
    const double e0 = energy(x);
    for (int k = 0; k < 10000; ++k) {
      x = rk4_step(x, 0.0, p, 0.001);
      worst = std::max(worst, std::abs(energy(x) - e0) / std::abs(e0));
    }
  }
  return {worst <= 1e-6, (Detail() << "4 initial conditions, 10 s at 1 ms, max relative drift = " << worst).str()};
}

Outcome c5_gp_exactness() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0), dom(0.01, 10.0);
  std::normal_distribution<double> normal;

  double interp = 0.0;
  std::vector<GpSurrogate> exact;
  for (int trial = 0; trial < 20; ++trial) {
    Dataset d{Eigen::MatrixXd(10, 2), Eigen::VectorXd(10)};
    for (int i = 0; i < 10; ++i) {
      d.X.row(i) << dom(rng), dom(rng);
      d.y[i] = normal(rng);
    }
    exact.emplace_back(hyper(Eigen::Vector2d(1.0, 1.0), 1.0, 1e-8), d);
    for (int i = 0; i < 10; ++i) {
      interp = std::max(interp, std::abs(exact.back().posterior(d.X.row(i).transpose()).mean - d.y[i]));
    }
  }

  double lml_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Dataset s{Eigen::MatrixXd(3, 2), Eigen::VectorXd(3)};
    for (int i = 0; i < 3; ++i) {
      s.X.row(i) << dom(rng), dom(rng);
      s.y[i] = 0.2 * normal(rng);
    }
    const Hyperparams h = hyper(Eigen::Vector2d(1.0 + 3 * unit(rng), 1.0 + 3 * unit(rng)), 0.1 + unit(rng), 0.033);
    Eigen::MatrixXd C(3, 3);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const Eigen::Vector2d z = (s.X.row(i) - s.X.row(j)).transpose().cwiseQuotient(h.lengthscales);
        C(i, j) = h.signal_std * h.signal_std * std::exp(-0.5 * z.squaredNorm());
      }
    }
    C.diagonal().array() += h.noise_std * h.noise_std + GpSurrogate::kJitter * h.signal_std * h.signal_std;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(C);
    const double dense = -0.5 * s.y.dot(lu.inverse() * s.y) - 0.5 * std::log(lu.determinant()) -
                         1.5 * std::log(2.0 * M_PI);
    lml_err = std::max(lml_err, std::abs(GpSurrogate(h, s).log_marginal_likelihood() - dense));
  }

  double var_excess = -1e300;
  const GpSurrogate gp(hyper(Eigen::Vector2d(2.5, 2.5), 0.2, 0.033), [&] {
    Dataset e{Eigen::MatrixXd(8, 2), Eigen::VectorXd(8)};
    for (int i = 0; i < 8; ++i) {
      e.X.row(i) << dom(rng), dom(rng);
      e.y[i] = 0.1 * normal(rng);
    }
    return e;
  }());
  for (int q = 0; q < 2000; ++q) {
    var_excess = std::max(var_excess, gp.posterior(Eigen::Vector2d(dom(rng), dom(rng))).variance - 0.04);
  }
  for (const GpSurrogate& e : exact) {
    for (int i = 0; i < 10; ++i) {
      var_excess = std::max(var_excess, e.posterior(e.data().X.row(i).transpose()).variance - 1.0);
    }
  }

  return {interp <= 1e-8 && lml_err <= 1e-10 && var_excess <= 0.0,
          (Detail() << "20 datasets, interpolation err " << interp << ", LML vs dense density " << lml_err
                    << ", max(var - sigma^2) " << var_excess)
              .str()};
}

Outcome c6_pmin() {
  const auto h1 = [](double l, double s, double n) { return hyper(Eigen::VectorXd::Constant(1, l), s, n); };
  const auto reps1 = [](std::initializer_list<double> xs) {
    RepresenterSet r;
    r.points.resize(static_cast<Eigen::Index>(xs.size()), 1);
    int i = 0;
    for (double x : xs) r.points(i++, 0) = x;
    return r;
  };

  double norm_err = 0.0;
  const Box box{Eigen::Vector2d(0.01, 0.01), Eigen::Vector2d(10, 10)};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Dataset d{Eigen::MatrixXd(4, 2), Eigen::VectorXd(4)};
    d.X << 1, 1, 3, 8, 7, 2, 9, 9;
    d.y << 0.1, 0.05, 0.2, 0.15;
    const GpSurrogate gp(hyper(Eigen::Vector2d(2.5, 2.5), 0.2, 0.033), d);
    const PminDistribution p = approximate_pmin(gp, build_representers(box, gp, 400, seed), 2000, seed);
    norm_err = std::max(norm_err, std::abs(p.probs.sum() - 1.0));
  }

  const int n = 10000;
  const GpSurrogate prior(h1(0.3, 1.0, 0.1), Dataset{Eigen::MatrixXd(0, 1), Eigen::VectorXd(0)});
  const PminDistribution sym = approximate_pmin(prior, reps1({0.25, 0.75}), n, 6);
  const double sym_dev = std::abs(sym.probs[0] - 0.5) / std::sqrt(0.25 / n);
  norm_err = std::max(norm_err, std::abs(sym.probs.sum() - 1.0));

  Dataset sep{Eigen::MatrixXd(2, 1), Eigen::VectorXd(2)};
  sep.X << 2.0, 7.0;
  sep.y << 0.0, 10.0;
  const GpSurrogate sharp(h1(0.1, 10.0, 1e-3), sep);
  const PminDistribution far = approximate_pmin(sharp, reps1({2.0, 7.0}), n, 7);
  norm_err = std::max(norm_err, std::abs(far.probs.sum() - 1.0));

  return {norm_err <= 1e-9 && sym_dev <= 3.0 && far.probs[0] >= 0.999,
          (Detail() << "normalization err " << norm_err << ", symmetric case " << sym.probs[0] << " ("
                    << sym_dev << " MC std errors), separated case " << far.probs[0])
              .str()};
}

Outcome c7_relative_entropy() {
  const double u = relative_entropy({Eigen::VectorXd::Constant(50, 1.0 / 50)});
  PminDistribution delta{Eigen::VectorXd::Zero(50)};
  delta.probs[3] = 1.0;
  const double d = relative_entropy(delta);
  const double two = relative_entropy({Eigen::Vector2d(0.75, 0.25)});
  const bool pass = u == 0.0 && d == std::log(50.0) && std::abs(two - 0.130812) <= 1e-6;
  return {pass, (Detail() << "uniform " << u << ", delta " << d << " (log M = " << std::log(50.0)
                          << "), [0.75, 0.25] -> " << std::setprecision(10) << two)
                    .str()};
}

Outcome c8_baselines() {
  const double pi = baseline_acquisition(Baseline::PI, 1.0, 0.7, 1.0);
  const double ei0 = baseline_acquisition(Baseline::EI, 0.25, 0.0, 1.5);
  const double ei = baseline_acquisition(Baseline::EI, 1.0, 1.0, 1.5);
  const bool pass = std::abs(pi - 0.5) <= 1e-5 && std::abs(ei0 - 1.25) <= 1e-5 && std::abs(ei - 0.697796) <= 1e-5;
  return {pass, (Detail() << "PI(mu=inc) " << pi << ", EI(std=0) " << ei0 << ", EI(1,1,1.5) "
                          << std::setprecision(8) << ei)
                    .str()};
}

// ---------------------------------------------------------------------------

struct Run {
  TuningResult result;
  std::string history_csv;
};

Run tune(const std::string& preset, std::uint64_t seed) {
  TunerConfig cfg = make_preset(preset).config;
  cfg.seed = seed;
  cfg.record_wall_time = false;
  Run run;
  std::ostringstream csv;
  write_history_header(csv, cfg.design_map.dim());
  TuningCallbacks cb;
  cb.on_record = [&](const IterationRecord& rec) { write_history_row(csv, rec, cfg.design_map.dim()); };
  run.result = run_tuning(cfg, cb);
  run.history_csv = csv.str();
  return run;
}

std::uint64_t validation_seed(std::uint64_t master) { return derive_seed(master, 0, seed_stream::kValidation); }

std::map<std::uint64_t, Run> good_runs;

Outcome c9_good_model() {
  Outcome o;
  Detail d;
  int wins = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto t0 = Clock::now();
    Run run = tune("good2d", seed);
    const TuningContext ctx(make_preset("good2d").config);
    const ValidationResult v0 = validate_controller(ctx.config.theta0, ctx, 5, validation_seed(seed));
    const ValidationResult vb = validate_controller(run.result.best_guess, ctx, 5, validation_seed(seed));
    const bool win = vb.mean < v0.mean;
    wins += win;
    d << "seed " << seed << ": theta0 " << v0.mean << " +- " << v0.std << ", best guess ["
      << run.result.best_guess.transpose() << "] " << vb.mean << " +- " << vb.std << " (" << vb.stable_count
      << "/5 stable, " << std::setprecision(3) << seconds_since(t0) << std::setprecision(6) << " s); ";
    good_runs[seed] = std::move(run);
  }
  o.pass = wins == 3;
  d << wins << "/3 improved";
  o.detail = d.str();
  return o;
}

Outcome c10_poor_model() {
  Outcome o;
  Detail d;
  int good = 0;
  bool theta0_unstable = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    const Run run = tune("poor2d", seed);
    const IterationRecord& first = run.result.history.front();
    const bool unstable0 = !first.stable && first.j_hat == 3.0;
    theta0_unstable = theta0_unstable && unstable0;
    const TuningContext ctx(make_preset("poor2d").config);
    const ValidationResult v0 = validate_controller(ctx.config.theta0, ctx, 5, validation_seed(seed));
    const ValidationResult vb = validate_controller(run.result.best_guess, ctx, 5, validation_seed(seed));
    const bool ok = vb.stable_count == 5 && vb.mean < 3.0;
    good += ok;
    d << "seed " << seed << ": theta0 row stable=" << first.stable << " j_hat=" << first.j_hat
      << " (validation " << v0.mean << ", " << v0.stable_count << "/5 stable), best guess ["
      << run.result.best_guess.transpose() << "] " << vb.mean << " +- " << vb.std << " (" << vb.stable_count
      << "/5 stable); ";
  }
  o.pass = theta0_unstable && good >= 2;
  d << "theta0 unstable at J_u in all runs: " << (theta0_unstable ? "yes" : "no") << ", best guess ok in "
    << good << "/3";
  o.detail = d.str();
  return o;
}

Outcome c11_four_d() {
  const auto t0 = Clock::now();
  const Run run = tune("poor4d", 1);
  const TuningContext ctx(make_preset("poor4d").config);
  const ValidationResult vb = validate_controller(run.result.best_guess, ctx, 5, validation_seed(1));
  const IterationRecord& first = run.result.history.front();
  Outcome o;
  o.pass = !run.result.aborted && run.result.history.size() == 47u && vb.stable_count == 5 && vb.mean < 5.0;
  o.detail = (Detail() << run.result.history.size() << " evaluations, best guess ["
                       << run.result.best_guess.transpose() << "] " << vb.mean << " +- " << vb.std << " ("
                       << vb.stable_count << "/5 stable); theta0 row stable=" << first.stable
                       << " j_hat=" << first.j_hat << "; " << std::setprecision(4) << seconds_since(t0) << " s")
                  .str();
  return o;
}

Outcome c12_determinism() {
  if (!good_runs.count(1)) good_runs[1] = tune("good2d", 1);
  const fs::path dir = fs::temp_directory_path() / "lqrtune_acceptance_c12";
  fs::remove_all(dir);
  std::ostringstream out, err;
  const int code = run_cli({"lqr_autotune", "tune", "--preset", "good2d", "--iterations", "20", "--seed", "1",
                            "--no-wall-time", "--no-trace", "--quiet", "--out", dir.string()},
                           out, err);
  std::ifstream in(dir / "history.csv", std::ios::binary);
  const std::string cli_csv{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  fs::remove_all(dir);
  const std::string& lib_csv = good_runs[1].history_csv;
  Outcome o;
  o.pass = code == 0 && cli_csv == lib_csv;
  o.detail = (Detail() << "seed 1 history.csv: " << lib_csv.size() << " bytes in-process vs " << cli_csv.size()
                       << " bytes via CLI, " << (cli_csv == lib_csv ? "identical" : "DIFFERENT"))
                  .str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"DARE analytic oracle", c1_dare_oracle},
      {"LQR scale invariance", c2_scale_invariance},
      {"nominal stability sweep", c3_stability_sweep},
      {"simulator energy conservation", c4_energy},
      {"GP exactness", c5_gp_exactness},
      {"p_min properties", c6_pmin},
      {"relative entropy bounds", c7_relative_entropy},
      {"PI/EI closed forms", c8_baselines},
      {"good2d end-to-end improvement", c9_good_model},
      {"poor2d end-to-end", c10_poor_model},
      {"poor4d run completes", c11_four_d},
      {"history.csv determinism", c12_determinism},
  };

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  std::cout << std::setprecision(6);
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << std::setw(2) << id << ". " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all selected criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
