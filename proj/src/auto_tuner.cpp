#include "lqrtune/auto_tuner.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <random>

namespace lqrtune {

DesignWeightMap DesignWeightMap::two_d() {
  DesignWeightMap m;
  m.kind = Kind::TwoD;
  m.offset = Eigen::Vector4d(1.0, 0.0, 10.0, 0.0);
  m.coeff = Eigen::Vector4d(0.0, 50.0, 0.0, 50.0);
  m.index = Eigen::Vector4i(-1, 0, -1, 1);
  m.wu = 10.0;
  m.domain = Box{Eigen::VectorXd::Constant(2, 0.01), Eigen::VectorXd::Constant(2, 10.0)};
  return m;
}

DesignWeightMap DesignWeightMap::four_d() {
  DesignWeightMap m;
  m.kind = Kind::FourD;
  m.offset = Eigen::Vector4d::Zero();
  m.coeff = Eigen::Vector4d(1.0, 25.0, 10.0, 25.0);
  m.index = Eigen::Vector4i(0, 1, 2, 3);
  m.wu = 10.0;
  m.domain = Box{Eigen::VectorXd::Constant(4, 0.01), Eigen::VectorXd::Constant(4, 10.0)};
  return m;
}

void DesignWeightMap::validate() const {
  domain.validate();
  if (!(wu > 0.0)) throw std::invalid_argument("Wu must be positive");
  for (int i = 0; i < 4; ++i) {
    const int j = index[i];
    if (j < -1 || j >= dim()) throw std::invalid_argument("design weight index out of range");
    // Linear in theta_j, so the box endpoints bound the entry.
    const double lo = j < 0 ? offset[i] : offset[i] + std::min(coeff[i] * domain.lower[j], coeff[i] * domain.upper[j]);
    if (!(lo > 0.0)) throw std::invalid_argument("design weights not positive definite on the domain");
  }
}

std::string to_string(DesignWeightMap::Kind kind) {
  switch (kind) {
    case DesignWeightMap::Kind::TwoD: return "2d";
    case DesignWeightMap::Kind::FourD: return "4d";
    case DesignWeightMap::Kind::Custom: return "custom";
  }
  return "custom";
}

WeightPair design_weights(const DesignWeightMap& map, const Eigen::VectorXd& theta) {
  if (!map.domain.contains(theta)) throw OutOfDomain("theta outside the design domain");
  Eigen::Vector4d diag;
  for (int i = 0; i < 4; ++i) {
    diag[i] = map.offset[i] + (map.index[i] >= 0 ? map.coeff[i] * theta[map.index[i]] : 0.0);
  }
  return {diag.asDiagonal().toDenseMatrix(), Eigen::MatrixXd::Constant(1, 1, map.wu)};
}

void TunerConfig::validate() const {
  design_map.validate();
  if (theta0.size() != design_map.dim() || !design_map.domain.contains(theta0)) {
    throw std::invalid_argument("theta0 must lie in the design domain");
  }
  if (n_iterations < 1) throw std::invalid_argument("n_iterations must be at least 1");
  priors.lengthscale.validate();
  priors.signal_std.validate();
  priors.noise_std.validate();
  plant.validate();
  nominal.validate();
  performance.validate();
  episode.validate();
  limits.validate();
  if (representers < 2) throw std::invalid_argument("need at least two representers");
  if (mc_samples < 1) throw std::invalid_argument("need at least one Monte Carlo sample");
  if (quadrature_order < 1 || quadrature_order > 16) throw std::invalid_argument("quadrature order must be in [1, 16]");
  if (extra_candidates < 0) throw std::invalid_argument("extra_candidates must be non-negative");
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream) {
  const auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ index) ^ (stream * 0xd1b54a32d192ed03ULL));
}

TuningContext::TuningContext(TunerConfig cfg) : config(std::move(cfg)) {
  config.validate();
  nominal_model = linearize_and_discretize(config.nominal, config.episode.dt);
}

ControllerGain synthesize(const Eigen::VectorXd& theta, const TuningContext& ctx) {
  return lqr_gain(ctx.nominal_model, design_weights(ctx.config.design_map, theta), ctx.config.Fz);
}

Evaluation cost_evaluation(const Eigen::VectorXd& theta, const TuningContext& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.config;
  Evaluation out;
  ControllerGain gain;
  try {
    gain = synthesize(theta, ctx);
  } catch (const NonConvergence& e) {
    std::cerr << "warning: LQR synthesis failed at theta = " << theta.transpose() << ": " << e.what()
              << "; scoring as unstable\n";
    out.synthesis_failed = true;
    out.cost.stable = false;
    out.cost.failure_step = 0;
    out.cost.j_hat = cfg.episode.j_unstable;
    return out;
  }
  out.cost = run_episode(gain, cfg.plant, cfg.episode, cfg.performance, cfg.limits, seed);
  return out;
}

namespace {

Eigen::VectorXd uniform_point(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd u(box.dim());
  for (int j = 0; j < box.dim(); ++j) u[j] = unit(rng);
  return box.from_unit(u);
}

struct SurrogateState {
  std::optional<GpSurrogate> surrogate;
  std::optional<PminSampler> sampler;
};

SurrogateState build_state(const TunerConfig& cfg, const Hyperparams& hyper, const Dataset& data, int row) {
  SurrogateState st;
  st.surrogate.emplace(hyper, data);
  RepresenterSet reps = build_representers(cfg.design_map.domain, *st.surrogate, cfg.representers,
                                           derive_seed(cfg.seed, row, seed_stream::kRepresenters));
  st.sampler.emplace(*st.surrogate, std::move(reps), cfg.mc_samples,
                     derive_seed(cfg.seed, row, seed_stream::kPmin));
  return st;
}

Hyperparams refit(const TunerConfig& cfg, const Dataset& data, const Hyperparams& warm, int row) {
  MapFitOptions opts = cfg.fit;
  opts.seed = derive_seed(cfg.seed, row, seed_stream::kFit);
  return fit_map(data, cfg.priors, warm, opts).hyper;
}

}  // namespace

TuningResult run_tuning(const TunerConfig& config, const TuningCallbacks& callbacks) {
  const TuningContext ctx(config);
  const auto& cfg = ctx.config;
  const Box& domain = cfg.design_map.domain;
  const int D = domain.dim();
  using clock = std::chrono::steady_clock;

  TuningResult result;
  Hyperparams hyper = cfg.priors.means(D);
  Dataset data{Eigen::MatrixXd(0, D), Eigen::VectorXd(0)};

  std::vector<Eigen::VectorXd> initial{cfg.theta0};
  if (cfg.init_corner_evals) {
    for (auto& c : domain.corners()) initial.push_back(std::move(c));
  }
  result.n_initial = static_cast<int>(initial.size());

  int consecutive_failures = 0;
  SurrogateState state;

  const auto evaluate_and_record = [&](const Eigen::VectorXd& theta, int row, bool is_initial,
                                       double expected_gain, clock::time_point started) {
    const Evaluation ev = cost_evaluation(theta, ctx, derive_seed(cfg.seed, row, seed_stream::kEpisode));
    if (callbacks.on_episode) {
      IterationRecord partial;
      partial.index = row;
      partial.theta = theta;
      callbacks.on_episode(partial, ev.cost);
    }
    data = data.with(theta, ev.cost.j_hat);

    IterationRecord rec;
    rec.index = row;
    rec.initial = is_initial;
    rec.theta = theta;
    rec.j_hat = ev.cost.j_hat;
    rec.stable = ev.cost.stable;
    rec.synthesis_failed = ev.synthesis_failed;
    rec.expected_gain = expected_gain;

    state = SurrogateState{};
    const bool need_state = !is_initial || row + 1 == result.n_initial;
    try {
      hyper = refit(cfg, data, hyper, row);
      if (need_state) {
        state = build_state(cfg, hyper, data, row);
        const int bg = state.sampler->pmin().argmax();
        rec.best_guess = state.sampler->representers().point(bg);
        rec.best_guess_mean = state.surrogate->posterior(*rec.best_guess).mean;
      }
      consecutive_failures = 0;
    } catch (const IllConditioned& e) {
      ++consecutive_failures;
      std::cerr << "warning: surrogate update failed after row " << row << ": " << e.what() << "\n";
      state = SurrogateState{};
    }
    rec.hyper = hyper;
    rec.wall_ms = cfg.record_wall_time
                      ? std::chrono::duration<double, std::milli>(clock::now() - started).count()
                      : 0.0;
    result.history.push_back(rec);
    if (callbacks.on_record) callbacks.on_record(rec);
  };

  for (int i = 0; i < result.n_initial; ++i) {
    evaluate_and_record(initial[static_cast<std::size_t>(i)], i, true, 0.0, clock::now());
  }

  for (int it = 0; it < cfg.n_iterations; ++it) {
    if (consecutive_failures > 3) {
      result.aborted = true;
      result.abort_reason = "surrogate factorization failed more than 3 times in a row";
      break;
    }
    const auto started = clock::now();
    const int row = result.n_initial + it;
    Eigen::VectorXd next;
    double gain = 0.0;
    if (state.sampler) {
      const auto& reps = state.sampler->representers();
      Eigen::MatrixXd candidates(reps.size() + cfg.extra_candidates, D);
      candidates.topRows(reps.size()) = reps.points;
      std::mt19937_64 rng(derive_seed(cfg.seed, row, seed_stream::kCandidates));
      for (int c = 0; c < cfg.extra_candidates; ++c) {
        candidates.row(reps.size() + c) = uniform_point(domain, rng).transpose();
      }
      const AcquisitionChoice choice = select_next(*state.sampler, candidates, SelectConfig{cfg.quadrature_order});
      next = choice.next_theta;
      gain = choice.expected_gain;
      if (callbacks.on_trace) {
        callbacks.on_trace(AcquisitionTrace{it, candidates, choice.gains, reps.points,
                                            state.sampler->pmin().probs, choice.best_guess});
      }
    } else {
      std::mt19937_64 rng(derive_seed(cfg.seed, row, seed_stream::kFallback));
      next = uniform_point(domain, rng);
    }
    evaluate_and_record(next, row, false, gain, started);
  }

  result.data = data;
  result.hyper = hyper;
  for (auto it = result.history.rbegin(); it != result.history.rend(); ++it) {
    if (it->best_guess) {
      result.best_guess = *it->best_guess;
      result.best_guess_mean = *it->best_guess_mean;
      break;
    }
  }
  if (result.best_guess.size() == 0) {
    result.best_guess = cfg.theta0;
    result.best_guess_mean = 0.0;
  }
  return result;
}

BestGuessState recompute_best_guess_state(const TunerConfig& config, const TuningResult& result, int row) {
  const IterationRecord& rec = result.history.at(static_cast<std::size_t>(row));
  GpSurrogate gp(rec.hyper, result.data.head(row + 1));
  RepresenterSet reps = build_representers(config.design_map.domain, gp, config.representers,
                                           derive_seed(config.seed, row, seed_stream::kRepresenters));
  PminDistribution pmin = approximate_pmin(gp, reps, config.mc_samples,
                                           derive_seed(config.seed, row, seed_stream::kPmin));
  return {std::move(gp), std::move(reps), std::move(pmin)};
}

ValidationResult validate_controller(const Eigen::VectorXd& theta, const TuningContext& ctx,
                                     int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("need at least one validation episode");
  ValidationResult out;
  for (int e = 0; e < n_episodes; ++e) {
    const Evaluation ev = cost_evaluation(theta, ctx, derive_seed(seed, e, seed_stream::kValidation));
    out.costs.push_back(ev.cost.j_hat);
    out.stable_flags.push_back(ev.cost.stable);
    if (ev.cost.stable) ++out.stable_count;
  }
  const double n = static_cast<double>(n_episodes);
  for (double c : out.costs) out.mean += c;
  out.mean /= n;
  if (n_episodes > 1) {
    double ss = 0.0;
    for (double c : out.costs) ss += (c - out.mean) * (c - out.mean);
    out.std = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

}  // namespace lqrtune
