#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lqrtune/entropy_search.hpp"
#include "lqrtune/gp_model.hpp"
#include "lqrtune/lqr_core.hpp"
#include "lqrtune/plant_sim.hpp"

namespace lqrtune {

class OutOfDomain : public std::invalid_argument {
 public:
  explicit OutOfDomain(const std::string& what) : std::invalid_argument(what) {}
};

/// Diagonal design weights, each state entry either constant or linear in one
/// parameter: Wx_ii = offset_i + coeff_i * theta[index_i] (index -1 = constant).
struct DesignWeightMap {
  enum class Kind { TwoD, FourD, Custom };

  Kind kind = Kind::Custom;
  Eigen::Vector4d offset = Eigen::Vector4d::Zero();
  Eigen::Vector4d coeff = Eigen::Vector4d::Zero();
  Eigen::Vector4i index = Eigen::Vector4i::Constant(-1);
  double wu = 10.0;
  Box domain;

  int dim() const { return domain.dim(); }

  /// Wx = diag(1, 50 t1, 10, 50 t2), Wu = 10 on [0.01, 10]^2.
  static DesignWeightMap two_d();
  /// Wx = diag(t1, 25 t2, 10 t3, 25 t4), Wu = 10 on [0.01, 10]^4.
  static DesignWeightMap four_d();

  /// Throws std::invalid_argument if some theta in the box can give a
  /// non-positive diagonal entry.
  void validate() const;
};

std::string to_string(DesignWeightMap::Kind kind);

/// Throws OutOfDomain when theta is outside the map's box.
WeightPair design_weights(const DesignWeightMap& map, const Eigen::VectorXd& theta);

struct TunerConfig {
  DesignWeightMap design_map = DesignWeightMap::two_d();
  Eigen::VectorXd theta0;
  int n_iterations = 20;
  bool init_corner_evals = true;
  HyperPriors priors;

  PoleParams plant;                    // simulated plant
  PoleParams nominal;                  // used for synthesis
  WeightPair performance;              // (Q, R) defining the cost
  double Fz = 0.3;
  EpisodeConfig episode;               // j_unstable lives here
  SafetyLimits limits;

  int representers = 400;
  int mc_samples = 2000;
  int quadrature_order = 9;
  int extra_candidates = 50;           // uniform draws added to the representer candidates
  MapFitOptions fit;                   // seed is overridden per iteration

  std::uint64_t seed = 0;
  bool record_wall_time = true;

  void validate() const;
};

/// Deterministic stream seed for (master, index, stream) via splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream);

namespace seed_stream {
inline constexpr std::uint64_t kEpisode = 1;
inline constexpr std::uint64_t kRepresenters = 2;
inline constexpr std::uint64_t kPmin = 3;
inline constexpr std::uint64_t kCandidates = 4;
inline constexpr std::uint64_t kFit = 5;
inline constexpr std::uint64_t kValidation = 6;
inline constexpr std::uint64_t kFallback = 7;
}  // namespace seed_stream

/// Nominal model plus resolved configuration, shared by every evaluation.
struct TuningContext {
  TunerConfig config;
  NominalModel nominal_model;

  explicit TuningContext(TunerConfig cfg);
};

struct Evaluation {
  CostEvaluation cost;
  bool synthesis_failed = false;
};

/// LQR synthesis on the nominal model at theta, then one episode on the
/// simulated plant. Synthesis failure counts as an unstable episode.
Evaluation cost_evaluation(const Eigen::VectorXd& theta, const TuningContext& ctx, std::uint64_t seed);

/// Controller synthesized for theta.
ControllerGain synthesize(const Eigen::VectorXd& theta, const TuningContext& ctx);

struct IterationRecord {
  int index = 0;                   // row number; the first n_init rows are initial evaluations
  bool initial = false;
  Eigen::VectorXd theta;
  double j_hat = 0.0;
  bool stable = true;
  bool synthesis_failed = false;
  std::optional<Eigen::VectorXd> best_guess;  // absent for initial rows
  std::optional<double> best_guess_mean;
  Hyperparams hyper;               // after the refit that follows this evaluation
  double expected_gain = 0.0;
  double wall_ms = 0.0;
};

/// Acquisition state of one loop iteration, for trace export.
struct AcquisitionTrace {
  int iteration = 0;
  Eigen::MatrixXd candidates;
  Eigen::VectorXd gains;
  Eigen::MatrixXd representers;
  Eigen::VectorXd pmin;
  Eigen::VectorXd best_guess;
};

struct TuningResult {
  std::vector<IterationRecord> history;
  int n_initial = 0;
  Eigen::VectorXd best_guess;
  double best_guess_mean = 0.0;
  Hyperparams hyper;
  Dataset data;
  bool aborted = false;
  std::string abort_reason;
};

struct TuningCallbacks {
  std::function<void(const IterationRecord&)> on_record;
  std::function<void(const AcquisitionTrace&)> on_trace;
  std::function<void(const IterationRecord&, const CostEvaluation&)> on_episode;
};

/// The tuning loop: initial evaluations (theta0, optionally the box corners
/// for D = 2), then per iteration pick the candidate maximizing the expected
/// entropy change, evaluate it, refit hyperparameters and update the best guess.
TuningResult run_tuning(const TunerConfig& config, const TuningCallbacks& callbacks = {});

/// Everything needed to recompute the p_min of one history row.
struct BestGuessState {
  GpSurrogate surrogate;
  RepresenterSet representers;
  PminDistribution pmin;
};

/// Rebuilds surrogate, representers and p_min for the refit after `row`.
BestGuessState recompute_best_guess_state(const TunerConfig& config, const TuningResult& result, int row);

struct ValidationResult {
  double mean = 0.0;
  double std = 0.0;  // sample std; 0 for a single episode
  int stable_count = 0;
  std::vector<double> costs;
  std::vector<bool> stable_flags;
};

ValidationResult validate_controller(const Eigen::VectorXd& theta, const TuningContext& ctx,
                                     int n_episodes, std::uint64_t seed);

}  // namespace lqrtune
