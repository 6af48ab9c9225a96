#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "lqrtune/gp_model.hpp"

namespace lqrtune {

/// Finite point set on which the minimum-location distribution is represented.
struct RepresenterSet {
  Eigen::MatrixXd points;  // M x D

  int size() const { return static_cast<int>(points.rows()); }
  Eigen::VectorXd point(int i) const { return points.row(i).transpose(); }
};

/// Probability that each representer point is the minimizer.
struct PminDistribution {
  Eigen::VectorXd probs;

  int size() const { return static_cast<int>(probs.size()); }
  /// Highest-probability index, lowest index on ties.
  int argmax() const;
};

/// Half the points uniform over the box, half by rejection sampling in
/// proportion to expected improvement under the surrogate. With no data the
/// EI half is uniform too.
RepresenterSet build_representers(const Box& domain, const GpSurrogate& surrogate, int m,
                                  std::uint64_t seed);

/// KL divergence of p from the uniform distribution on its support points.
double relative_entropy(const PminDistribution& p);

/// Gauss-Hermite rule for E[f(Y)], Y ~ N(0, 1) (probabilists' weights sum to one).
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussHermite gauss_hermite(int order);

/// Monte Carlo machinery for p_min on a fixed representer set.
///
/// Joint posterior samples f = mu + L e are drawn once per seed. Fantasized
/// observations at a candidate update every sample in place through the
/// pathwise conditioning identity
///   f' = f + k_c (y - f_c - e_n) / (v_c + sigma_n^2),
/// so all fantasies share the same random numbers and the joint covariance is
/// factorized only once.
class PminSampler {
 public:
  PminSampler(const GpSurrogate& surrogate, RepresenterSet reps, int n_samples, std::uint64_t seed);

  const PminDistribution& pmin() const { return pmin_; }
  const RepresenterSet& representers() const { return reps_; }
  int num_samples() const { return static_cast<int>(samples_.cols()); }

  /// Expected relative entropy after observing at `candidate`, minus the current one.
  double expected_entropy_change(const Eigen::VectorXd& candidate, const GaussHermite& rule) const;

  /// p_min after conditioning on a single fantasized observation (used for checks).
  PminDistribution fantasy_pmin(const Eigen::VectorXd& candidate, double observed) const;

 private:
  struct Update {
    Eigen::VectorXd k;         // posterior cross-covariance with the representers
    Eigen::VectorXd residual;  // per-sample f_c + noise, centered at the candidate mean
    double mean = 0.0;
    double var_obs = 0.0;      // predictive variance of the observation
  };
  Update prepare(const Eigen::VectorXd& candidate) const;

  GpSurrogate surrogate_;
  RepresenterSet reps_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd chol_;       // lower factor of the joint covariance (+ jitter)
  Eigen::MatrixXd normals_;    // M x S
  Eigen::VectorXd extra_normals_;  // S, candidate residual direction
  Eigen::VectorXd noise_normals_;  // S, observation noise
  Eigen::MatrixXd samples_;    // M x S
  std::vector<std::vector<int>> order_;  // per sample, indices sorted by value
  PminDistribution pmin_;
};

PminDistribution approximate_pmin(const GpSurrogate& surrogate, const RepresenterSet& reps,
                                  int n_samples, std::uint64_t seed);

double expected_entropy_change(const GpSurrogate& surrogate, const RepresenterSet& reps,
                               const Eigen::VectorXd& candidate, int quadrature_order,
                               int n_samples, std::uint64_t seed);

struct SelectConfig {
  int quadrature_order = 9;
};

struct AcquisitionChoice {
  Eigen::VectorXd next_theta;
  double expected_gain = 0.0;
  Eigen::VectorXd best_guess;
  int best_guess_index = 0;
  Eigen::VectorXd gains;  // per candidate
};

/// Candidate with the largest expected entropy change (lowest index on ties)
/// and the representer with the largest p_min.
AcquisitionChoice select_next(const PminSampler& sampler, const Eigen::MatrixXd& candidates,
                              const SelectConfig& config);

enum class Baseline { PI, EI, UCB };

/// Minimization forms: PI and EI measure improvement below `incumbent`; the
/// UCB score is -mean + beta * std, to be maximized.
double baseline_acquisition(Baseline kind, double mean, double std, double incumbent, double beta = 2.0);
double baseline_acquisition(Baseline kind, const GpSurrogate& surrogate,
                            const Eigen::VectorXd& candidate, double incumbent, double beta = 2.0);

namespace detail {

inline constexpr std::size_t kMaxShifts = 16;

/// Representers whose cross-covariance with the candidate dominates, scanned
/// exhaustively; every other index has |k_i| <= far_bound.
struct InfluenceSplit {
  std::vector<int> near;      // ascending
  std::vector<char> is_near;  // per representer
  double far_bound = 0.0;
};

/// Near set = indices with |k_i| > ratio * max |k|, at most max_near of them.
InfluenceSplit split_by_influence(const Eigen::VectorXd& k, double ratio = 0.05, int max_near = 64);

/// Adds one count per shift w_q at argmin_i (values_i + k_i w_q), where `order`
/// sorts `values` ascending. Near indices are checked exhaustively, the rest in
/// value order until no remaining entry can undercut any current minimum.
/// Ties go to the lowest index.
void accumulate_argmins(const double* values, const std::vector<int>& order, const Eigen::VectorXd& k,
                        const InfluenceSplit& split, const std::vector<double>& shifts,
                        std::vector<Eigen::VectorXd>& counts);

}  // namespace detail

double normal_cdf(double x);
double normal_pdf(double x);

}  // namespace lqrtune
