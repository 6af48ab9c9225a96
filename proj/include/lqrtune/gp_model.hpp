#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace lqrtune {

/// The Gram matrix (plus noise and jitter) could not be Cholesky-factorized.
class IllConditioned : public std::runtime_error {
 public:
  explicit IllConditioned(const std::string& what) : std::runtime_error(what) {}
};

/// Axis-aligned parameter domain.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int dim() const { return static_cast<int>(lower.size()); }
  Eigen::VectorXd widths() const { return upper - lower; }
  bool contains(const Eigen::VectorXd& x) const;
  /// Maps u in [0,1]^D to the box.
  Eigen::VectorXd from_unit(const Eigen::VectorXd& u) const;
  /// The 2^D corners, enumerated with dimension 0 varying fastest.
  std::vector<Eigen::VectorXd> corners() const;
  void validate() const;
};

struct Hyperparams {
  Eigen::VectorXd lengthscales;
  double signal_std = 1.0;
  double noise_std = 0.1;

  int dim() const { return static_cast<int>(lengthscales.size()); }
  void validate() const;

  /// (log lambda_1..D, log sigma, log sigma_n)
  Eigen::VectorXd to_log() const;
  static Hyperparams from_log(const Eigen::VectorXd& log_params);
};

/// Gamma distribution given by its mean and standard deviation.
struct GammaPrior {
  double mean = 1.0;
  double std = 1.0;

  double shape() const { return (mean / std) * (mean / std); }
  double scale() const { return std * std / mean; }
  /// Mode (shape - 1) * scale, or 0 when shape < 1.
  double mode() const;
  double log_pdf(double x) const;
  /// d log_pdf / d log x.
  double dlog_pdf_dlog(double x) const;
  void validate() const;
};

struct HyperPriors {
  GammaPrior lengthscale;  // shared by all dimensions
  GammaPrior signal_std;
  GammaPrior noise_std;

  /// Prior means as a starting point.
  Hyperparams means(int dim) const;
  double log_density(const Hyperparams& h) const;
};

struct Dataset {
  Eigen::MatrixXd X;  // N x D, one location per row
  Eigen::VectorXd y;

  int size() const { return static_cast<int>(y.size()); }
  int dim() const { return static_cast<int>(X.cols()); }
  Dataset with(const Eigen::VectorXd& x, double value) const;
  /// First n entries.
  Dataset head(int n) const;
  void validate(const Box* domain = nullptr) const;
};

/// sigma^2 exp(-1/2 sum_j (a_j - b_j)^2 / lambda_j^2)
double kernel_se_ard(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Hyperparams& hyper);

/// Kernel matrix between the rows of A and the rows of B.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                              const Hyperparams& hyper);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Zero-mean GP conditioned on a dataset. Immutable once built; adding data
/// or changing hyperparameters produces a new surrogate.
class GpSurrogate {
 public:
  /// Relative diagonal jitter, times sigma^2.
  static constexpr double kJitter = 1e-10;

  GpSurrogate(Hyperparams hyper, Dataset data);

  const Hyperparams& hyper() const { return hyper_; }
  const Dataset& data() const { return data_; }
  int dim() const { return hyper_.dim(); }

  Prediction posterior(const Eigen::VectorXd& query) const;

  /// Joint posterior over the rows of Q.
  void posterior_joint(const Eigen::MatrixXd& Q, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) const;

  /// Posterior covariance between the rows of Q and one extra point x.
  Eigen::VectorXd posterior_cross(const Eigen::MatrixXd& Q, const Eigen::VectorXd& x) const;

  double log_marginal_likelihood() const;
  /// Gradient of the log marginal likelihood w.r.t. Hyperparams::to_log().
  Eigen::VectorXd log_marginal_likelihood_gradient() const;

  GpSurrogate with_observation(const Eigen::VectorXd& x, double value) const;

 private:
  Hyperparams hyper_;
  Dataset data_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
};

struct MapFitOptions {
  int restarts = 4;
  int max_iterations = 200;
  std::uint64_t seed = 0;
};

struct MapFit {
  Hyperparams hyper;
  double objective = 0.0;       // log marginal likelihood + log prior
  double init_objective = 0.0;
  bool improved = false;        // false: init returned unchanged
};

/// log marginal likelihood + sum of Gamma log densities.
double map_objective(const Dataset& data, const HyperPriors& priors, const Hyperparams& hyper);

/// MAP hyperparameters by multi-start gradient ascent in log space.
MapFit fit_map(const Dataset& data, const HyperPriors& priors, const Hyperparams& init,
               const MapFitOptions& options = {});

struct Relevance {
  Eigen::VectorXd scores;          // width_j / lambda_j
  std::vector<bool> irrelevant;    // score below threshold
};

Relevance ard_relevance(const Hyperparams& hyper, const Eigen::VectorXd& domain_widths,
                        double threshold = 0.1);

}  // namespace lqrtune
