#include "lqrtune/gp_model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace lqrtune {

bool Box::contains(const Eigen::VectorXd& x) const {
  if (x.size() != lower.size()) return false;
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

Eigen::VectorXd Box::from_unit(const Eigen::VectorXd& u) const {
  return lower + (upper - lower).cwiseProduct(u);
}

std::vector<Eigen::VectorXd> Box::corners() const {
  const int D = dim();
  std::vector<Eigen::VectorXd> out;
  for (unsigned mask = 0; mask < (1u << D); ++mask) {
    Eigen::VectorXd c(D);
    for (int j = 0; j < D; ++j) c[j] = (mask >> j) & 1u ? upper[j] : lower[j];
    out.push_back(std::move(c));
  }
  return out;
}

void Box::validate() const {
  if (lower.size() == 0 || lower.size() != upper.size()) throw std::invalid_argument("bad box");
  if (!((upper - lower).array() > 0.0).all()) throw std::invalid_argument("empty box");
}

void Hyperparams::validate() const {
  const auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (lengthscales.size() == 0) throw std::invalid_argument("no lengthscales");
  for (double l : lengthscales) {
    if (!ok(l)) throw std::invalid_argument("lengthscales must be positive");
  }
  if (!ok(signal_std) || !ok(noise_std)) throw std::invalid_argument("stds must be positive");
}

Eigen::VectorXd Hyperparams::to_log() const {
  const int D = dim();
  Eigen::VectorXd v(D + 2);
  v.head(D) = lengthscales.array().log();
  v[D] = std::log(signal_std);
  v[D + 1] = std::log(noise_std);
  return v;
}

Hyperparams Hyperparams::from_log(const Eigen::VectorXd& p) {
  const auto D = p.size() - 2;
  return {p.head(D).array().exp().matrix(), std::exp(p[D]), std::exp(p[D + 1])};
}

double GammaPrior::mode() const {
  const double k = shape();
  return k >= 1.0 ? (k - 1.0) * scale() : 0.0;
}

double GammaPrior::log_pdf(double x) const {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  const double k = shape();
  const double s = scale();
  return (k - 1.0) * std::log(x) - x / s - std::lgamma(k) - k * std::log(s);
}

double GammaPrior::dlog_pdf_dlog(double x) const { return (shape() - 1.0) - x / scale(); }

void GammaPrior::validate() const {
  if (!(mean > 0.0 && std > 0.0)) throw std::invalid_argument("gamma prior needs mean, std > 0");
}

Hyperparams HyperPriors::means(int dim) const {
  return {Eigen::VectorXd::Constant(dim, lengthscale.mean), signal_std.mean, noise_std.mean};
}

double HyperPriors::log_density(const Hyperparams& h) const {
  double lp = signal_std.log_pdf(h.signal_std) + noise_std.log_pdf(h.noise_std);
  for (double l : h.lengthscales) lp += lengthscale.log_pdf(l);
  return lp;
}

Dataset Dataset::with(const Eigen::VectorXd& x, double value) const {
  Dataset out;
  const int n = size();
  const int D = n > 0 ? dim() : static_cast<int>(x.size());
  out.X.resize(n + 1, D);
  out.y.resize(n + 1);
  if (n > 0) {
    out.X.topRows(n) = X;
    out.y.head(n) = y;
  }
  out.X.row(n) = x.transpose();
  out.y[n] = value;
  return out;
}

Dataset Dataset::head(int n) const { return {X.topRows(n), y.head(n)}; }

void Dataset::validate(const Box* domain) const {
  if (X.rows() != y.size()) throw std::invalid_argument("dataset size mismatch");
  if (!y.allFinite()) throw std::invalid_argument("dataset values must be finite");
  if (domain) {
    for (int i = 0; i < size(); ++i) {
      if (!domain->contains(X.row(i).transpose())) {
        throw std::invalid_argument("dataset location outside the domain");
      }
    }
  }
}

double kernel_se_ard(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Hyperparams& h) {
  const double r2 = ((a - b).array() / h.lengthscales.array()).square().sum();
  return h.signal_std * h.signal_std * std::exp(-0.5 * r2);
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                              const Hyperparams& h) {
  const Eigen::RowVectorXd inv_l = h.lengthscales.cwiseInverse().transpose();
  const Eigen::MatrixXd As = A.array().rowwise() * inv_l.array();
  const Eigen::MatrixXd Bs = B.array().rowwise() * inv_l.array();
  const double s2 = h.signal_std * h.signal_std;
  const auto D = A.cols();
  Eigen::MatrixXd K(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      double r2 = 0.0;
      for (Eigen::Index d = 0; d < D; ++d) {
        const double diff = As(i, d) - Bs(j, d);
        r2 += diff * diff;
      }
      K(i, j) = s2 * std::exp(-0.5 * r2);
    }
  }
  return K;
}

GpSurrogate::GpSurrogate(Hyperparams hyper, Dataset data)
    : hyper_(std::move(hyper)), data_(std::move(data)) {
  hyper_.validate();
  data_.validate();
  if (data_.size() > 0 && data_.dim() != hyper_.dim()) {
    throw std::invalid_argument("dataset dimension does not match the lengthscales");
  }
  if (data_.size() == 0) return;
  const double s2 = hyper_.signal_std * hyper_.signal_std;
  Eigen::MatrixXd K = kernel_matrix(data_.X, data_.X, hyper_);
  K.diagonal().array() += hyper_.noise_std * hyper_.noise_std + kJitter * s2;
  chol_.compute(K);
  if (chol_.info() != Eigen::Success) throw IllConditioned("Gram matrix is not positive definite");
  alpha_ = chol_.solve(data_.y);
  if (!alpha_.allFinite()) throw IllConditioned("Gram solve produced non-finite values");
}

Prediction GpSurrogate::posterior(const Eigen::VectorXd& query) const {
  const double prior = hyper_.signal_std * hyper_.signal_std;
  if (data_.size() == 0) return {0.0, prior};
  const Eigen::VectorXd k = kernel_matrix(data_.X, query.transpose(), hyper_).col(0);
  const Eigen::VectorXd v = chol_.matrixL().solve(k);
  return {k.dot(alpha_), std::max(prior - v.squaredNorm(), 0.0)};
}

void GpSurrogate::posterior_joint(const Eigen::MatrixXd& Q, Eigen::VectorXd& mean,
                                  Eigen::MatrixXd& cov) const {
  cov = kernel_matrix(Q, Q, hyper_);
  if (data_.size() == 0) {
    mean = Eigen::VectorXd::Zero(Q.rows());
    return;
  }
  const Eigen::MatrixXd Kqx = kernel_matrix(Q, data_.X, hyper_);
  mean = Kqx * alpha_;
  const Eigen::MatrixXd V = chol_.matrixL().solve(Kqx.transpose());
  cov.noalias() -= V.transpose() * V;
}

Eigen::VectorXd GpSurrogate::posterior_cross(const Eigen::MatrixXd& Q, const Eigen::VectorXd& x) const {
  Eigen::VectorXd k = kernel_matrix(Q, x.transpose(), hyper_).col(0);
  if (data_.size() == 0) return k;
  const Eigen::MatrixXd Kqx = kernel_matrix(Q, data_.X, hyper_);
  const Eigen::VectorXd kx = kernel_matrix(data_.X, x.transpose(), hyper_).col(0);
  k.noalias() -= Kqx * chol_.solve(kx);
  return k;
}

double GpSurrogate::log_marginal_likelihood() const {
  const int N = data_.size();
  if (N == 0) return 0.0;
  const double log_det = 2.0 * chol_.matrixLLT().diagonal().array().log().sum();
  return -0.5 * data_.y.dot(alpha_) - 0.5 * log_det -
         0.5 * N * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd GpSurrogate::log_marginal_likelihood_gradient() const {
  const int D = dim();
  const int N = data_.size();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(D + 2);
  if (N == 0) return grad;

  const Eigen::MatrixXd Kinv = chol_.solve(Eigen::MatrixXd::Identity(N, N));
  const Eigen::MatrixXd W = alpha_ * alpha_.transpose() - Kinv;
  const Eigen::MatrixXd K = kernel_matrix(data_.X, data_.X, hyper_);
  const double s2 = hyper_.signal_std * hyper_.signal_std;

  for (int j = 0; j < D; ++j) {
    const double l2 = hyper_.lengthscales[j] * hyper_.lengthscales[j];
    Eigen::MatrixXd dK(N, N);
    for (int a = 0; a < N; ++a) {
      for (int b = 0; b < N; ++b) {
        const double d = data_.X(a, j) - data_.X(b, j);
        dK(a, b) = K(a, b) * d * d / l2;
      }
    }
    grad[j] = 0.5 * W.cwiseProduct(dK).sum();
  }
  // The jitter scales with sigma^2, so it belongs to the signal derivative.
  Eigen::MatrixXd dK_signal = 2.0 * K;
  dK_signal.diagonal().array() += 2.0 * kJitter * s2;
  grad[D] = 0.5 * W.cwiseProduct(dK_signal).sum();
  grad[D + 1] = 0.5 * W.trace() * 2.0 * hyper_.noise_std * hyper_.noise_std;
  return grad;
}

GpSurrogate GpSurrogate::with_observation(const Eigen::VectorXd& x, double value) const {
  return GpSurrogate(hyper_, data_.with(x, value));
}

double map_objective(const Dataset& data, const HyperPriors& priors, const Hyperparams& hyper) {
  return GpSurrogate(hyper, data).log_marginal_likelihood() + priors.log_density(hyper);
}

namespace {

struct Evaluated {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;
};

Evaluated evaluate(const Dataset& data, const HyperPriors& priors, const Eigen::VectorXd& logp) {
  Evaluated out;
  const Hyperparams h = Hyperparams::from_log(logp);
  if (!logp.allFinite()) return out;
  try {
    const GpSurrogate gp(h, data);
    out.value = gp.log_marginal_likelihood() + priors.log_density(h);
    out.grad = gp.log_marginal_likelihood_gradient();
    const int D = h.dim();
    for (int j = 0; j < D; ++j) out.grad[j] += priors.lengthscale.dlog_pdf_dlog(h.lengthscales[j]);
    out.grad[D] += priors.signal_std.dlog_pdf_dlog(h.signal_std);
    out.grad[D + 1] += priors.noise_std.dlog_pdf_dlog(h.noise_std);
    if (!std::isfinite(out.value) || !out.grad.allFinite()) out.value = -std::numeric_limits<double>::infinity();
  } catch (const IllConditioned&) {
    out.value = -std::numeric_limits<double>::infinity();
  } catch (const std::invalid_argument&) {
    out.value = -std::numeric_limits<double>::infinity();
  }
  return out;
}

// Gradient ascent with Armijo backtracking; step length in log space capped at 1.
Evaluated ascend(const Dataset& data, const HyperPriors& priors, Eigen::VectorXd& x, int max_iter) {
  Evaluated cur = evaluate(data, priors, x);
  if (!std::isfinite(cur.value)) return cur;
  double step = 0.1;
  for (int it = 0; it < max_iter; ++it) {
    const double gnorm = cur.grad.norm();
    if (gnorm < 1e-9) break;
    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::VectorXd dir = step * cur.grad;
      if (dir.norm() > 1.0) dir *= 1.0 / dir.norm();
      const Eigen::VectorXd cand = x + dir;
      Evaluated next = evaluate(data, priors, cand);
      if (std::isfinite(next.value) && next.value >= cur.value + 1e-4 * dir.dot(cur.grad)) {
        const double gain = next.value - cur.value;
        x = cand;
        cur = std::move(next);
        step *= 2.0;
        accepted = true;
        if (gain < 1e-12 * std::max(1.0, std::abs(cur.value))) return cur;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  return cur;
}

double sample_gamma(const GammaPrior& p, std::mt19937_64& rng) {
  return std::gamma_distribution<double>(p.shape(), p.scale())(rng);
}

}  // namespace

MapFit fit_map(const Dataset& data, const HyperPriors& priors, const Hyperparams& init,
               const MapFitOptions& options) {
  if (data.size() < 1) throw std::invalid_argument("fit_map needs at least one observation");
  init.validate();

  MapFit best;
  best.hyper = init;
  best.init_objective = evaluate(data, priors, init.to_log()).value;
  best.objective = best.init_objective;

  std::mt19937_64 rng(options.seed);
  std::vector<Eigen::VectorXd> starts{init.to_log()};
  for (int r = 0; r < options.restarts; ++r) {
    Hyperparams h = init;
    for (auto& l : h.lengthscales) l = sample_gamma(priors.lengthscale, rng);
    h.signal_std = sample_gamma(priors.signal_std, rng);
    h.noise_std = sample_gamma(priors.noise_std, rng);
    // Zero draws are possible for shape < 1.
    for (auto& l : h.lengthscales) l = std::max(l, 1e-6);
    h.signal_std = std::max(h.signal_std, 1e-6);
    h.noise_std = std::max(h.noise_std, 1e-6);
    starts.push_back(h.to_log());
  }

  for (auto& x : starts) {
    const Evaluated result = ascend(data, priors, x, options.max_iterations);
    if (std::isfinite(result.value) && result.value > best.objective) {
      best.objective = result.value;
      best.hyper = Hyperparams::from_log(x);
      best.improved = true;
    }
  }
  return best;
}

Relevance ard_relevance(const Hyperparams& hyper, const Eigen::VectorXd& domain_widths,
                        double threshold) {
  if (domain_widths.size() != hyper.lengthscales.size()) {
    throw std::invalid_argument("domain widths do not match the lengthscales");
  }
  Relevance out;
  out.scores = domain_widths.cwiseQuotient(hyper.lengthscales);
  for (double s : out.scores) out.irrelevant.push_back(s < threshold);
  return out;
}

}  // namespace lqrtune
