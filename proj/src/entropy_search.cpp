#include "lqrtune/entropy_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace lqrtune {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

int PminDistribution::argmax() const {
  int best = 0;
  for (int i = 1; i < size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

double relative_entropy(const PminDistribution& p) {
  const double M = static_cast<double>(p.size());
  double h = 0.0;
  for (double pi : p.probs) {
    if (pi > 0.0) h += pi * std::log(pi * M);
  }
  return std::max(h, 0.0);
}

GaussHermite gauss_hermite(int order) {
  if (order < 1) throw std::invalid_argument("quadrature order must be positive");
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
  GaussHermite rule;
  for (int i = 0; i < order; ++i) {
    rule.nodes.push_back(eig.eigenvalues()[i]);
    const double v = eig.eigenvectors()(0, i);
    rule.weights.push_back(v * v);
  }
  return rule;
}

double baseline_acquisition(Baseline kind, double mean, double std, double incumbent, double beta) {
  const double improvement = incumbent - mean;
  switch (kind) {
    case Baseline::PI:
      if (std <= 0.0) return improvement > 0.0 ? 1.0 : 0.0;
      return normal_cdf(improvement / std);
    case Baseline::EI: {
      if (std <= 0.0) return std::max(improvement, 0.0);
      const double z = improvement / std;
      return std::max(improvement * normal_cdf(z) + std * normal_pdf(z), 0.0);
    }
    case Baseline::UCB:
      return -mean + beta * std;
  }
  return 0.0;
}

double baseline_acquisition(Baseline kind, const GpSurrogate& surrogate,
                            const Eigen::VectorXd& candidate, double incumbent, double beta) {
  if (kind != Baseline::UCB && surrogate.data().size() == 0) {
    throw std::invalid_argument("PI and EI need at least one observation");
  }
  const Prediction p = surrogate.posterior(candidate);
  return baseline_acquisition(kind, p.mean, std::sqrt(p.variance), incumbent, beta);
}

RepresenterSet build_representers(const Box& domain, const GpSurrogate& surrogate, int m,
                                  std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("need at least one representer");
  domain.validate();
  const int D = domain.dim();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto draw = [&] {
    Eigen::VectorXd u(D);
    for (int j = 0; j < D; ++j) u[j] = unit(rng);
    return domain.from_unit(u);
  };

  RepresenterSet reps;
  reps.points.resize(m, D);
  const int n_ei = m / 2;
  const int n_uniform = m - n_ei;
  int filled = 0;
  for (; filled < n_uniform; ++filled) reps.points.row(filled) = draw().transpose();

  const bool has_data = surrogate.data().size() > 0;
  double incumbent = has_data ? surrogate.data().y.minCoeff() : 0.0;
  const auto ei = [&](const Eigen::VectorXd& x) {
    return baseline_acquisition(Baseline::EI, surrogate, x, incumbent);
  };

  double bound = 0.0;
  if (has_data) {
    for (int i = 0; i < 1000; ++i) bound = std::max(bound, ei(draw()));
  }
  if (bound <= std::numeric_limits<double>::min()) {
    for (; filled < m; ++filled) reps.points.row(filled) = draw().transpose();
    return reps;
  }

  const long cap = 200L * std::max(n_ei, 1);
  for (long proposals = 0; filled < m && proposals < cap; ++proposals) {
    const Eigen::VectorXd x = draw();
    const double value = ei(x);
    const double u = unit(rng);
    if (value > bound) bound = value;
    if (u * bound <= value) reps.points.row(filled++) = x.transpose();
  }
  for (; filled < m; ++filled) reps.points.row(filled) = draw().transpose();
  return reps;
}

PminSampler::PminSampler(const GpSurrogate& surrogate, RepresenterSet reps, int n_samples,
                         std::uint64_t seed)
    : surrogate_(surrogate), reps_(std::move(reps)) {
  if (n_samples < 1) throw std::invalid_argument("need at least one sample");
  const int M = reps_.size();
  if (M < 1) throw std::invalid_argument("empty representer set");

  Eigen::MatrixXd cov;
  surrogate.posterior_joint(reps_.points, mean_, cov);
  const double s2 = surrogate.hyper().signal_std * surrogate.hyper().signal_std;
  bool ok = false;
  for (double rel = 1e-10; rel <= 1e-4 * 1.01; rel *= 10.0) {
    Eigen::MatrixXd jittered = cov;
    jittered.diagonal().array() += rel * s2;
    Eigen::LLT<Eigen::MatrixXd> llt(jittered);
    if (llt.info() == Eigen::Success && llt.matrixLLT().allFinite()) {
      chol_ = llt.matrixL();
      ok = true;
      break;
    }
  }
  if (!ok) throw IllConditioned("joint posterior covariance at the representers is not factorizable");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  normals_.resize(M, n_samples);
  for (int j = 0; j < n_samples; ++j) {
    for (int i = 0; i < M; ++i) normals_(i, j) = normal(rng);
  }
  extra_normals_.resize(n_samples);
  noise_normals_.resize(n_samples);
  for (int j = 0; j < n_samples; ++j) extra_normals_[j] = normal(rng);
  for (int j = 0; j < n_samples; ++j) noise_normals_[j] = normal(rng);

  samples_ = chol_.triangularView<Eigen::Lower>() * normals_;
  samples_.colwise() += mean_;

  order_.resize(n_samples);
  pmin_.probs = Eigen::VectorXd::Zero(M);
  for (int j = 0; j < n_samples; ++j) {
    auto& idx = order_[j];
    idx.resize(M);
    std::iota(idx.begin(), idx.end(), 0);
    const double* col = samples_.col(j).data();
    std::sort(idx.begin(), idx.end(), [col](int a, int b) {
      return col[a] < col[b] || (col[a] == col[b] && a < b);
    });
    pmin_.probs[idx.front()] += 1.0;
  }
  pmin_.probs /= static_cast<double>(n_samples);
}

PminSampler::Update PminSampler::prepare(const Eigen::VectorXd& candidate) const {
  const auto& h = surrogate_.hyper();
  const Prediction pred = surrogate_.posterior(candidate);
  Update up;
  up.mean = pred.mean;
  up.k = surrogate_.posterior_cross(reps_.points, candidate);
  const Eigen::VectorXd c = chol_.triangularView<Eigen::Lower>().solve(up.k);
  const double r = std::sqrt(std::max(pred.variance - c.squaredNorm(), 0.0));
  const double s2 = h.signal_std * h.signal_std;
  up.var_obs = pred.variance + h.noise_std * h.noise_std + GpSurrogate::kJitter * s2;
  up.residual = normals_.transpose() * c + r * extra_normals_ + h.noise_std * noise_normals_;
  return up;
}

namespace detail {

InfluenceSplit split_by_influence(const Eigen::VectorXd& k, double ratio, int max_near) {
  const int M = static_cast<int>(k.size());
  InfluenceSplit split;
  split.is_near.assign(static_cast<std::size_t>(M), 0);
  std::vector<int> idx(static_cast<std::size_t>(M));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return std::abs(k[a]) > std::abs(k[b]) || (std::abs(k[a]) == std::abs(k[b]) && a < b);
  });
  const double threshold = M > 0 ? ratio * std::abs(k[idx.front()]) : 0.0;
  std::size_t n = 0;
  while (n < idx.size() && static_cast<int>(n) < max_near && std::abs(k[idx[n]]) > threshold) ++n;
  split.near.assign(idx.begin(), idx.begin() + static_cast<long>(n));
  std::sort(split.near.begin(), split.near.end());
  for (int i : split.near) split.is_near[static_cast<std::size_t>(i)] = 1;
  split.far_bound = n < idx.size() ? std::abs(k[idx[n]]) : 0.0;
  return split;
}

void accumulate_argmins(const double* values, const std::vector<int>& order, const Eigen::VectorXd& k,
                        const InfluenceSplit& split, const std::vector<double>& shifts,
                        std::vector<Eigen::VectorXd>& counts) {
  const std::size_t Q = shifts.size();
  if (Q > kMaxShifts) throw std::invalid_argument("too many shifts");
  double best_val[kMaxShifts];
  int best_idx[kMaxShifts];
  double reach[kMaxShifts];
  for (std::size_t q = 0; q < Q; ++q) {
    best_val[q] = std::numeric_limits<double>::infinity();
    best_idx[q] = std::numeric_limits<int>::max();
    reach[q] = split.far_bound * std::abs(shifts[q]);
  }
  for (const int i : split.near) {
    const double f = values[i];
    const double ki = k[i];
    for (std::size_t q = 0; q < Q; ++q) {
      const double v = f + ki * shifts[q];
      if (v < best_val[q] || (v == best_val[q] && i < best_idx[q])) {
        best_val[q] = v;
        best_idx[q] = i;
      }
    }
  }
  const auto cutoff_now = [&] {
    double c = -std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < Q; ++q) c = std::max(c, best_val[q] + reach[q]);
    return c;
  };
  double cutoff = cutoff_now();
  for (const int i : order) {
    const double f = values[i];
    if (f > cutoff) break;
    if (split.is_near[static_cast<std::size_t>(i)]) continue;
    const double ki = k[i];
    bool changed = false;
    for (std::size_t q = 0; q < Q; ++q) {
      const double v = f + ki * shifts[q];
      if (v < best_val[q] || (v == best_val[q] && i < best_idx[q])) {
        best_val[q] = v;
        best_idx[q] = i;
        changed = true;
      }
    }
    if (changed) cutoff = cutoff_now();
  }
  for (std::size_t q = 0; q < Q; ++q) counts[q][best_idx[q]] += 1.0;
}

}  // namespace detail

double PminSampler::expected_entropy_change(const Eigen::VectorXd& candidate,
                                            const GaussHermite& rule) const {
  if (rule.nodes.size() > detail::kMaxShifts) throw std::invalid_argument("quadrature order above 16");
  const Update up = prepare(candidate);
  const int M = reps_.size();
  const int S = num_samples();
  const std::size_t Q = rule.nodes.size();
  const detail::InfluenceSplit split = detail::split_by_influence(up.k);
  const double sd_obs = std::sqrt(up.var_obs);

  std::vector<Eigen::VectorXd> counts(Q, Eigen::VectorXd::Zero(M));
  std::vector<double> shifts(Q);
  for (int j = 0; j < S; ++j) {
    for (std::size_t q = 0; q < Q; ++q) {
      shifts[q] = (sd_obs * rule.nodes[q] - up.residual[j]) / up.var_obs;
    }
    detail::accumulate_argmins(samples_.col(j).data(), order_[j], up.k, split, shifts, counts);
  }

  double expected = 0.0;
  for (std::size_t q = 0; q < Q; ++q) {
    PminDistribution p{counts[q] / static_cast<double>(S)};
    expected += rule.weights[q] * relative_entropy(p);
  }
  return expected - relative_entropy(pmin_);
}

PminDistribution PminSampler::fantasy_pmin(const Eigen::VectorXd& candidate, double observed) const {
  const Update up = prepare(candidate);
  const int M = reps_.size();
  const int S = num_samples();
  const detail::InfluenceSplit split = detail::split_by_influence(up.k);
  std::vector<Eigen::VectorXd> counts(1, Eigen::VectorXd::Zero(M));
  std::vector<double> shift(1);
  for (int j = 0; j < S; ++j) {
    shift[0] = (observed - up.mean - up.residual[j]) / up.var_obs;
    detail::accumulate_argmins(samples_.col(j).data(), order_[j], up.k, split, shift, counts);
  }
  return {counts[0] / static_cast<double>(S)};
}

PminDistribution approximate_pmin(const GpSurrogate& surrogate, const RepresenterSet& reps,
                                  int n_samples, std::uint64_t seed) {
  return PminSampler(surrogate, reps, n_samples, seed).pmin();
}

double expected_entropy_change(const GpSurrogate& surrogate, const RepresenterSet& reps,
                               const Eigen::VectorXd& candidate, int quadrature_order,
                               int n_samples, std::uint64_t seed) {
  const PminSampler sampler(surrogate, reps, n_samples, seed);
  return sampler.expected_entropy_change(candidate, gauss_hermite(quadrature_order));
}

AcquisitionChoice select_next(const PminSampler& sampler, const Eigen::MatrixXd& candidates,
                              const SelectConfig& config) {
  if (candidates.rows() == 0) throw std::invalid_argument("no candidates");
  const GaussHermite rule = gauss_hermite(config.quadrature_order);
  AcquisitionChoice choice;
  choice.gains.resize(candidates.rows());
  int best = 0;
  for (Eigen::Index c = 0; c < candidates.rows(); ++c) {
    choice.gains[c] = sampler.expected_entropy_change(candidates.row(c).transpose(), rule);
    if (choice.gains[c] > choice.gains[best]) best = static_cast<int>(c);
  }
  choice.next_theta = candidates.row(best).transpose();
  choice.expected_gain = choice.gains[best];
  choice.best_guess_index = sampler.pmin().argmax();
  choice.best_guess = sampler.representers().point(choice.best_guess_index);
  return choice;
}

}  // namespace lqrtune
