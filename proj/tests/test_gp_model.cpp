#include <cmath>
#include <random>

#include <Eigen/LU>

#include "doctest.h"

#include "lqrtune/gp_model.hpp"
#include "lqrtune/presets.hpp"

using namespace lqrtune;

namespace {

Hyperparams hyper(std::initializer_list<double> ls, double sigma, double sigma_n) {
  Hyperparams h;
  h.lengthscales = Eigen::VectorXd(static_cast<Eigen::Index>(ls.size()));
  int i = 0;
  for (double l : ls) h.lengthscales[i++] = l;
  h.signal_std = sigma;
  h.noise_std = sigma_n;
  return h;
}

Dataset random_dataset(int n, int d, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> unif(lo, hi);
  std::normal_distribution<double> normal;
  Dataset data{Eigen::MatrixXd(n, d), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.X(i, j) = unif(rng);
    data.y[i] = normal(rng);
  }
  return data;
}

// Log density of N(0, C) at y, from a dense determinant and inverse.
double mvn_log_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& C) {
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(C);
  const double quad = y.dot(lu.inverse() * y);
  return -0.5 * quad - 0.5 * std::log(lu.determinant()) - 0.5 * y.size() * std::log(2.0 * M_PI);
}

Eigen::MatrixXd dense_gram(const Dataset& data, const Hyperparams& h) {
  const int n = data.size();
  Eigen::MatrixXd C(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double r2 = 0.0;
      for (int d = 0; d < data.dim(); ++d) {
        const double z = (data.X(i, d) - data.X(j, d)) / h.lengthscales[d];
        r2 += z * z;
      }
      C(i, j) = h.signal_std * h.signal_std * std::exp(-0.5 * r2);
    }
  }
  C.diagonal().array() +=
      h.noise_std * h.noise_std + GpSurrogate::kJitter * h.signal_std * h.signal_std;
  return C;
}

}  // namespace

TEST_SUITE("gp_model") {

TEST_CASE("kernel values") {
  const Hyperparams h = hyper({2.5}, 0.2, 0.033);
  Eigen::VectorXd a(1), b(1);
  a << 1.0;
  b << 3.5;
  CHECK(kernel_se_ard(a, a, h) == 0.2 * 0.2);
  CHECK(kernel_se_ard(a, b, h) == doctest::Approx(0.04 * std::exp(-0.5)).epsilon(1e-14));
  CHECK(kernel_se_ard(a, b, h) == doctest::Approx(0.0242612).epsilon(1e-6));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 10);
  const Hyperparams h3 = hyper({0.5, 2.0, 7.0}, 1.3, 0.1);
  for (int t = 0; t < 20; ++t) {
    const Eigen::Vector3d p(u(rng), u(rng), u(rng)), q(u(rng), u(rng), u(rng));
    CHECK(kernel_se_ard(p, q, h3) == kernel_se_ard(q, p, h3));
  }
}

TEST_CASE("kernel matrix matches the pairwise kernel") {
  std::mt19937_64 rng(2);
  const Dataset d = random_dataset(6, 3, rng);
  const Hyperparams h = hyper({0.3, 0.7, 1.1}, 0.8, 0.1);
  const Eigen::MatrixXd K = kernel_matrix(d.X, d.X, h);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      CHECK(K(i, j) == doctest::Approx(kernel_se_ard(d.X.row(i).transpose(), d.X.row(j).transpose(), h)).epsilon(1e-15));
}

TEST_CASE("empty dataset gives the prior") {
  const Hyperparams h = hyper({1.0, 1.0}, 0.75, 0.03);
  const GpSurrogate gp(h, Dataset{Eigen::MatrixXd(0, 2), Eigen::VectorXd(0)});
  const Prediction p = gp.posterior(Eigen::Vector2d(0.3, 4.0));
  CHECK(p.mean == 0.0);
  CHECK(p.variance == doctest::Approx(0.75 * 0.75).epsilon(1e-14));
}

TEST_CASE("one observation closed form") {
  const double s2 = 0.04, n2 = 0.033 * 0.033;
  const Hyperparams h = hyper({2.5, 2.5}, 0.2, 0.033);
  Dataset d{Eigen::MatrixXd(1, 2), Eigen::VectorXd(1)};
  d.X << 1.0, 2.0;
  d.y << 0.7;
  const GpSurrogate gp(h, d);
  const Prediction p = gp.posterior(Eigen::Vector2d(1.0, 2.0));
  const double denom = s2 + n2 + GpSurrogate::kJitter * s2;
  CHECK(p.mean == doctest::Approx(0.7 * s2 / denom).epsilon(1e-12));
  CHECK(p.variance == doctest::Approx(s2 - s2 * s2 / denom).epsilon(1e-10));
}

TEST_CASE("near-noiseless posterior interpolates the data") {
  std::mt19937_64 rng(3);
  const Dataset d = random_dataset(10, 2, rng);
  const GpSurrogate gp(hyper({0.2, 0.2}, 1.0, 1e-8), d);
  for (int i = 0; i < d.size(); ++i) {
    CHECK(std::abs(gp.posterior(d.X.row(i).transpose()).mean - d.y[i]) <= 1e-8);
  }
}

TEST_CASE("log marginal likelihood matches the dense density") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Dataset d = random_dataset(3, 2, rng, 0.01, 10.0);
    const Hyperparams h = hyper({2.5, 1.0 + trial * 0.3}, 0.2 + 0.1 * trial, 0.033);
    const GpSurrogate gp(h, d);
    CHECK(std::abs(gp.log_marginal_likelihood() - mvn_log_density(d.y, dense_gram(d, h))) <= 1e-10);
  }

  const Hyperparams h = hyper({1.0}, 0.2, 0.033);
  Dataset one{Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::VectorXd::Zero(1)};
  const double c = 0.04 + 0.033 * 0.033 + GpSurrogate::kJitter * 0.04;
  CHECK(GpSurrogate(h, one).log_marginal_likelihood() ==
        doctest::Approx(-0.5 * std::log(c) - 0.5 * std::log(2 * M_PI)).epsilon(1e-13));
}

TEST_CASE("shrinking y toward zero raises the likelihood") {
  std::mt19937_64 rng(5);
  const Dataset d = random_dataset(5, 2, rng);
  const Hyperparams h = hyper({0.4, 0.4}, 1.0, 0.1);
  double prev = -1e300;
  for (double scale : {2.0, 1.0, 0.5, 0.0}) {
    Dataset s = d;
    s.y *= scale;
    const double lml = GpSurrogate(h, s).log_marginal_likelihood();
    CHECK(lml > prev);
    prev = lml;
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.3, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Dataset d = random_dataset(5, 2, rng, 0.01, 10.0);
    const Hyperparams h = hyper({u(rng) * 2, u(rng) * 2}, u(rng) * 0.3, u(rng) * 0.05);
    const Eigen::VectorXd grad = GpSurrogate(h, d).log_marginal_likelihood_gradient();
    const Eigen::VectorXd base = h.to_log();
    REQUIRE(grad.size() == 4);
    for (int i = 0; i < base.size(); ++i) {
      const double step = 1e-6 * std::max(1.0, std::abs(base[i]));
      Eigen::VectorXd plus = base, minus = base;
      plus[i] += step;
      minus[i] -= step;
      const double fd = (GpSurrogate(Hyperparams::from_log(plus), d).log_marginal_likelihood() -
                         GpSurrogate(Hyperparams::from_log(minus), d).log_marginal_likelihood()) /
                        (2 * step);
      CHECK(std::abs(grad[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("posterior variance stays below the prior and duplicates never add variance") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  const Dataset d = random_dataset(8, 2, rng, 0.01, 10.0);
  const Hyperparams h = hyper({2.5, 2.5}, 0.2, 0.033);
  const GpSurrogate gp(h, d);
  const GpSurrogate dup = gp.with_observation(d.X.row(3).transpose(), d.y[3]);
  CHECK(dup.data().size() == 9);
  for (int t = 0; t < 200; ++t) {
    const Eigen::Vector2d q(u(rng), u(rng));
    const Prediction p = gp.posterior(q);
    CHECK(p.variance >= 0.0);
    CHECK(p.variance <= 0.04 + 1e-10);
    if (t < 10) CHECK(dup.posterior(q).variance <= p.variance + 1e-12);
  }
}

TEST_CASE("joint and cross posterior agree with the pointwise posterior") {
  std::mt19937_64 rng(8);
  const Dataset d = random_dataset(6, 2, rng, 0.01, 10.0);
  const GpSurrogate gp(hyper({2.0, 3.0}, 0.5, 0.05), d);
  const Dataset q = random_dataset(5, 2, rng, 0.01, 10.0);
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  gp.posterior_joint(q.X, mean, cov);
  for (int i = 0; i < 5; ++i) {
    const Prediction p = gp.posterior(q.X.row(i).transpose());
    CHECK(mean[i] == doctest::Approx(p.mean).epsilon(1e-12));
    CHECK(cov(i, i) == doctest::Approx(p.variance).epsilon(1e-10));
  }
  const Eigen::VectorXd cross = gp.posterior_cross(q.X, q.X.row(2).transpose());
  for (int i = 0; i < 5; ++i) CHECK(cross[i] == doctest::Approx(cov(i, 2)).epsilon(1e-10));
}

TEST_CASE("gamma prior moment matching") {
  const GammaPrior g{2.5, 0.11};
  CHECK(g.shape() == doctest::Approx(516.53).epsilon(1e-4));
  CHECK(g.scale() == doctest::Approx(0.004840).epsilon(1e-3));
  CHECK(g.mode() == doctest::Approx(2.4952).epsilon(1e-4));
  for (double x : {0.5, 2.4, 3.1}) {
    const double k = g.shape(), s = g.scale();
    const double oracle = (k - 1) * std::log(x) - x / s - std::lgamma(k) - k * std::log(s);
    CHECK(g.log_pdf(x) == doctest::Approx(oracle).epsilon(1e-12));
    const double h = 1e-6;
    const double fd = (g.log_pdf(x * std::exp(h)) - g.log_pdf(x * std::exp(-h))) / (2 * h);
    CHECK(g.dlog_pdf_dlog(x) == doctest::Approx(fd).epsilon(1e-5));
  }
  CHECK(GammaPrior{1.0, 2.0}.mode() == 0.0);
}

TEST_CASE("MAP with a single datum lands on the lengthscale prior mode") {
  const HyperPriors pri = priors_2d();
  Dataset d{Eigen::MatrixXd(1, 2), Eigen::VectorXd(1)};
  d.X << 5.0, 5.0;
  d.y << 0.05;
  MapFitOptions opts;
  opts.seed = 3;
  const MapFit fit = fit_map(d, pri, pri.means(2), opts);
  CHECK(fit.hyper.lengthscales[0] == doctest::Approx(2.4952).epsilon(1e-3));
  CHECK(fit.hyper.lengthscales[1] == doctest::Approx(2.4952).epsilon(1e-3));
  CHECK(fit.objective >= fit.init_objective);
}

TEST_CASE("MAP objective never decreases from the initial point") {
  std::mt19937_64 rng(9);
  const HyperPriors pri = priors_2d();
  for (int trial = 0; trial < 5; ++trial) {
    Dataset d = random_dataset(8, 2, rng, 0.01, 10.0);
    d.y *= 0.05;
    MapFitOptions opts;
    opts.seed = trial;
    const Hyperparams init = pri.means(2);
    const MapFit fit = fit_map(d, pri, init, opts);
    CHECK(fit.init_objective == doctest::Approx(map_objective(d, pri, init)).epsilon(1e-12));
    CHECK(fit.objective >= fit.init_objective);
    CHECK(fit.objective == doctest::Approx(map_objective(d, pri, fit.hyper)).epsilon(1e-12));
    if (!fit.improved) CHECK(fit.hyper.to_log() == init.to_log());

    const MapFit again = fit_map(d, pri, init, opts);
    CHECK(again.hyper.to_log() == fit.hyper.to_log());
  }
}

TEST_CASE("ARD relevance scores") {
  const Relevance r = ard_relevance(hyper({2.5, 250.0}, 1.0, 0.1), Eigen::Vector2d(9.99, 9.99));
  CHECK(r.scores[0] == doctest::Approx(3.996));
  CHECK(r.scores[1] == doctest::Approx(0.03996));
  CHECK_FALSE(r.irrelevant[0]);
  CHECK(r.irrelevant[1]);
  CHECK(ard_relevance(hyper({9.99}, 1, 0.1), Eigen::VectorXd::Constant(1, 9.99)).scores[0] == 1.0);
  CHECK(ard_relevance(hyper({1e300}, 1, 0.1), Eigen::VectorXd::Constant(1, 9.99)).irrelevant[0]);
}

TEST_CASE("box helpers") {
  const Box b{Eigen::Vector2d(0.01, 0.01), Eigen::Vector2d(10, 10)};
  const auto c = b.corners();
  REQUIRE(c.size() == 4u);
  CHECK(c[0] == Eigen::VectorXd(Eigen::Vector2d(0.01, 0.01)));
  CHECK(c[1] == Eigen::VectorXd(Eigen::Vector2d(10, 0.01)));
  CHECK(c[2] == Eigen::VectorXd(Eigen::Vector2d(0.01, 10)));
  CHECK(c[3] == Eigen::VectorXd(Eigen::Vector2d(10, 10)));
  CHECK(b.contains(Eigen::Vector2d(10, 0.01)));
  CHECK_FALSE(b.contains(Eigen::Vector2d(10.0001, 1)));
  CHECK(b.from_unit(Eigen::Vector2d(0.5, 1.0)).isApprox(Eigen::Vector2d(5.005, 10)));
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS_AS(hyper({-1.0}, 1.0, 0.1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(hyper({1.0}, 1.0, 0.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS((GammaPrior{0.0, 1.0}.validate()), std::invalid_argument);
  Dataset bad{Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(3)};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  const Box b{Eigen::Vector2d(0.01, 0.01), Eigen::Vector2d(10, 10)};
  Dataset outside{Eigen::MatrixXd::Constant(1, 2, 20.0), Eigen::VectorXd::Zero(1)};
  CHECK_THROWS_AS(outside.validate(&b), std::invalid_argument);
  Dataset nan{Eigen::MatrixXd::Constant(1, 2, 1.0), Eigen::VectorXd::Constant(1, std::nan(""))};
  CHECK_THROWS_AS(nan.validate(), std::invalid_argument);
}

}  // TEST_SUITE
