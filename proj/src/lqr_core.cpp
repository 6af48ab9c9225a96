#include "lqrtune/lqr_core.hpp"

#include <cmath>
#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace lqrtune {

namespace {

void require_spd(const Eigen::MatrixXd& M, const char* name) {
  if (M.rows() != M.cols() || M.rows() == 0) {
    throw std::invalid_argument(std::string(name) + " must be square and non-empty");
  }
  if (!M.allFinite()) throw std::invalid_argument(std::string(name) + " has non-finite entries");
  const double scale = std::max(M.norm(), 1e-300);
  if ((M - M.transpose()).norm() > 1e-12 * scale) {
    throw std::invalid_argument(std::string(name) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw std::invalid_argument(std::string(name) + " is not positive definite");
  }
}

// One Riccati step; also yields the gain term S^-1 B'PA.
Eigen::MatrixXd riccati_step(const NominalModel& m, const WeightPair& w, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd BtP = m.B.transpose() * P;
  const Eigen::MatrixXd S = w.Wu + BtP * m.B;
  const Eigen::MatrixXd BtPA = BtP * m.A;
  return w.Wx + m.A.transpose() * P * m.A - BtPA.transpose() * S.ldlt().solve(BtPA);
}

void check_problem(const NominalModel& model, const WeightPair& weights) {
  model.validate();
  weights.validate();
  if (weights.Wx.rows() != model.num_states() || weights.Wu.rows() != model.num_inputs()) {
    throw std::invalid_argument("weight dimensions do not match the model");
  }
}

}  // namespace

void NominalModel::validate() const {
  if (A.rows() != A.cols() || A.rows() == 0) throw std::invalid_argument("A must be square");
  if (B.rows() != A.rows() || B.cols() == 0) throw std::invalid_argument("B rows must match A");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
}

void WeightPair::validate() const {
  require_spd(Wx, "Wx");
  require_spd(Wu, "Wu");
}

double dare_residual(const NominalModel& model, const WeightPair& weights,
                     const Eigen::MatrixXd& P) {
  const double scale = std::max(P.norm(), 1e-300);
  return (P - riccati_step(model, weights, P)).norm() / scale;
}

Eigen::MatrixXd solve_dare_recursion(const NominalModel& model, const WeightPair& weights,
                                     const DareOptions& options) {
  check_problem(model, weights);
  Eigen::MatrixXd P = weights.Wx;
  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::MatrixXd next = riccati_step(model, weights, P);
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) break;
    const double change = (next - P).norm() / std::max(next.norm(), 1e-300);
    P = std::move(next);
    if (change <= options.tolerance && dare_residual(model, weights, P) <= options.tolerance) {
      return P;
    }
  }
  throw NonConvergence("Riccati recursion did not converge in " +
                       std::to_string(options.max_iterations) + " iterations");
}

namespace {

// Structure-preserving doubling: after k steps H holds the Riccati iterate
// 2^k steps ahead of P0 = 0.
std::optional<Eigen::MatrixXd> solve_dare_doubling(const NominalModel& model,
                                                   const WeightPair& weights,
                                                   const DareOptions& options) {
  const int n = model.num_states();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd Ak = model.A;
  Eigen::MatrixXd G = model.B * weights.Wu.ldlt().solve(model.B.transpose());
  Eigen::MatrixXd H = weights.Wx;
  for (int it = 0; it < 64; ++it) {
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(I + G * H);
    const Eigen::MatrixXd W1 = lu.solve(Ak);
    const Eigen::MatrixXd W2 = lu.solve(G);
    Eigen::MatrixXd H_next = H + Ak.transpose() * H * W1;
    G = G + Ak * W2 * Ak.transpose();
    Ak = Ak * W1;
    H_next = 0.5 * (H_next + H_next.transpose());
    G = 0.5 * (G + G.transpose());
    if (!H_next.allFinite() || !G.allFinite() || !Ak.allFinite()) return std::nullopt;
    const double change = (H_next - H).norm() / std::max(H_next.norm(), 1e-300);
    H = std::move(H_next);
    if (change <= 1e-15) break;
  }
  // A few plain steps absorb rounding from the doubling products.
  for (int it = 0; it < 4 && dare_residual(model, weights, H) > options.tolerance * 1e-2; ++it) {
    H = riccati_step(model, weights, H);
    H = 0.5 * (H + H.transpose());
  }
  if (!H.allFinite() || dare_residual(model, weights, H) > options.tolerance) return std::nullopt;
  return H;
}

}  // namespace

Eigen::MatrixXd solve_dare(const NominalModel& model, const WeightPair& weights,
                           const DareOptions& options) {
  check_problem(model, weights);
  if (auto P = solve_dare_doubling(model, weights, options)) return *P;
  return solve_dare_recursion(model, weights, options);
}

ControllerGain lqr_gain(const NominalModel& model, const WeightPair& weights, double Fz,
                        const DareOptions& options) {
  const Eigen::MatrixXd P = solve_dare(model, weights, options);
  const Eigen::MatrixXd BtP = model.B.transpose() * P;
  const Eigen::MatrixXd S = weights.Wu + BtP * model.B;
  ControllerGain gain;
  gain.F = -S.ldlt().solve(BtP * model.A);
  gain.Fz = Fz;
  if (!gain.F.allFinite()) throw NonConvergence("LQR gain is not finite");
  return gain;
}

double closed_loop_spectral_radius(const NominalModel& model, const ControllerGain& gain) {
  if (gain.F.rows() != model.num_inputs() || gain.F.cols() != model.num_states()) {
    throw std::invalid_argument("gain dimensions do not match the model");
  }
  const Eigen::MatrixXd closed = model.A + model.B * gain.F;
  Eigen::EigenSolver<Eigen::MatrixXd> eig(closed, false);
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace lqrtune
