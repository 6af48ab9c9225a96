#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace lqrtune {

/// Riccati recursion did not reach the residual tolerance within the iteration cap.
class NonConvergence : public std::runtime_error {
 public:
  explicit NonConvergence(const std::string& what) : std::runtime_error(what) {}
};

/// Discrete-time linear approximation x_{k+1} = A x_k + B u_k of a plant.
struct NominalModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  double dt = 0.0;  // seconds

  int num_states() const { return static_cast<int>(A.rows()); }
  int num_inputs() const { return static_cast<int>(B.cols()); }

  /// Throws std::invalid_argument on shape mismatch or non-positive dt.
  void validate() const;
};

/// State and input weights of a quadratic cost. Used both for the fixed
/// performance weights (Q, R) and for the tunable design weights.
struct WeightPair {
  Eigen::MatrixXd Wx;
  Eigen::MatrixXd Wu;

  /// Throws std::invalid_argument unless both matrices are symmetric
  /// (1e-12 relative) and positive definite.
  void validate() const;
};

/// Static feedback u = F x + Fz z. The minus sign of the LQR law lives in F.
struct ControllerGain {
  Eigen::MatrixXd F;
  double Fz = 0.0;
};

struct DareOptions {
  double tolerance = 1e-10;
  int max_iterations = 100000;
};

/// Solves P = Wx + A'PA - A'PB (Wu + B'PB)^-1 B'PA.
///
/// The doubling form of the Riccati recursion is tried first; plain recursion
/// is the fallback. Either way the returned P meets the residual tolerance,
/// otherwise NonConvergence is thrown (non-stabilizable pair or badly scaled
/// weights).
Eigen::MatrixXd solve_dare(const NominalModel& model, const WeightPair& weights,
                           const DareOptions& options = {});

/// Plain recursion from P0 = Wx, symmetrized every step. Slow when the
/// closed loop has eigenvalues near the unit circle.
Eigen::MatrixXd solve_dare_recursion(const NominalModel& model, const WeightPair& weights,
                                     const DareOptions& options = {});

/// Relative Frobenius residual of the Riccati fixed point at P.
double dare_residual(const NominalModel& model, const WeightPair& weights,
                     const Eigen::MatrixXd& P);

/// F = -(Wu + B'PB)^-1 B'PA.
ControllerGain lqr_gain(const NominalModel& model, const WeightPair& weights, double Fz = 0.0,
                        const DareOptions& options = {});

/// max |eig(A + B F)|; below one means the nominal loop is stable.
double closed_loop_spectral_radius(const NominalModel& model, const ControllerGain& gain);

}  // namespace lqrtune
