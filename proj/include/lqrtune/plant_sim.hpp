#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "lqrtune/lqr_core.hpp"

namespace lqrtune {

/// Physical parameters of a pole on an acceleration-controlled pivot.
struct PoleParams {
  double m = 0.27;    // kg
  double r = 0.33;    // m, pivot to center of mass
  double xi = 0.012;  // N m s
  double g = 9.81;    // m/s^2

  static PoleParams short_pole() { return {0.27, 0.33, 0.012, 9.81}; }
  static PoleParams long_pole() { return {0.29, 0.64, 0.012, 9.81}; }

  void validate() const;
};

/// Plant state plus the controller's integrator on the pivot position.
struct PlantState {
  double psi = 0.0;      // rad, from upright
  double psi_dot = 0.0;  // rad/s
  double s = 0.0;        // m
  double s_dot = 0.0;    // m/s
  double z = 0.0;        // m s

  using Vector = Eigen::Matrix<double, 5, 1>;
  Vector as_vector() const { return {psi, psi_dot, s, s_dot, z}; }
  static PlantState from_vector(const Vector& v) { return {v[0], v[1], v[2], v[3], v[4]}; }
  /// The physical part [psi, psi_dot, s, s_dot].
  Eigen::Vector4d physical() const { return {psi, psi_dot, s, s_dot}; }
  bool finite() const { return as_vector().allFinite(); }
};

struct SafetyLimits {
  double s_max = 0.5;     // m
  double u_max = 5.0;     // m/s^2
  double psi_max = 0.35;  // rad

  void validate() const;
};

enum class Violation { Position, Input, Angle, NonFinite };

std::string_view to_string(Violation v);

/// Time derivative of the state under pivot acceleration u.
PlantState::Vector pole_derivatives(const PlantState& state, double u, const PoleParams& params);

/// One classic Runge-Kutta step with u held constant.
PlantState rk4_step(const PlantState& state, double u, const PoleParams& params, double dt);

/// Jacobian of the dynamics at the upright equilibrium over [psi, psi_dot, s, s_dot],
/// discretized by zero-order hold.
NominalModel linearize_and_discretize(const PoleParams& params, double dt);

/// Continuous-time Jacobian pair (A, B) at the upright equilibrium.
std::pair<Eigen::Matrix4d, Eigen::Vector4d> linearize_continuous(const PoleParams& params);

/// First bound exceeded, if any. Bounds are inclusive: |x| == bound is allowed.
std::optional<Violation> check_safety(const PlantState& state, double u, const SafetyLimits& limits);

struct EpisodeConfig {
  double dt = 0.001;          // s
  double horizon_s = 120.0;   // s
  double burn_in_s = 30.0;    // s, excluded from the cost
  double psi0_range = 0.02;   // psi0 ~ U(-range, range)
  double noise_psi = 1e-3;    // rad, std of the angle fed to the controller
  double noise_psi_dot = 1e-2;  // rad/s
  double j_unstable = 3.0;    // cost assigned when a safety bound is hit
  std::optional<PlantState> initial_state;  // overrides psi0_range when set
  bool record_trajectory = false;

  long horizon_steps() const;
  long burn_in_steps() const;
  void validate() const;
};

struct TrajectoryRow {
  long k = 0;
  double t = 0.0;
  PlantState state;
  double u = 0.0;
};

struct CostEvaluation {
  double j_hat = 0.0;
  bool stable = true;
  long steps_run = 0;
  std::optional<long> failure_step;
  std::optional<Violation> violation;
  std::vector<TrajectoryRow> trajectory;  // empty unless requested
};

/// Closed-loop episode on the nonlinear plant with u_k = F x_k + Fz z_k, where
/// the controller sees the state plus Gaussian noise on psi and psi_dot. The
/// cost is the per-step average of x'Qx + u'Ru after the burn-in window.
CostEvaluation run_episode(const ControllerGain& gain, const PoleParams& params,
                           const EpisodeConfig& config, const WeightPair& perf,
                           const SafetyLimits& limits, std::uint64_t seed);

/// Writes `k,t,psi,psi_dot,s,s_dot,z,u`, one row per `stride` steps. The last
/// row is always written so a failing episode ends at its violation step.
void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows, int stride = 1);

}  // namespace lqrtune
