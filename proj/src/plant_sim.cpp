#include "lqrtune/plant_sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

namespace lqrtune {

void PoleParams::validate() const {
  if (!(m > 0.0 && r > 0.0 && xi >= 0.0 && g > 0.0)) {
    throw std::invalid_argument("pole parameters need m, r, g > 0 and xi >= 0");
  }
}

void SafetyLimits::validate() const {
  if (!(s_max > 0.0 && u_max > 0.0 && psi_max > 0.0)) {
    throw std::invalid_argument("safety limits must be positive");
  }
}

std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::Position: return "position";
    case Violation::Input: return "input";
    case Violation::Angle: return "angle";
    case Violation::NonFinite: return "non-finite";
  }
  return "unknown";
}

PlantState::Vector pole_derivatives(const PlantState& x, double u, const PoleParams& p) {
  const double psi_ddot = (p.g / p.r) * std::sin(x.psi) - (std::cos(x.psi) / p.r) * u -
                          p.xi / (p.m * p.r * p.r) * x.psi_dot;
  return {x.psi_dot, psi_ddot, x.s_dot, u, x.s};
}

PlantState rk4_step(const PlantState& state, double u, const PoleParams& params, double dt) {
  const PlantState::Vector x = state.as_vector();
  const auto f = [&](const PlantState::Vector& v) {
    return pole_derivatives(PlantState::from_vector(v), u, params);
  };
  const PlantState::Vector k1 = f(x);
  const PlantState::Vector k2 = f(x + 0.5 * dt * k1);
  const PlantState::Vector k3 = f(x + 0.5 * dt * k2);
  const PlantState::Vector k4 = f(x + dt * k3);
  return PlantState::from_vector(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

std::pair<Eigen::Matrix4d, Eigen::Vector4d> linearize_continuous(const PoleParams& p) {
  p.validate();
  Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
  A(0, 1) = 1.0;
  A(1, 0) = p.g / p.r;
  A(1, 1) = -p.xi / (p.m * p.r * p.r);
  A(2, 3) = 1.0;
  Eigen::Vector4d B(0.0, -1.0 / p.r, 0.0, 1.0);
  return {A, B};
}

namespace {

// exp(M) by scaling and squaring around a Taylor series summed until the
// terms stop changing the result.
Eigen::MatrixXd expm_series(const Eigen::MatrixXd& M) {
  const double norm = M.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Eigen::MatrixXd S = M / std::ldexp(1.0, squarings);

  const auto n = M.rows();
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k < 60; ++k) {
    term = term * S / static_cast<double>(k);
    const Eigen::MatrixXd next = result + term;
    if (next == result) break;
    result = next;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

}  // namespace

NominalModel linearize_and_discretize(const PoleParams& params, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const auto [A, B] = linearize_continuous(params);
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(5, 5);
  block.topLeftCorner(4, 4) = A * dt;
  block.topRightCorner(4, 1) = B * dt;
  const Eigen::MatrixXd E = expm_series(block);
  return NominalModel{E.topLeftCorner(4, 4), E.topRightCorner(4, 1), dt};
}

std::optional<Violation> check_safety(const PlantState& state, double u, const SafetyLimits& limits) {
  if (!state.finite() || !std::isfinite(u)) return Violation::NonFinite;
  if (std::abs(state.s) > limits.s_max) return Violation::Position;
  if (std::abs(u) > limits.u_max) return Violation::Input;
  if (std::abs(state.psi) > limits.psi_max) return Violation::Angle;
  return std::nullopt;
}

long EpisodeConfig::horizon_steps() const { return std::lround(horizon_s / dt); }
long EpisodeConfig::burn_in_steps() const { return std::lround(burn_in_s / dt); }

void EpisodeConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(horizon_s >= 0.0 && burn_in_s >= 0.0)) throw std::invalid_argument("negative duration");
  if (burn_in_steps() > horizon_steps()) throw std::invalid_argument("burn-in exceeds horizon");
  if (!(psi0_range >= 0.0 && noise_psi >= 0.0 && noise_psi_dot >= 0.0)) {
    throw std::invalid_argument("initial range and noise levels must be non-negative");
  }
  if (!(j_unstable > 0.0)) throw std::invalid_argument("j_unstable must be positive");
}

CostEvaluation run_episode(const ControllerGain& gain, const PoleParams& params,
                           const EpisodeConfig& config, const WeightPair& perf,
                           const SafetyLimits& limits, std::uint64_t seed) {
  params.validate();
  config.validate();
  limits.validate();
  if (gain.F.rows() != 1 || gain.F.cols() != 4) throw std::invalid_argument("gain must be 1x4");
  if (perf.Wx.rows() != 4 || perf.Wx.cols() != 4 || perf.Wu.size() != 1) {
    throw std::invalid_argument("performance weights must be 4x4 and 1x1");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  PlantState x;
  if (config.initial_state) {
    x = *config.initial_state;
  } else if (config.psi0_range > 0.0) {
    x.psi = std::uniform_real_distribution<double>(-config.psi0_range, config.psi0_range)(rng);
  }

  const Eigen::RowVector4d F = gain.F.row(0);
  const Eigen::Matrix4d Q = perf.Wx;
  const double R = perf.Wu(0, 0);
  const long K = config.horizon_steps();
  const long K_burn = config.burn_in_steps();

  CostEvaluation result;
  if (config.record_trajectory) result.trajectory.reserve(static_cast<std::size_t>(K));

  double sum = 0.0;
  for (long k = 0; k < K; ++k) {
    PlantState measured = x;
    measured.psi += config.noise_psi * normal(rng);
    measured.psi_dot += config.noise_psi_dot * normal(rng);
    const double u_cmd = F.dot(measured.physical()) + gain.Fz * measured.z;

    if (config.record_trajectory) {
      result.trajectory.push_back({k, static_cast<double>(k) * config.dt, x, u_cmd});
    }
    if (auto v = check_safety(x, u_cmd, limits)) {
      result.stable = false;
      result.failure_step = k;
      result.violation = v;
      result.steps_run = k;
      result.j_hat = config.j_unstable;
      return result;
    }

    const double u = std::clamp(u_cmd, -limits.u_max, limits.u_max);
    if (k >= K_burn) {
      const Eigen::Vector4d phys = x.physical();
      sum += phys.dot(Q * phys) + R * u * u;
    }
    x = rk4_step(x, u, params, config.dt);
  }

  result.steps_run = K;
  const long K_eff = K - K_burn;
  result.j_hat = K_eff > 0 ? sum / static_cast<double>(K_eff) : 0.0;
  return result;
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows, int stride) {
  if (stride < 1) throw std::invalid_argument("stride must be at least 1");
  out << "k,t,psi,psi_dot,s,s_dot,z,u\n";
  const auto write = [&](const TrajectoryRow& row) {
    out << row.k << ',' << row.t << ',' << row.state.psi << ',' << row.state.psi_dot << ','
        << row.state.s << ',' << row.state.s_dot << ',' << row.state.z << ',' << row.u << '\n';
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i % static_cast<std::size_t>(stride) == 0 || i + 1 == rows.size()) write(rows[i]);
  }
}

}  // namespace lqrtune
