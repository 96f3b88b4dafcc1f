#pragma once

// Downlink OFDMA rate model: SINR, per-user rates, the max-min objective with
// the binariness penalty, and feasibility checks for a solution state.

#include <string>
#include <vector>

#include "uavbs/channel.hpp"
#include "uavbs/types.hpp"

namespace uavbs {

/// Positions X (M x 3, meters), powers P (M x N, watts), association C and
/// penalty multipliers Lambda (K x M x N).
struct SolutionState {
  Eigen::MatrixX3d x;
  Eigen::MatrixXd p;
  Tensor3 c;
  Tensor3 lambda;

  std::size_t users() const { return c.dim_k(); }
  std::size_t uavs() const { return c.dim_m(); }
  std::size_t subcarriers() const { return c.dim_n(); }

  Vec3 position(std::size_t m) const {
    return x.row(static_cast<Eigen::Index>(m)).transpose();
  }
};

/// Flight region [0, x_d] x [0, y_d] x [h_min, h_max], power budget and
/// collision distance.
struct Limits {
  double x_d = 1500.0;
  double y_d = 1500.0;
  double h_min = 100.0;
  double p_max = 1.0;
  double d_min = 25.0;
  double h_max = 3000.0;
};

struct RateBreakdown {
  Tensor3 sinr;
  Tensor3 rate_kmn;  // bits/s/Hz
  Eigen::VectorXd rate_user;
  double min_rate = 0.0;
  std::size_t bottleneck_user = 0;
};

struct ObjectiveEval {
  double z = 0.0;
  double penalty = 0.0;
  RateBreakdown rates;
};

/// K x M gain matrix from link evaluations laid out as evaluate_links returns.
Eigen::MatrixXd gain_matrix(const std::vector<ChannelEval>& links, std::size_t users,
                            std::size_t uavs);

Tensor3 sinr(const SolutionState& state, const Eigen::MatrixXd& gains, double noise_power);

RateBreakdown rates(const SolutionState& state, const Eigen::MatrixXd& gains,
                    double noise_power);

/// -sum lambda c (1 - c); never positive for lambda >= 0.
double penalty(const Tensor3& c, const Tensor3& lambda);

/// min_k R_k + penalty(C, Lambda).
ObjectiveEval objective_z(const SolutionState& state, const Eigen::MatrixXd& gains,
                          double noise_power);

/// max over entries of c (1 - c).
double max_violation(const Tensor3& c);

/// Human-readable violations of the original problem's constraints. With
/// `require_binary` the association must be exactly 0/1.
std::vector<std::string> feasibility_violations(const SolutionState& state,
                                                const Limits& limits,
                                                bool require_binary = false);

/// ||x_m - x_j|| >= d_min - slack for every pair.
bool separation_ok(const Eigen::MatrixX3d& x, double d_min, double slack = 1e-9);

}  // namespace uavbs
