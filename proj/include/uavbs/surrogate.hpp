#pragma once

// Concave surrogates of the penalised objective Z around a local point: one in
// the UAV positions X (P, C fixed) and one in the resources (P, C) with X
// fixed. Both reproduce Z and its gradient at the expansion point.
//
// Rates are in bits/s/Hz, so every natural-log derivative carries the factor
// 1/ln 2 (kLog2e below).

#include <numbers>
#include <vector>

#include "uavbs/channel.hpp"
#include "uavbs/netmodel.hpp"
#include "uavbs/subsolver.hpp"

namespace uavbs {

inline constexpr double kLog2e = std::numbers::log2e;

class PositioningSurrogate {
 public:
  std::size_t users() const { return b.dim_k(); }
  std::size_t uavs() const { return b.dim_m(); }
  std::size_t subcarriers() const { return b.dim_n(); }

  /// R_k^Pos at positions x (M x 3).
  double rate(std::size_t k, const Eigen::MatrixX3d& x) const;
  /// Gradient of R_k^Pos with respect to x (M x 3).
  Eigen::MatrixX3d rate_gradient(std::size_t k, const Eigen::MatrixX3d& x) const;
  /// min_k R_k^Pos + penalty constant.
  double value(const Eigen::MatrixX3d& x) const;

  // Expansion data. B and B_minus exclude the 1/ln 2 factor.
  Tensor3 b;         // c / (1 + sum_j p_jn g_kj / sigma^2)
  Tensor3 b_minus;   // c / (1 + sum_{j != m} p_jn g_kj / sigma^2)
  Tensor3 r_hat0;    // R-hat_kmn at the expansion point
  Tensor3 r_bar0;    // R-bar_kmn at the expansion point
  Eigen::MatrixXd a;                 // A_km, K x M
  std::vector<Vec3> delta;           // correction slope, index k*M+m
  std::vector<Vec3> grad_gain;       // exact gradient of g_k at x_m, index k*M+m
  Eigen::MatrixXd quad_weight;       // w_kj = log2e sum_{m,n} B_kmn p_jn / sigma^2
  Eigen::MatrixXd cross_weight;      // v_kj = log2e sum_{m != j,n} B-_kmn p_jn / sigma^2
  Eigen::VectorXd base_rate;         // R_k at the expansion point
  double penalty = 0.0;              // rho(Lambda, C^l)
  Eigen::MatrixX3d x_ref;
  std::vector<Vec3> user_pos;
};

/// `links` must be evaluate_links(model, state.x).
PositioningSurrogate build_positioning_surrogate(const SolutionState& state,
                                                 const ChannelModel& model,
                                                 const std::vector<ChannelEval>& links);

/// 2 (x_m^l - x_j^l)' (x_m - x_j) - |x_m^l - x_j^l|^2 >= d_min^2 for one pair.
struct SeparationCut {
  std::size_t m = 0, j = 0;
  Vec3 direction;  // x_m^l - x_j^l
  double offset = 0.0;  // |x_m^l - x_j^l|^2 + d_min^2

  /// Left-hand side minus d_min^2 (nonnegative when satisfied).
  double slack(const Eigen::MatrixX3d& x) const;
};

std::vector<SeparationCut> linearize_separation(const Eigen::MatrixX3d& x_ref, double d_min);

/// Positioning subproblem over the UAVs that influence at least one rate.
struct PositioningProblem {
  MaximinProblem problem;
  std::vector<std::size_t> free_uavs;
};

PositioningProblem positioning_problem(const PositioningSurrogate& sur, const Limits& limits);

/// Writes the free UAV coordinates of `v` into a copy of `x_ref`.
Eigen::MatrixX3d unpack_positions(const PositioningProblem& pp, const Eigen::VectorXd& v,
                                  const Eigen::MatrixX3d& x_ref);

class RaSurrogate {
 public:
  std::size_t users() const { return rate_coef.dim_k(); }
  std::size_t uavs() const { return rate_coef.dim_m(); }
  std::size_t subcarriers() const { return rate_coef.dim_n(); }

  /// R-hat_kmn(P, C^l) in bits.
  double r_hat(std::size_t k, std::size_t m, std::size_t n, const Eigen::MatrixXd& p) const;
  /// R-bar_kmn(P, C^l) in bits.
  double r_bar(std::size_t k, std::size_t m, std::size_t n, const Eigen::MatrixXd& p) const;
  /// Linear upper bound of r_bar around P^l.
  double r_bar_ub(std::size_t k, std::size_t m, std::size_t n, const Eigen::MatrixXd& p) const;
  /// sum_{m,n} R^appr_kmn(P, C).
  double rate(std::size_t k, const Eigen::MatrixXd& p, const Tensor3& c) const;
  /// Linear lower bound of the penalty around C^l.
  double rho_lb(const Tensor3& c) const;
  /// min_k rate + rho_lb.
  double value(const Eigen::MatrixXd& p, const Tensor3& c) const;

  Eigen::MatrixXd snr_gain;  // g_k(x_m) / sigma^2, K x M
  Tensor3 c_ref;
  Eigen::MatrixXd p_ref;
  Tensor3 b_prime_minus;     // c^l / (1 + sum_{j != m} p^l_jn g_kj / sigma^2)
  Tensor3 rate_coef;         // log2(1 + SINR^l_kmn)
  Tensor3 r_bar0;            // R-bar_kmn(P^l, C^l)
  Tensor3 penalty_slope;     // lambda (2 c^l - 1)
  double penalty_const = 0.0;  // -sum lambda (c^l)^2
};

/// `gains` is the K x M gain matrix at the (already updated) positions.
RaSurrogate build_ra_surrogate(const SolutionState& state, const Eigen::MatrixXd& gains,
                               double noise_power);

/// Variable layout [P (m-major), C (k,m,n)]; C is absent when it is held fixed.
struct RaLayout {
  std::size_t k = 0, m = 0, n = 0;
  bool optimize_c = true;
  int p_index(std::size_t mi, std::size_t ni) const { return static_cast<int>(mi * n + ni); }
  int c_index(std::size_t ki, std::size_t mi, std::size_t ni) const {
    return static_cast<int>(m * n + (ki * m + mi) * n + ni);
  }
  int dim() const { return static_cast<int>(m * n + (optimize_c ? k * m * n : 0)); }
};

struct RaProblem {
  MaximinProblem problem;
  RaLayout layout;
};

/// With `optimize_c == false` (or a single UAV-subcarrier pair) C stays at C^l.
RaProblem ra_problem(const RaSurrogate& sur, const Limits& limits, bool optimize_c);

void unpack_ra(const RaProblem& rp, const Eigen::VectorXd& v, const RaSurrogate& sur,
               Eigen::MatrixXd& p, Tensor3& c);

}  // namespace uavbs
