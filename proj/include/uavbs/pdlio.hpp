#pragma once

// Penalty-based double-loop optimisation. The inner loop alternates a
// positioning step and a resource-allocation step, each a surrogate solve
// followed by an Armijo backtracking search; the outer loop raises the
// binariness multipliers until the association is (numerically) binary.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uavbs/channel.hpp"
#include "uavbs/netmodel.hpp"
#include "uavbs/subsolver.hpp"
#include "uavbs/surrogate.hpp"

namespace uavbs {

struct AlgoParams {
  double zeta = 0.9;
  double tau = 0.01;
  double eps_inner = 1e-3;
  double eps_outer = 1e-4;
  /// Negative selects 0.2 K / (M N).
  double lambda0 = -1.0;
  double mu0 = 2.0;
  double gamma_floor = std::pow(0.9, 60);
  int max_inner = 100;
  int max_outer = 60;
  double tol_kkt = 1e-6;
  double tol_feas = 1e-9;
  int max_newton = 200;

  void validate() const;
  double initial_lambda(std::size_t k, std::size_t m, std::size_t n) const;
};

struct IterationTrace {
  int outer = 0;
  int inner = 0;
  double z = 0.0;           // after the iteration
  double z_start = 0.0;     // before the positioning step
  double z_mid = 0.0;       // after the positioning step
  double min_rate = 0.0;
  double max_violation = 0.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double slope1 = 0.0;      // directional derivative along the positioning direction
  double slope2 = 0.0;      // directional derivative along the resource direction
  std::size_t bottleneck = 0;
  std::string solver1;      // positioning subproblem status
  std::string solver2;      // resource subproblem status
  double wall_ms = 0.0;
};

struct StepResult {
  double gamma = 0.0;
  double slope = 0.0;
  double z_before = 0.0;
  double z_after = 0.0;
  std::size_t bottleneck = 0;
  SolveStatus solver = SolveStatus::converged;
};

/// Everything a step needs besides the state.
struct StepContext {
  const ChannelModel& model;
  const Limits& limits;
  const AlgoParams& params;
};

/// Observers called with each freshly built surrogate (before solving).
struct Hooks {
  std::function<void(const SolutionState&, const PositioningSurrogate&)> positioning;
  std::function<void(const SolutionState&, const RaSurrogate&, const Eigen::MatrixXd& gains)> ra;
};

/// Armijo stepsize zeta^t for the smallest t with `accept(gamma)`, or 0 when
/// gamma drops below the floor or the slope is not positive.
double backtrack(double slope, const AlgoParams& params,
                 const std::function<bool(double)>& accept);

StepResult positioning_step(SolutionState& state, const StepContext& ctx,
                            const Hooks& hooks = {});

StepResult ra_step(SolutionState& state, const StepContext& ctx, bool optimize_c,
                   const Hooks& hooks = {});

struct InnerOptions {
  bool position = true;
  bool optimize_c = true;
};

struct InnerResult {
  int iterations = 0;
  bool hit_cap = false;
};

InnerResult inner_loop(SolutionState& state, const StepContext& ctx, const InnerOptions& opts,
                       int outer_index, std::vector<IterationTrace>& trace,
                       const Hooks& hooks = {});

struct MultiplierUpdate {
  double mu = 0.0;      // adaption value used for this update
  double gamma = 0.0;   // dual stepsize
  bool finished = false;  // violation is exactly zero; multipliers untouched
};

/// lambda += gamma c(1-c) with gamma = mu / sum (c(1-c))^2; mu doubles when
/// `violation` is not strictly below `previous_violation`.
MultiplierUpdate update_multipliers(Tensor3& lambda, const Tensor3& c, double mu,
                                    double violation, double previous_violation);

/// Binary association: each user takes its largest entry (ties by larger
/// rate coefficient), skipping slots already taken.
Tensor3 round_association(const Tensor3& c, const Tensor3& sinr);

struct RunOptions {
  bool position = true;
  bool optimize_c = true;
  Hooks hooks;
};

struct RunReport {
  SolutionState state;
  RateBreakdown initial_rates;
  RateBreakdown final_rates;
  double initial_min_rate = 0.0;
  double min_rate = 0.0;
  double z_before_rounding = 0.0;
  double z_after_rounding = 0.0;
  double violation_before_rounding = 0.0;
  std::string status;  // "converged" | "not-converged"
  int outer_iterations = 0;
  int inner_iterations = 0;
  bool inner_cap_hit = false;
  std::vector<IterationTrace> trace;
  std::vector<std::string> violations;
};

/// Runs the double loop from `init`. Optimisation uses `opt_model`; reported
/// rates use `eval_model` (they differ only for the geometry-unaware scheme).
RunReport run(const SolutionState& init, const ChannelModel& opt_model,
              const ChannelModel& eval_model, const Limits& limits, const AlgoParams& params,
              const RunOptions& opts = {});

}  // namespace uavbs
