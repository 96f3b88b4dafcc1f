#include "uavbs/pdlio.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>

namespace uavbs {

void AlgoParams::validate() const {
  if (!(zeta > 0.0 && zeta < 1.0)) throw Error("algo: zeta must lie in (0,1)");
  if (!(tau > 0.0 && tau < 1.0)) throw Error("algo: tau must lie in (0,1)");
  if (!(eps_inner > 0.0) || !(eps_outer > 0.0)) throw Error("algo: thresholds must be positive");
  if (!(mu0 > 0.0)) throw Error("algo: mu0 must be positive");
  if (!(gamma_floor > 0.0 && gamma_floor <= 1.0)) throw Error("algo: gamma_floor must lie in (0,1]");
  if (max_inner < 1 || max_outer < 1) throw Error("algo: iteration caps must be at least 1");
  if (!(tol_kkt > 0.0) || !(tol_feas > 0.0) || max_newton < 1) {
    throw Error("algo: subsolver tolerances must be positive");
  }
}

double AlgoParams::initial_lambda(std::size_t k, std::size_t m, std::size_t n) const {
  if (lambda0 >= 0.0) return lambda0;
  return 0.2 * static_cast<double>(k) / static_cast<double>(m * n);
}

namespace {

ObjectiveEval evaluate(const SolutionState& state, const ChannelModel& model,
                       Eigen::MatrixXd* gains_out = nullptr) {
  const auto links = evaluate_links(model, state.x);
  Eigen::MatrixXd gains = gain_matrix(links, state.users(), state.uavs());
  ObjectiveEval ev = objective_z(state, gains, model.params().noise_power);
  if (gains_out) *gains_out = std::move(gains);
  return ev;
}

}  // namespace

double backtrack(double slope, const AlgoParams& params,
                 const std::function<bool(double)>& accept) {
  if (!(slope > 0.0)) return 0.0;
  for (int t = 0;; ++t) {
    const double gamma = std::pow(params.zeta, t);
    if (gamma < params.gamma_floor) return 0.0;
    if (accept(gamma)) return gamma;
  }
}

StepResult positioning_step(SolutionState& state, const StepContext& ctx, const Hooks& hooks) {
  StepResult res;
  const auto links = evaluate_links(ctx.model, state.x);
  const Eigen::MatrixXd gains = gain_matrix(links, state.users(), state.uavs());
  const ObjectiveEval before = objective_z(state, gains, ctx.model.params().noise_power);
  res.z_before = res.z_after = before.z;
  res.bottleneck = before.rates.bottleneck_user;

  const PositioningSurrogate sur = build_positioning_surrogate(state, ctx.model, links);
  if (hooks.positioning) hooks.positioning(state, sur);
  const PositioningProblem pp = positioning_problem(sur, ctx.limits);
  if (pp.free_uavs.empty()) return res;

  const SolveReport rep = solve_maximin(pp.problem, ctx.params.tol_kkt, ctx.params.tol_feas,
                                        ctx.params.max_newton);
  res.solver = rep.status;
  if (rep.status == SolveStatus::numerical_failure) return res;

  const Eigen::MatrixX3d target = unpack_positions(pp, rep.x, state.x);
  const Eigen::MatrixX3d dir = target - state.x;
  if (dir.isZero(0.0)) {
    res.gamma = 1.0;
    return res;
  }
  const Eigen::MatrixX3d grad = sur.rate_gradient(res.bottleneck, state.x);
  res.slope = dir.cwiseProduct(grad).sum();

  SolutionState trial = state;
  double z_trial = before.z;
  auto accept = [&](double gamma) {
    trial.x = state.x + gamma * dir;
    if (!separation_ok(trial.x, ctx.limits.d_min, 0.0)) return false;
    z_trial = evaluate(trial, ctx.model).z;
    return z_trial - before.z >= ctx.params.tau * gamma * res.slope;
  };
  res.gamma = backtrack(res.slope, ctx.params, accept);
  if (res.gamma > 0.0) {
    state.x = trial.x;
    res.z_after = z_trial;
  }
  return res;
}

StepResult ra_step(SolutionState& state, const StepContext& ctx, bool optimize_c,
                   const Hooks& hooks) {
  StepResult res;
  const std::size_t K = state.users(), M = state.uavs(), N = state.subcarriers();
  const double noise = ctx.model.params().noise_power;
  Eigen::MatrixXd gains;
  const ObjectiveEval before = evaluate(state, ctx.model, &gains);
  res.z_before = res.z_after = before.z;
  res.bottleneck = before.rates.bottleneck_user;

  const RaSurrogate sur = build_ra_surrogate(state, gains, noise);
  if (hooks.ra) hooks.ra(state, sur, gains);
  const RaProblem rp = ra_problem(sur, ctx.limits, optimize_c);
  const SolveReport rep = solve_maximin(rp.problem, ctx.params.tol_kkt, ctx.params.tol_feas,
                                        ctx.params.max_newton);
  res.solver = rep.status;
  if (rep.status == SolveStatus::numerical_failure) return res;

  Eigen::MatrixXd p_target;
  Tensor3 c_target;
  unpack_ra(rp, rep.x, sur, p_target, c_target);
  const Eigen::MatrixXd dp = p_target - state.p;
  Tensor3 dc = c_target;
  for (std::size_t i = 0; i < dc.size(); ++i) dc.raw()[i] -= state.c.raw()[i];
  const bool zero_c = std::all_of(dc.raw().begin(), dc.raw().end(),
                                  [](double v) { return v == 0.0; });
  if (dp.isZero(0.0) && zero_c) {
    res.gamma = 1.0;
    return res;
  }

  // Directional derivative of the bottleneck rate plus the penalty.
  const std::size_t kb = res.bottleneck;
  double slope = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    double total = 0.0, moved = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      total += state.p(j, n) * sur.snr_gain(kb, j);
      moved += sur.snr_gain(kb, j) * dp(j, n);
    }
    for (std::size_t m = 0; m < M; ++m) {
      const double b_all = state.c(kb, m, n) / (1.0 + total);
      const double moved_others = moved - sur.snr_gain(kb, m) * dp(m, n);
      slope += kLog2e * (b_all * moved - sur.b_prime_minus(kb, m, n) * moved_others);
      slope += dc(kb, m, n) * sur.rate_coef(kb, m, n);
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t n = 0; n < N; ++n) {
        slope -= dc(k, m, n) * state.lambda(k, m, n) * (1.0 - 2.0 * state.c(k, m, n));
      }
    }
  }
  res.slope = slope;

  SolutionState trial = state;
  double z_trial = before.z;
  auto accept = [&](double gamma) {
    trial.p = state.p + gamma * dp;
    for (std::size_t i = 0; i < dc.size(); ++i) {
      trial.c.raw()[i] = state.c.raw()[i] + gamma * dc.raw()[i];
    }
    z_trial = objective_z(trial, gains, noise).z;
    return z_trial - before.z >= ctx.params.tau * gamma * res.slope;
  };
  res.gamma = backtrack(res.slope, ctx.params, accept);
  if (res.gamma > 0.0) {
    state.p = trial.p;
    state.c = trial.c;
    res.z_after = z_trial;
  }
  return res;
}

InnerResult inner_loop(SolutionState& state, const StepContext& ctx, const InnerOptions& opts,
                       int outer_index, std::vector<IterationTrace>& trace,
                       const Hooks& hooks) {
  InnerResult out;
  out.hit_cap = true;
  for (int l = 0; l < ctx.params.max_inner; ++l) {
    const auto t0 = std::chrono::steady_clock::now();
    IterationTrace tr;
    tr.outer = outer_index;
    tr.inner = l;
    StepResult s1;
    if (opts.position) {
      s1 = positioning_step(state, ctx, hooks);
      tr.solver1 = to_string(s1.solver);
    } else {
      s1.z_before = s1.z_after = evaluate(state, ctx.model).z;
      tr.solver1 = "skipped";
    }
    const StepResult s2 = ra_step(state, ctx, opts.optimize_c, hooks);
    const ObjectiveEval after = evaluate(state, ctx.model);
    tr.z_start = s1.z_before;
    tr.z_mid = s1.z_after;
    tr.z = after.z;
    tr.min_rate = after.rates.min_rate;
    tr.bottleneck = after.rates.bottleneck_user;
    tr.max_violation = max_violation(state.c);
    tr.gamma1 = s1.gamma;
    tr.gamma2 = s2.gamma;
    tr.slope1 = s1.slope;
    tr.slope2 = s2.slope;
    tr.solver2 = to_string(s2.solver);
    tr.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    trace.push_back(tr);
    ++out.iterations;
    if (tr.z - tr.z_start < ctx.params.eps_inner || (s1.gamma == 0.0 && s2.gamma == 0.0)) {
      out.hit_cap = false;
      break;
    }
  }
  return out;
}

MultiplierUpdate update_multipliers(Tensor3& lambda, const Tensor3& c, double mu,
                                    double violation, double previous_violation) {
  MultiplierUpdate up;
  up.mu = mu;
  double sumsq = 0.0;
  for (double v : c.raw()) {
    const double g = v * (1.0 - v);
    sumsq += g * g;
  }
  if (sumsq == 0.0) {
    up.finished = true;
    return up;
  }
  if (!(violation < previous_violation)) up.mu = 2.0 * mu;
  up.gamma = up.mu / sumsq;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double v = c.raw()[i];
    lambda.raw()[i] += up.gamma * std::max(0.0, v * (1.0 - v));
  }
  return up;
}

Tensor3 round_association(const Tensor3& c, const Tensor3& sinr) {
  const std::size_t K = c.dim_k(), M = c.dim_m(), N = c.dim_n();
  std::vector<double> best(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t n = 0; n < N; ++n) best[k] = std::max(best[k], c(k, m, n));
    }
  }
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return best[a] > best[b]; });

  Tensor3 out(K, M, N);
  std::vector<bool> taken(M * N, false);
  for (std::size_t k : order) {
    std::vector<std::size_t> slots(M * N);
    std::iota(slots.begin(), slots.end(), 0);
    std::stable_sort(slots.begin(), slots.end(), [&](std::size_t a, std::size_t b) {
      const double ca = c(k, a / N, a % N), cb = c(k, b / N, b % N);
      if (ca != cb) return ca > cb;
      return sinr(k, a / N, a % N) > sinr(k, b / N, b % N);
    });
    for (std::size_t s : slots) {
      if (taken[s]) continue;
      taken[s] = true;
      out(k, s / N, s % N) = 1.0;
      break;
    }
  }
  return out;
}

RunReport run(const SolutionState& init, const ChannelModel& opt_model,
              const ChannelModel& eval_model, const Limits& limits, const AlgoParams& params,
              const RunOptions& opts) {
  params.validate();
  RunReport rep;
  rep.state = init;
  const double eval_noise = eval_model.params().noise_power;
  rep.initial_rates = rates(init, gain_matrix(evaluate_links(eval_model, init.x), init.users(),
                                              init.uavs()),
                            eval_noise);
  rep.initial_min_rate = rep.initial_rates.min_rate;

  const StepContext ctx{opt_model, limits, params};
  const InnerOptions inner_opts{opts.position, opts.optimize_c};
  SolutionState& state = rep.state;
  bool converged = false;

  if (!opts.optimize_c) {
    const InnerResult ir = inner_loop(state, ctx, inner_opts, 0, rep.trace, opts.hooks);
    rep.inner_iterations = ir.iterations;
    rep.inner_cap_hit = ir.hit_cap;
    rep.outer_iterations = 1;
    converged = !ir.hit_cap && max_violation(state.c) <= params.eps_outer;
  } else {
    double mu = params.mu0;
    double previous = std::numeric_limits<double>::infinity();
    for (int outer = 0; outer < params.max_outer; ++outer) {
      const InnerResult ir = inner_loop(state, ctx, inner_opts, outer, rep.trace, opts.hooks);
      rep.inner_iterations += ir.iterations;
      rep.inner_cap_hit = rep.inner_cap_hit || ir.hit_cap;
      rep.outer_iterations = outer + 1;
      const double violation = max_violation(state.c);
      if (violation <= params.eps_outer) {
        converged = true;
        break;
      }
      const MultiplierUpdate up = update_multipliers(state.lambda, state.c, mu, violation, previous);
      if (up.finished) {
        converged = true;
        break;
      }
      mu = up.mu;
      previous = violation;
    }
  }

  Eigen::MatrixXd gains;
  const ObjectiveEval pre = evaluate(state, opt_model, &gains);
  rep.z_before_rounding = pre.z;
  rep.violation_before_rounding = max_violation(state.c);
  state.c = round_association(state.c, pre.rates.sinr);
  rep.z_after_rounding = objective_z(state, gains, opt_model.params().noise_power).z;

  rep.final_rates = rates(state, gain_matrix(evaluate_links(eval_model, state.x), state.users(),
                                             state.uavs()),
                          eval_noise);
  rep.min_rate = rep.final_rates.min_rate;
  rep.violations = feasibility_violations(state, limits, true);
  rep.status = converged ? "converged" : "not-converged";
  return rep;
}

}  // namespace uavbs
