#include <limits>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "uavbs/pdlio.hpp"
#include "uavbs/scenario.hpp"

using namespace uavbs;

namespace {

// Frozen from a 30-digit evaluation of log2(1 + 10^(-4.643) 100^-2 / 10^(-13.7)).
constexpr double kSingleLinkRate = 16.7990030282;

Scenario open_field(std::size_t k, std::size_t m, std::size_t n, std::vector<Vec3> users) {
  Scenario sc;
  sc.k = k;
  sc.m = m;
  sc.n = n;
  sc.users = std::move(users);
  return sc;
}

bool is_binary_assignment(const Tensor3& c) {
  for (double v : c.raw())
    if (v != 0.0 && v != 1.0) return false;
  for (std::size_t k = 0; k < c.dim_k(); ++k) {
    double s = 0.0;
    for (std::size_t m = 0; m < c.dim_m(); ++m)
      for (std::size_t n = 0; n < c.dim_n(); ++n) s += c(k, m, n);
    if (s != 1.0) return false;
  }
  for (std::size_t m = 0; m < c.dim_m(); ++m)
    for (std::size_t n = 0; n < c.dim_n(); ++n) {
      double s = 0.0;
      for (std::size_t k = 0; k < c.dim_k(); ++k) s += c(k, m, n);
      if (s > 1.0) return false;
    }
  return true;
}

}  // namespace

TEST_SUITE("pdlio") {

TEST_CASE("parameters") {
  AlgoParams p;
  CHECK_NOTHROW(p.validate());
  CHECK(p.initial_lambda(8, 4, 4) == doctest::Approx(0.1));
  CHECK(p.gamma_floor == doctest::Approx(1.7970102999e-3).epsilon(1e-9));
  p.zeta = 1.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = AlgoParams{};
  p.eps_outer = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("backtracking") {
  const AlgoParams p;
  int calls = 0;
  CHECK(backtrack(0.0, p, [&](double) { ++calls; return true; }) == 0.0);
  CHECK(backtrack(-1.0, p, [&](double) { ++calls; return true; }) == 0.0);
  CHECK(calls == 0);
  CHECK(backtrack(1.0, p, [](double) { return true; }) == 1.0);
  CHECK(backtrack(1.0, p, [](double g) { return g <= 0.5; }) == doctest::Approx(std::pow(0.9, 7)));
  calls = 0;
  CHECK(backtrack(1.0, p, [&](double) { ++calls; return false; }) == 0.0);
  CHECK(calls == 61);  // 0.9^60 equals the floor and is still tried
}

TEST_CASE("multiplier update") {
  Tensor3 c(1, 1, 2), lambda(1, 1, 2);
  c(0, 0, 0) = 0.5;
  c(0, 0, 1) = 0.5;
  lambda(0, 0, 1) = 1.0;
  c(0, 0, 1) = 1.0;
  const double inf = std::numeric_limits<double>::infinity();
  MultiplierUpdate u = update_multipliers(lambda, c, 2.0, 0.25, inf);
  CHECK_FALSE(u.finished);
  CHECK(u.mu == 2.0);
  CHECK(u.gamma == 32.0);
  CHECK(lambda(0, 0, 0) == 8.0);
  CHECK(lambda(0, 0, 1) == 1.0);

  u = update_multipliers(lambda, c, 2.0, 0.25, 0.25);  // no decrease: mu doubles
  CHECK(u.mu == 4.0);
  CHECK(u.gamma == 64.0);
  CHECK(lambda(0, 0, 0) == 24.0);

  c(0, 0, 0) = 0.0;
  const Tensor3 before = lambda;
  u = update_multipliers(lambda, c, 2.0, 0.0, 0.25);
  CHECK(u.finished);
  CHECK(lambda == before);

  std::mt19937_64 rng(8);
  Tensor3 l(4, 2, 3, 0.1);
  const Tensor3 rc = testing::random_relaxed_association(rng, 4, 2, 3);
  const Tensor3 l0 = l;
  update_multipliers(l, rc, 2.0, max_violation(rc), inf);
  for (std::size_t i = 0; i < l.size(); ++i) CHECK(l.raw()[i] >= l0.raw()[i]);
}

TEST_CASE("rounding") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t K = 2 + trial % 5, M = 2, N = 3;
    Tensor3 c = testing::random_relaxed_association(rng, K, M, N, 1 + trial % 3);
    Tensor3 q(K, M, N, 1.0);
    CHECK(is_binary_assignment(round_association(c, q)));
  }
  // Near-binary input rounds to the nearest vertex.
  Tensor3 c(2, 1, 2);
  c(0, 0, 0) = 1.0 - 1e-5;
  c(0, 0, 1) = 1e-5;
  c(1, 0, 1) = 1.0 - 1e-5;
  c(1, 0, 0) = 1e-5;
  const Tensor3 r = round_association(c, Tensor3(2, 1, 2, 1.0));
  CHECK(r(0, 0, 0) == 1.0);
  CHECK(r(1, 0, 1) == 1.0);
  // A user split evenly goes where its link is better.
  Tensor3 half(1, 1, 2, 0.5), q(1, 1, 2, 1.0);
  q(0, 0, 1) = 10.0;
  CHECK(round_association(half, q)(0, 0, 1) == 1.0);
}

TEST_CASE("positioning step improves a line-of-sight pair") {
  Scenario sc = open_field(2, 2, 1, {Vec3(300, 300, 0), Vec3(1200, 1100, 0)});
  const ChannelModel model(sc.users, sc.buildings, sc.channel);
  SolutionState s;
  s.x.resize(2, 3);
  s.x << 700, 700, 500, 800, 800, 500;
  s.p = Eigen::MatrixXd::Constant(2, 1, 0.5);
  s.c = Tensor3(2, 2, 1);
  s.c(0, 0, 0) = 1.0;
  s.c(1, 1, 0) = 1.0;
  s.lambda = Tensor3(2, 2, 1, 0.1);
  const Limits lim = sc.limits();
  const StepContext ctx{model, lim, sc.algo};
  const StepResult r = positioning_step(s, ctx);
  CHECK(r.slope > 1e-6);
  CHECK(r.gamma > 0.0);
  CHECK(r.z_after > r.z_before);
  CHECK(r.z_after - r.z_before >= sc.algo.tau * r.gamma * r.slope - 1e-12);
  CHECK(feasibility_violations(s, lim).empty());

  // The bottleneck UAV moved toward its user.
  const Vec3 u = sc.users[r.bottleneck];
  const Eigen::Index m = r.bottleneck == 0 ? 0 : 1;
  const Vec3 before = m == 0 ? Vec3(700, 700, 500) : Vec3(800, 800, 500);
  CHECK((s.x.row(m).transpose() - u).norm() < (before - u).norm());
}

TEST_CASE("resource step on a single link") {
  Scenario sc = open_field(1, 1, 1, {Vec3(750, 750, 0)});
  const ChannelModel model(sc.users, sc.buildings, sc.channel);
  SolutionState s;
  s.x.resize(1, 3);
  s.x << 750, 700, 300;
  s.p = Eigen::MatrixXd::Constant(1, 1, 0.3);
  s.c = Tensor3(1, 1, 1, 1.0);
  s.lambda = Tensor3(1, 1, 1, 0.1);
  const Limits lim = sc.limits();
  const StepContext ctx{model, lim, sc.algo};
  std::vector<IterationTrace> trace;
  inner_loop(s, ctx, InnerOptions{false, true}, 0, trace);
  CHECK(s.p(0, 0) == doctest::Approx(sc.p_max).epsilon(1e-6));
  CHECK(s.p(0, 0) <= sc.p_max + 1e-9);
}

TEST_CASE("zero multipliers and a binary association") {
  Scenario sc = open_field(2, 1, 2, {Vec3(300, 300, 0), Vec3(600, 650, 0)});
  const ChannelModel model(sc.users, sc.buildings, sc.channel);
  SolutionState s;
  s.x.resize(1, 3);
  s.x << 450, 450, 300;
  s.p = Eigen::MatrixXd::Constant(1, 2, 0.5);
  s.c = Tensor3(2, 1, 2);
  s.c(0, 0, 0) = 1.0;
  s.c(1, 0, 1) = 1.0;
  s.lambda = Tensor3(2, 1, 2, 0.0);
  const Limits lim = sc.limits();
  const StepContext ctx{model, lim, sc.algo};
  const StepResult r = ra_step(s, ctx, true);
  CHECK(r.z_after >= r.z_before);
  CHECK(feasibility_violations(s, lim, false).empty());
}

TEST_CASE("inner loop is monotone and stops at a stationary point") {
  const Scenario sc = testing::city_scene(5, 6, 3, 3, 40);
  const ChannelModel model(sc.users, sc.buildings, sc.channel);
  SolutionState s = initial_state(sc, model);
  const Limits lim = sc.limits();
  const StepContext ctx{model, lim, sc.algo};
  std::vector<IterationTrace> trace;
  const InnerResult r = inner_loop(s, ctx, InnerOptions{}, 0, trace);
  CHECK_FALSE(r.hit_cap);
  REQUIRE(trace.size() == static_cast<std::size_t>(r.iterations));
  double prev = trace.front().z_start;
  for (const IterationTrace& t : trace) {
    CHECK(t.z_start >= prev - 1e-8);
    CHECK(t.z_mid >= t.z_start - 1e-8);
    CHECK(t.z >= t.z_mid - 1e-8);
    prev = t.z;
  }
  CHECK(feasibility_violations(s, lim, false).empty());
}

TEST_CASE("stationary start ends after one iteration") {
  Scenario sc = open_field(1, 1, 1, {Vec3(750, 750, 0)});
  const ChannelModel model(sc.users, sc.buildings, sc.channel);
  SolutionState s;
  s.x.resize(1, 3);
  s.x << 750, 750, sc.h_min;
  s.p = Eigen::MatrixXd::Constant(1, 1, sc.p_max);
  s.c = Tensor3(1, 1, 1, 1.0);
  s.lambda = Tensor3(1, 1, 1, 0.1);
  const Limits lim = sc.limits();
  const StepContext ctx{model, lim, sc.algo};
  std::vector<IterationTrace> trace;
  const InnerResult r = inner_loop(s, ctx, InnerOptions{}, 0, trace);
  CHECK(r.iterations == 1);
  CHECK((s.x.row(0) - Eigen::RowVector3d(750, 750, sc.h_min)).norm() <= 1e-6);
  CHECK(trace.front().z == doctest::Approx(kSingleLinkRate).epsilon(1e-9));
}

TEST_CASE("single link closed form") {
  Scenario sc = open_field(1, 1, 1, {Vec3(640, 910, 0)});
  const RunReport rep = run_scheme(sc, Scheme::proposed);
  CHECK(rep.status == "converged");
  CHECK(std::abs(rep.min_rate - kSingleLinkRate) <= 1e-3);
  const Vec3 x = rep.state.x.row(0).transpose();
  CHECK((x - Vec3(640, 910, sc.h_min)).norm() <= 0.5);
  CHECK(rep.state.p(0, 0) == doctest::Approx(sc.p_max).epsilon(1e-6));
}

TEST_CASE("full run on a small city") {
  const Scenario sc = testing::city_scene(3, 4, 2, 2, 40);
  const RunReport rep = run_scheme(sc, Scheme::proposed);
  CHECK(rep.status == "converged");
  CHECK(rep.violation_before_rounding <= sc.algo.eps_outer);
  CHECK(is_binary_assignment(rep.state.c));
  CHECK(rep.violations.empty());
  CHECK(std::abs(rep.z_after_rounding - rep.z_before_rounding) <=
        0.01 * std::abs(rep.z_before_rounding));
  for (const IterationTrace& t : rep.trace) CHECK(t.inner <= 40);
  CHECK(rep.min_rate == doctest::Approx(rep.final_rates.min_rate));
}

}  // TEST_SUITE
