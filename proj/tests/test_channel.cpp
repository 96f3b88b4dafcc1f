#include <cfloat>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "uavbs/channel.hpp"

using namespace uavbs;
using testing::box;

namespace {

// Frozen from 30-digit evaluations of 10^(-4.643)/100^2, 10^(-5.643)/100^3.3,
// 1/(1+e^-10) and 10^(-10.7) mW.
constexpr double kGainLos100 = 2.2750974307720705901923996632e-9;
constexpr double kGainNlos100 = 5.71478636671867037078055317935e-13;
constexpr double kSigmoidTen = 0.999954602131297565605495223767;
constexpr double kNoise = 1.99526231496887960135245539674e-14;

struct Probe {
  Vec3 x, u;
  std::vector<BlockedRegion> regions;
};

// Points in the sigmoid transition band with a unique active plane.
std::vector<Probe> transition_probes(std::uint64_t seed, int want, const ChannelParams& p) {
  std::mt19937_64 rng(seed);
  const auto bs = testing::random_boxes(rng, 30, 1000, 90);
  std::uniform_real_distribution<double> pos(0, 1000), alt(100, 500);
  std::vector<Probe> out;
  for (int tries = 0; tries < 400000 && static_cast<int>(out.size()) < want; ++tries) {
    Probe pr;
    pr.u = testing::free_ground_point(rng, bs, 1000);
    pr.x = Vec3(pos(rng), pos(rng), alt(rng));
    pr.regions = build_user_regions(pr.u, 0, bs);
    const double r = (pr.x - pr.u).norm();
    const MinClearance mc = min_clearance(pr.regions, pr.x, 1e-3);
    if (!mc.blocked_anywhere || mc.tie) continue;
    const double z = p.eta * mc.value / r;
    if (std::abs(z) > 12.0 || std::abs(z) < 0.05) continue;
    out.push_back(std::move(pr));
  }
  return out;
}

double vec_rel(const Vec3& a, const Vec3& b) {
  return (a - b).norm() / std::max(a.norm(), b.norm());
}

}  // namespace

TEST_SUITE("channel") {

TEST_CASE("default parameters") {
  const ChannelParams p;
  CHECK(p.alpha_los == 2.0);
  CHECK(p.alpha_nlos == 3.3);
  CHECK(testing::rel_err(p.beta_los, 2.2750974307720706e-5) < 1e-14);
  CHECK(testing::rel_err(p.beta_nlos, 2.2750974307720706e-6) < 1e-14);
  CHECK(testing::rel_err(p.noise_power, kNoise) < 1e-14);
  CHECK(p.eta == 1000.0);
  CHECK_NOTHROW(p.validate());
  ChannelParams bad = p;
  bad.alpha_nlos = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("smoothing") {
  CHECK(smoothing(0.0, 10.0, 1000.0) == 0.5);
  CHECK(testing::rel_err(smoothing(1.0, 100.0, 1000.0), kSigmoidTen) < 1e-15);
  const double deep = smoothing(-10.0, 10.0, 1000.0);
  CHECK(deep >= DBL_MIN);
  CHECK(deep < 1e-300);
  CHECK(smoothing(1e6, 1.0, 1000.0) == 1.0);
  CHECK_THROWS_AS(smoothing(1.0, 0.0, 1000.0), Error);
  CHECK(smoothing_slope(0.0, 5.0, 1000.0) == 0.25);
  const double s = smoothing(0.3, 100.0, 1000.0);
  CHECK(testing::rel_err(smoothing_slope(0.3, 100.0, 1000.0), s * (1 - s)) < 1e-12);
}

TEST_CASE("parameter interpolation") {
  const ChannelParams p;
  auto [a1, b1] = channel_params_at(1.0, p);
  CHECK(a1 == 2.0);
  CHECK(b1 == p.beta_los);
  auto [a0, b0] = channel_params_at(0.0, p);
  CHECK(a0 == 3.3);
  CHECK(b0 == p.beta_nlos);
  CHECK(channel_params_at(0.5, p).first == doctest::Approx(2.65).epsilon(1e-15));
}

TEST_CASE("gain in free space and deep shadow") {
  const ChannelParams p;
  const ChannelEval los = gain(Vec3(0, 0, 100), Vec3(0, 0, 0), {}, p);
  CHECK(los.s == 1.0);
  CHECK(testing::rel_err(los.gain, kGainLos100) < 1e-13);

  const Vec3 u(0, 0, 0);
  const auto regions = build_user_regions(u, 0, std::vector<Building>{box(10, -50, 10, 100, 90)});
  const Vec3 x(std::sqrt(100.0 * 100.0 - 10.0 * 10.0), 0, 10);
  const ChannelEval nlos = gain(x, u, regions, p);
  CHECK(nlos.clearance < 0.0);
  CHECK(testing::rel_err(nlos.gain, kGainNlos100) < 1e-12);

  const ChannelEval far = gain(Vec3(0, 0, 200), u, {}, p);
  CHECK(testing::rel_err(far.gain, los.gain / 4.0) < 1e-14);
  CHECK_THROWS_AS(gain(u, u, {}, p), Error);
  CHECK_THROWS_AS(gain(Vec3(0, 0, 0.5), u, {}, p), Error);
}

TEST_CASE("free-space gradient is the power-law gradient") {
  const ChannelParams p;
  const Vec3 u(3, 4, 0), x(120, -40, 180);
  const ChannelEval ev = gain(x, u, {}, p);
  CHECK(ev.grad_alpha.norm() == 0.0);
  CHECK(ev.grad_beta.norm() == 0.0);
  const Vec3 expect = -ev.gain * ev.alpha * (x - u) / (x - u).squaredNorm();
  CHECK(vec_rel(ev.grad_gain, expect) < 1e-14);
}

TEST_CASE("gradients match central differences") {
  const ChannelParams p;
  const auto probes = transition_probes(41, 100, p);
  REQUIRE(probes.size() == 100);
  const double h = 1e-4;
  for (const Probe& pr : probes) {
    const ChannelEval ev = gain(pr.x, pr.u, pr.regions, p);
    auto g = [&](const Vec3& y) { return gain(y, pr.u, pr.regions, p).gain; };
    auto al = [&](const Vec3& y) { return gain(y, pr.u, pr.regions, p).alpha; };
    auto be = [&](const Vec3& y) { return gain(y, pr.u, pr.regions, p).beta; };
    CHECK(vec_rel(ev.grad_gain, testing::central_diff(g, pr.x, h)) <= 1e-5);
    CHECK(vec_rel(ev.grad_alpha, testing::central_diff(al, pr.x, h)) <= 1e-5);
    CHECK(vec_rel(ev.grad_beta, testing::central_diff(be, pr.x, h)) <= 1e-5);
    const GainGradients gg = grad_gain(pr.x, pr.u, pr.regions, p);
    CHECK(gg.grad_gain == ev.grad_gain);
  }
}

TEST_CASE("slope on the shadow boundary") {
  const ChannelParams p;
  const Vec3 u(0, 0, 0);
  const auto regions = build_user_regions(u, 0, std::vector<Building>{box(10, -50, 10, 100, 90)});
  // On the plane through the user and the top edge (z = 9x), well inside the
  // side planes.
  const Vec3 x(30, 0, 270);
  const ChannelEval ev = gain(x, u, regions, p);
  CHECK(std::abs(ev.clearance) < 1e-9);
  CHECK(ev.s == doctest::Approx(0.5));
  const double expect = (p.alpha_nlos - p.alpha_los) * p.eta / 4.0 / (x - u).norm();
  CHECK(testing::rel_err(ev.grad_alpha.norm(), expect) < 1e-6);
}

TEST_CASE("gain is continuous across a shadow boundary") {
  const ChannelParams p;
  const Vec3 u(0, 0, 0);
  const auto regions = build_user_regions(u, 0, std::vector<Building>{box(10, -50, 10, 100, 90)});
  const Vec3 n = Vec3(-9, 0, 1).normalized();
  const Vec3 on(30, 0, 270);
  const Vec3 a = on - 0.5e-6 * n, b = on + 0.5e-6 * n;
  const double ga = gain(a, u, regions, p).gain, gb = gain(b, u, regions, p).gain;
  CHECK(std::abs(ga - gb) / ga <= 10.0 * p.eta * 1e-6 / on.norm());
}

TEST_CASE("gain grows with clearance at fixed distance") {
  const ChannelParams p;
  const Vec3 u(0, 0, 0);
  const auto regions = build_user_regions(u, 0, std::vector<Building>{box(10, -50, 10, 100, 90)});
  const double r = 300.0;
  double prev = 0.0, prev_clear = -1e300;
  for (int i = 0; i <= 200; ++i) {
    const double elev = 0.05 + 1.4 * i / 200.0;  // elevation angle sweep
    const Vec3 x(r * std::cos(elev), 0, r * std::sin(elev));
    const ChannelEval ev = gain(x, u, regions, p);
    if (ev.clearance >= prev_clear) CHECK(ev.gain >= prev * (1 - 1e-12));
    prev = ev.gain;
    prev_clear = ev.clearance;
  }
}

TEST_CASE("sharp smoothing reproduces the segmented model") {
  ChannelParams p;
  p.eta = 1e6;
  std::mt19937_64 rng(8);
  const auto bs = testing::random_boxes(rng, 30, 1000, 90);
  std::uniform_real_distribution<double> pos(0, 1000), alt(100, 500);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const Vec3 u = testing::free_ground_point(rng, bs, 1000);
    const Vec3 x(pos(rng), pos(rng), alt(rng));
    const auto regions = build_user_regions(u, 0, bs);
    const MinClearance mc = min_clearance(regions, x);
    const double r = (x - u).norm();
    if (mc.blocked_anywhere && std::abs(mc.value) / r < 1e-3) continue;
    const bool los = testing::reference_los(u, x, bs);
    const double expect = los ? p.beta_los * std::pow(r, -p.alpha_los)
                              : p.beta_nlos * std::pow(r, -p.alpha_nlos);
    CHECK(testing::rel_err(gain(x, u, regions, p).gain, expect) <= 1e-9);
    ++checked;
  }
  CHECK(checked > 1000);
}

TEST_CASE("geometry-unaware model ignores buildings") {
  const std::vector<Building> bs{box(10, -50, 10, 100, 90)};
  const std::vector<Vec3> users{Vec3(0, 0, 0)};
  const ChannelModel aware(users, bs, ChannelParams{}, true);
  const ChannelModel blind(users, bs, ChannelParams{}, false);
  const Vec3 x(99.5, 0, 10);
  CHECK(aware.eval(0, x).s < 1e-10);
  CHECK(blind.eval(0, x).s == 1.0);
  Eigen::MatrixX3d xs(2, 3);
  xs << 99.5, 0, 10, 0, 0, 100;
  const auto links = evaluate_links(aware, xs);
  REQUIRE(links.size() == 2);
  CHECK(links[1].gain == aware.eval(0, Vec3(0, 0, 100)).gain);
}

}  // TEST_SUITE
