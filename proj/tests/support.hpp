#pragma once

// Shared fixtures and independent reference computations for the unit tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <random>
#include <vector>

#include "uavbs/geometry.hpp"
#include "uavbs/netmodel.hpp"
#include "uavbs/scenario.hpp"
#include "uavbs/subsolver.hpp"

namespace testing {

using uavbs::Building;
using uavbs::Vec3;

inline Building box(double x0, double y0, double dx, double dy, double h) {
  Building b;
  b.min_corner = Vec3(x0, y0, 0.0);
  b.size = Vec3(dx, dy, h);
  return b;
}

/// Parametric clipping of the segment u + t (x - u), t in (0, 1), against the
/// open box. Written independently of the library's oracle.
inline bool segment_hits_box(const Vec3& u, const Vec3& x, const Building& b) {
  double lo = 0.0, hi = 1.0;
  const Vec3 bmin = b.min_corner, bmax = b.max_corner();
  for (int a = 0; a < 3; ++a) {
    const double d = x[a] - u[a];
    if (d == 0.0) {
      if (!(u[a] > bmin[a] && u[a] < bmax[a])) return false;
      continue;
    }
    double t0 = (bmin[a] - u[a]) / d, t1 = (bmax[a] - u[a]) / d;
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  return lo < hi;
}

inline bool reference_los(const Vec3& u, const Vec3& x, const std::vector<Building>& bs) {
  for (const Building& b : bs) {
    if (segment_hits_box(u, x, b)) return false;
  }
  return true;
}

/// Random boxes in [0, extent]^2 with heights up to h_hi (overlaps allowed).
inline std::vector<Building> random_boxes(std::mt19937_64& rng, int count, double extent,
                                          double h_hi) {
  std::uniform_real_distribution<double> pos(0.0, extent), side(20.0, 120.0), h(10.0, h_hi);
  std::vector<Building> out;
  for (int i = 0; i < count; ++i) out.push_back(box(pos(rng), pos(rng), side(rng), side(rng), h(rng)));
  return out;
}

/// Ground point outside every footprint (and off every footprint edge).
inline Vec3 free_ground_point(std::mt19937_64& rng, const std::vector<Building>& bs,
                              double extent) {
  std::uniform_real_distribution<double> pos(0.0, extent);
  while (true) {
    const Vec3 u(pos(rng), pos(rng), 0.0);
    bool ok = true;
    for (const Building& b : bs) {
      if (b.footprint_contains(u.x(), u.y())) ok = false;
    }
    if (ok) return u;
  }
}

/// Central difference of a scalar function of a 3-vector.
inline Vec3 central_diff(const std::function<double(const Vec3&)>& f, const Vec3& x, double h) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = h;
    g[a] = (f(x + e) - f(x - e)) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double a, double b, double floor = 0.0) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Dense-urban scene with random users, seeded.
inline uavbs::Scenario city_scene(std::uint64_t seed, std::size_t k = 8, std::size_t m = 4,
                                  std::size_t n = 4, std::size_t buildings = 60) {
  uavbs::Scenario sc;
  sc.k = k;
  sc.m = m;
  sc.n = n;
  sc.seed = seed;
  sc.buildings = uavbs::synthetic_city(buildings, sc.x_d, sc.y_d, 10.0, 96.0, seed);
  std::mt19937_64 rng(seed);
  sc.users = uavbs::random_users(k, sc.x_d, sc.y_d, sc.buildings, rng);
  return sc;
}

/// Random binary association: users on distinct (m, n) slots.
inline uavbs::Tensor3 random_binary_association(std::mt19937_64& rng, std::size_t K,
                                                std::size_t M, std::size_t N) {
  std::vector<std::size_t> slots(M * N);
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
  std::shuffle(slots.begin(), slots.end(), rng);
  uavbs::Tensor3 c(K, M, N);
  for (std::size_t k = 0; k < K; ++k) c(k, slots[k] / N, slots[k] % N) = 1.0;
  return c;
}

/// Convex combination of a few random binary associations, so every
/// association constraint holds.
inline uavbs::Tensor3 random_relaxed_association(std::mt19937_64& rng, std::size_t K,
                                                 std::size_t M, std::size_t N, int mix = 3) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> w(static_cast<std::size_t>(mix));
  double total = 0.0;
  for (double& x : w) total += (x = u(rng));
  uavbs::Tensor3 c(K, M, N);
  for (double x : w) {
    const uavbs::Tensor3 b = random_binary_association(rng, K, M, N);
    for (std::size_t i = 0; i < c.size(); ++i) c.raw()[i] += x / total * b.raw()[i];
  }
  return c;
}

/// Maximin of random strictly concave quadratics over the box [-1, 1]^dim,
/// started at the origin.
inline uavbs::MaximinProblem random_quadratic_maximin(std::mt19937_64& rng, int dim,
                                                      int pieces, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  uavbs::MaximinProblem p;
  p.dim = dim;
  for (int q = 0; q < pieces; ++q) {
    Eigen::MatrixXd l(dim, dim);
    for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] = nd(rng);
    const Eigen::MatrixXd h = l * l.transpose() / dim + 0.2 * Eigen::MatrixXd::Identity(dim, dim);
    Eigen::VectorXd peak(dim);
    for (int i = 0; i < dim; ++i) peak[i] = 1.5 * ud(rng);
    // c - 0.5 (x - peak)' H (x - peak), expanded
    const double c = ud(rng) - 0.5 * peak.dot(h * peak);
    p.pieces.push_back(std::make_shared<uavbs::ConcaveQuadratic>(
        scale * c, scale * (h * peak), -scale * h));
  }
  p.lower = Eigen::VectorXd::Constant(dim, -1.0);
  p.upper = Eigen::VectorXd::Constant(dim, 1.0);
  p.start = Eigen::VectorXd::Zero(dim);
  return p;
}

struct GridBound {
  double lower = 0.0;  // value at the best grid point found
  double upper = 0.0;  // certified bound on the true maximum
  Eigen::VectorXd x;
};

/// Certified branch-and-bound over a box for a maximin of concave pieces
/// (no outside term). Concavity bounds every piece on a cell by its tangent
/// plane at the cell centre, so popping the cell with the largest bound and
/// bisecting it closes the gap between the best centre value and the bound.
inline GridBound grid_maximin(const uavbs::MaximinProblem& p, double target = 1e-7,
                              std::size_t max_cells = 400'000) {
  struct Cell {
    Eigen::VectorXd lo, hi;
    double value, bound;
    bool operator<(const Cell& o) const { return bound < o.bound; }
  };
  GridBound out;
  out.x = p.start;
  out.lower = uavbs::maximin_value(p, p.start);
  auto make = [&](Eigen::VectorXd lo, Eigen::VectorXd hi) {
    const Eigen::VectorXd c = (lo + hi) / 2.0, half = (hi - lo) / 2.0;
    double v = std::numeric_limits<double>::infinity(), u = v;
    for (const auto& f : p.pieces) {
      const double fv = f->value(c);
      v = std::min(v, fv);
      u = std::min(u, fv + f->gradient(c).cwiseAbs().dot(half));
    }
    if (v > out.lower) {
      out.lower = v;
      out.x = c;
    }
    return Cell{std::move(lo), std::move(hi), v, u};
  };
  std::priority_queue<Cell> queue;
  queue.push(make(p.lower, p.upper));
  for (std::size_t made = 1; made < max_cells; made += 2) {
    const Cell top = queue.top();
    out.upper = top.bound;
    if (top.bound - out.lower <= target) break;
    queue.pop();
    Eigen::Index axis = 0;
    (top.hi - top.lo).maxCoeff(&axis);
    const double mid = (top.lo[axis] + top.hi[axis]) / 2.0;
    Eigen::VectorXd left_hi = top.hi, right_lo = top.lo;
    left_hi[axis] = mid;
    right_lo[axis] = mid;
    queue.push(make(top.lo, left_hi));
    queue.push(make(right_lo, top.hi));
  }
  out.upper = std::max(out.lower, queue.top().bound);
  return out;
}

/// Lagrangian dual bracket for a maximin of concave quadratic pieces on a box
/// (no equalities, no outside term). By minimax duality the maximum equals
/// min over simplex weights w of phi(w) = max_box sum_k w_k f_k, so every w
/// gives an upper bound and every maximizer x_w a lower bound. The inner box
/// QP is solved exactly by enumerating lower/free/upper patterns.
inline GridBound dual_maximin(const uavbs::MaximinProblem& p, int max_iters = 20'000,
                              double target = 1e-10) {
  const int d = p.dim;
  const std::size_t np = p.pieces.size();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
  std::vector<double> a(np);
  std::vector<Eigen::VectorXd> b(np);
  std::vector<Eigen::MatrixXd> q(np, Eigen::MatrixXd::Zero(d, d));
  for (std::size_t k = 0; k < np; ++k) {
    a[k] = p.pieces[k]->value(zero);
    b[k] = p.pieces[k]->gradient(zero);
    p.pieces[k]->add_hessian(zero, 1.0, q[k]);
  }

  auto box_max = [&](const Eigen::VectorXd& w, Eigen::VectorXd& best_x) {
    double c0 = 0.0;
    Eigen::VectorXd lin = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t k = 0; k < np; ++k) {
      c0 += w[k] * a[k];
      lin += w[k] * b[k];
      quad += w[k] * q[k];
    }
    double best = -std::numeric_limits<double>::infinity();
    int patterns = 1;
    for (int i = 0; i < d; ++i) patterns *= 3;
    for (int code = 0; code < patterns; ++code) {
      Eigen::VectorXd x(d);
      std::vector<int> free_idx;
      for (int i = 0, c = code; i < d; ++i, c /= 3) {
        if (c % 3 == 0) x[i] = p.lower[i];
        else if (c % 3 == 1) x[i] = p.upper[i];
        else free_idx.push_back(i);
      }
      if (!free_idx.empty()) {
        const auto nf = static_cast<Eigen::Index>(free_idx.size());
        Eigen::MatrixXd aff(nf, nf);
        Eigen::VectorXd rhs(nf);
        for (Eigen::Index r = 0; r < nf; ++r) {
          rhs[r] = -lin[free_idx[r]];
          for (int j = 0; j < d; ++j) {
            const bool is_free = std::find(free_idx.begin(), free_idx.end(), j) != free_idx.end();
            if (!is_free) rhs[r] -= quad(free_idx[r], j) * x[j];
          }
          for (Eigen::Index c = 0; c < nf; ++c) aff(r, c) = quad(free_idx[r], free_idx[c]);
        }
        const Eigen::VectorXd xf = aff.ldlt().solve(rhs);
        bool inside = true;
        for (Eigen::Index r = 0; r < nf; ++r) {
          const int i = free_idx[r];
          if (xf[r] < p.lower[i] || xf[r] > p.upper[i]) inside = false;
          x[i] = xf[r];
        }
        if (!inside) continue;
      }
      const double v = c0 + lin.dot(x) + 0.5 * x.dot(quad * x);
      if (v > best) {
        best = v;
        best_x = x;
      }
    }
    return best;
  };

  auto project_simplex = [&](Eigen::VectorXd v) {
    Eigen::VectorXd s = v;
    std::sort(s.data(), s.data() + s.size(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      cum += s[i];
      const double t = (cum - 1.0) / static_cast<double>(i + 1);
      if (s[i] - t > 0.0) theta = t;
    }
    return (v.array() - theta).cwiseMax(0.0).matrix().eval();
  };

  GridBound out;
  out.lower = -std::numeric_limits<double>::infinity();
  out.upper = std::numeric_limits<double>::infinity();
  Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(np), 1.0 / np);
  Eigen::VectorXd x;
  double phi = box_max(w, x);
  double step = 1.0;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd grad(static_cast<Eigen::Index>(np));
    for (std::size_t k = 0; k < np; ++k) grad[k] = p.pieces[k]->value(x);
    const double primal = grad.minCoeff();
    if (primal > out.lower) {
      out.lower = primal;
      out.x = x;
    }
    out.upper = std::min(out.upper, phi);
    if (out.upper - out.lower <= target) break;
    // projected gradient with a sufficient-decrease backtrack
    step *= 2.0;
    while (true) {
      const Eigen::VectorXd trial = project_simplex(w - step * grad);
      Eigen::VectorXd xt;
      const double pt = box_max(trial, xt);
      const Eigen::VectorXd dw = trial - w;
      if (pt <= phi + grad.dot(dw) + dw.squaredNorm() / (2.0 * step) || step < 1e-14) {
        w = trial;
        x = xt;
        phi = pt;
        break;
      }
      step /= 2.0;
    }
  }
  return out;
}

}  // namespace testing
