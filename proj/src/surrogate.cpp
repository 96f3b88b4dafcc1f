#include "uavbs/surrogate.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace uavbs {

// ---------------------------------------------------------------- positioning

double PositioningSurrogate::rate(std::size_t k, const Eigen::MatrixX3d& x) const {
  const std::size_t M = uavs();
  double v = base_rate[static_cast<Eigen::Index>(k)];
  for (std::size_t j = 0; j < M; ++j) {
    const double w = quad_weight(k, j);
    const double vc = cross_weight(k, j);
    if (w == 0.0 && vc == 0.0) continue;
    const Vec3 xj = x.row(static_cast<Eigen::Index>(j)).transpose();
    const Vec3 x0 = x_ref.row(static_cast<Eigen::Index>(j)).transpose();
    const Vec3 step = xj - x0;
    // |xj - u|^2 - |x0 - u|^2 without cancellation at xj = x0
    const double dsq = step.dot(xj + x0 - 2.0 * user_pos[k]);
    const std::size_t idx = k * M + j;
    v += -w * a(k, j) * dsq + (w * delta[idx] - vc * grad_gain[idx]).dot(step);
  }
  return v;
}

Eigen::MatrixX3d PositioningSurrogate::rate_gradient(std::size_t k,
                                                     const Eigen::MatrixX3d& x) const {
  const std::size_t M = uavs();
  Eigen::MatrixX3d g = Eigen::MatrixX3d::Zero(x.rows(), 3);
  for (std::size_t j = 0; j < M; ++j) {
    const double w = quad_weight(k, j);
    const double vc = cross_weight(k, j);
    const Vec3 xj = x.row(static_cast<Eigen::Index>(j)).transpose();
    const std::size_t idx = k * M + j;
    const Vec3 gj =
        -2.0 * w * a(k, j) * (xj - user_pos[k]) + w * delta[idx] - vc * grad_gain[idx];
    g.row(static_cast<Eigen::Index>(j)) = gj.transpose();
  }
  return g;
}

double PositioningSurrogate::value(const Eigen::MatrixX3d& x) const {
  double v = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < users(); ++k) v = std::min(v, rate(k, x));
  return v + penalty;
}

PositioningSurrogate build_positioning_surrogate(const SolutionState& state,
                                                 const ChannelModel& model,
                                                 const std::vector<ChannelEval>& links) {
  const std::size_t K = state.users(), M = state.uavs(), N = state.subcarriers();
  if (links.size() != K * M) throw Error("positioning surrogate: link table has wrong size");
  const double noise = model.params().noise_power;

  PositioningSurrogate s;
  s.b = Tensor3(K, M, N);
  s.b_minus = Tensor3(K, M, N);
  s.r_hat0 = Tensor3(K, M, N);
  s.r_bar0 = Tensor3(K, M, N);
  s.a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(M));
  s.quad_weight = s.a;
  s.cross_weight = s.a;
  s.delta.resize(K * M);
  s.grad_gain.resize(K * M);
  s.x_ref = state.x;
  s.penalty = penalty(state.c, state.lambda);
  for (std::size_t k = 0; k < K; ++k) s.user_pos.push_back(model.user(k));

  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < M; ++m) {
      const ChannelEval& ev = links[k * M + m];
      if (ev.distance < 1.0) throw Error("positioning surrogate: link shorter than 1 m");
      const Vec3 diff = state.position(m) - model.user(k);
      const double r = ev.distance;
      s.a(k, m) = ev.alpha * ev.beta / (2.0 * std::pow(r, 2.0 + ev.alpha));
      const Vec3 grad_pred = -ev.gain * ev.alpha * diff / (r * r);
      s.grad_gain[k * M + m] = ev.grad_gain;
      s.delta[k * M + m] = ev.grad_gain - grad_pred;
    }
  }

  const Eigen::MatrixXd gains = gain_matrix(links, K, M);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t n = 0; n < N; ++n) {
      double total = 0.0;
      for (std::size_t j = 0; j < M; ++j) total += state.p(j, n) * gains(k, j) / noise;
      for (std::size_t m = 0; m < M; ++m) {
        double others = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
          if (j != m) others += state.p(j, n) * gains(k, j) / noise;
        }
        const double c = state.c(k, m, n);
        s.b(k, m, n) = c / (1.0 + total);
        s.b_minus(k, m, n) = c / (1.0 + others);
        s.r_hat0(k, m, n) = c * std::log2(1.0 + total);
        s.r_bar0(k, m, n) = c * std::log2(1.0 + others);
        for (std::size_t j = 0; j < M; ++j) {
          const double pj = state.p(j, n) / noise;
          s.quad_weight(k, j) += kLog2e * s.b(k, m, n) * pj;
          if (j != m) s.cross_weight(k, j) += kLog2e * s.b_minus(k, m, n) * pj;
        }
      }
    }
  }
  s.base_rate = rates(state, gains, noise).rate_user;
  return s;
}

double SeparationCut::slack(const Eigen::MatrixX3d& x) const {
  const Vec3 d = (x.row(static_cast<Eigen::Index>(m)) - x.row(static_cast<Eigen::Index>(j)))
                     .transpose();
  return 2.0 * direction.dot(d) - offset;
}

std::vector<SeparationCut> linearize_separation(const Eigen::MatrixX3d& x_ref, double d_min) {
  std::vector<SeparationCut> cuts;
  for (Eigen::Index m = 0; m < x_ref.rows(); ++m) {
    for (Eigen::Index j = m + 1; j < x_ref.rows(); ++j) {
      SeparationCut cut;
      cut.m = static_cast<std::size_t>(m);
      cut.j = static_cast<std::size_t>(j);
      cut.direction = (x_ref.row(m) - x_ref.row(j)).transpose();
      if (cut.direction.squaredNorm() == 0.0) {
        throw Error("linearize_separation: coincident UAV positions");
      }
      cut.offset = cut.direction.squaredNorm() + d_min * d_min;
      cuts.push_back(cut);
    }
  }
  return cuts;
}

namespace {

class PositioningPiece final : public ConcaveFunction {
 public:
  PositioningPiece(const PositioningSurrogate& sur, std::size_t k,
                   const std::vector<std::size_t>& free_uavs)
      : sur_(sur), k_(k), free_(free_uavs) {}

  double value(const Eigen::VectorXd& v) const override { return sur_.rate(k_, expand(v)); }

  Eigen::VectorXd gradient(const Eigen::VectorXd& v) const override {
    const Eigen::MatrixX3d g = sur_.rate_gradient(k_, expand(v));
    Eigen::VectorXd out(v.size());
    for (std::size_t i = 0; i < free_.size(); ++i) {
      out.segment<3>(static_cast<Eigen::Index>(3 * i)) =
          g.row(static_cast<Eigen::Index>(free_[i])).transpose();
    }
    return out;
  }

  void add_hessian(const Eigen::VectorXd&, double weight, Eigen::MatrixXd& hess) const override {
    for (std::size_t i = 0; i < free_.size(); ++i) {
      const double h = -2.0 * sur_.quad_weight(k_, free_[i]) * sur_.a(k_, free_[i]);
      for (int d = 0; d < 3; ++d) {
        const auto idx = static_cast<Eigen::Index>(3 * i + d);
        hess(idx, idx) += weight * h;
      }
    }
  }

 private:
  Eigen::MatrixX3d expand(const Eigen::VectorXd& v) const {
    Eigen::MatrixX3d x = sur_.x_ref;
    for (std::size_t i = 0; i < free_.size(); ++i) {
      x.row(static_cast<Eigen::Index>(free_[i])) =
          v.segment<3>(static_cast<Eigen::Index>(3 * i)).transpose();
    }
    return x;
  }

  const PositioningSurrogate& sur_;
  std::size_t k_;
  std::vector<std::size_t> free_;
};

}  // namespace

PositioningProblem positioning_problem(const PositioningSurrogate& sur, const Limits& limits) {
  PositioningProblem pp;
  const std::size_t K = sur.users(), M = sur.uavs();
  std::vector<int> slot(M, -1);
  for (std::size_t j = 0; j < M; ++j) {
    bool used = false;
    for (std::size_t k = 0; k < K; ++k) used = used || sur.quad_weight(k, j) > 0.0;
    if (used) {
      slot[j] = static_cast<int>(pp.free_uavs.size());
      pp.free_uavs.push_back(j);
    }
  }
  MaximinProblem& prob = pp.problem;
  prob.dim = static_cast<int>(3 * pp.free_uavs.size());
  prob.start.resize(prob.dim);
  prob.lower.resize(prob.dim);
  prob.upper.resize(prob.dim);
  for (std::size_t i = 0; i < pp.free_uavs.size(); ++i) {
    const auto base = static_cast<Eigen::Index>(3 * i);
    prob.start.segment<3>(base) =
        sur.x_ref.row(static_cast<Eigen::Index>(pp.free_uavs[i])).transpose();
    prob.lower.segment<3>(base) = Vec3(0.0, 0.0, limits.h_min);
    prob.upper.segment<3>(base) =
        Vec3(limits.x_d, limits.y_d, limits.h_max);
  }
  for (std::size_t k = 0; k < K; ++k) {
    prob.pieces.push_back(std::make_shared<PositioningPiece>(sur, k, pp.free_uavs));
  }
  prob.outside =
      std::make_shared<ConcaveQuadratic>(sur.penalty, Eigen::VectorXd::Zero(prob.dim));

  for (const SeparationCut& cut : linearize_separation(sur.x_ref, limits.d_min)) {
    // -2 d'x_m + 2 d'x_j <= -offset
    LinearRow row;
    row.rhs = -cut.offset;
    auto add = [&](std::size_t uav, double sign) {
      const Vec3 coef = sign * 2.0 * cut.direction;
      if (slot[uav] < 0) {
        row.rhs -= coef.dot(sur.x_ref.row(static_cast<Eigen::Index>(uav)).transpose());
      } else {
        for (int d = 0; d < 3; ++d) row.terms.emplace_back(3 * slot[uav] + d, coef[d]);
      }
    };
    add(cut.m, -1.0);
    add(cut.j, 1.0);
    if (!row.terms.empty()) prob.inequalities.push_back(std::move(row));
  }
  return pp;
}

Eigen::MatrixX3d unpack_positions(const PositioningProblem& pp, const Eigen::VectorXd& v,
                                  const Eigen::MatrixX3d& x_ref) {
  Eigen::MatrixX3d x = x_ref;
  for (std::size_t i = 0; i < pp.free_uavs.size(); ++i) {
    x.row(static_cast<Eigen::Index>(pp.free_uavs[i])) =
        v.segment<3>(static_cast<Eigen::Index>(3 * i)).transpose();
  }
  return x;
}

// ------------------------------------------------------- resource allocation

double RaSurrogate::r_hat(std::size_t k, std::size_t m, std::size_t n,
                          const Eigen::MatrixXd& p) const {
  double total = 0.0;
  for (std::size_t j = 0; j < uavs(); ++j) total += p(j, n) * snr_gain(k, j);
  return c_ref(k, m, n) * std::log2(1.0 + total);
}

double RaSurrogate::r_bar(std::size_t k, std::size_t m, std::size_t n,
                          const Eigen::MatrixXd& p) const {
  double others = 0.0;
  for (std::size_t j = 0; j < uavs(); ++j) {
    if (j != m) others += p(j, n) * snr_gain(k, j);
  }
  return c_ref(k, m, n) * std::log2(1.0 + others);
}

double RaSurrogate::r_bar_ub(std::size_t k, std::size_t m, std::size_t n,
                             const Eigen::MatrixXd& p) const {
  double lin = 0.0;
  for (std::size_t j = 0; j < uavs(); ++j) {
    if (j != m) lin += snr_gain(k, j) * (p(j, n) - p_ref(j, n));
  }
  return kLog2e * b_prime_minus(k, m, n) * lin + r_bar0(k, m, n);
}

double RaSurrogate::rate(std::size_t k, const Eigen::MatrixXd& p, const Tensor3& c) const {
  double v = 0.0;
  for (std::size_t m = 0; m < uavs(); ++m) {
    for (std::size_t n = 0; n < subcarriers(); ++n) {
      v += r_hat(k, m, n, p) - r_bar_ub(k, m, n, p) +
           (c(k, m, n) - c_ref(k, m, n)) * rate_coef(k, m, n);
    }
  }
  return v;
}

double RaSurrogate::rho_lb(const Tensor3& c) const {
  double v = penalty_const;
  for (std::size_t i = 0; i < c.size(); ++i) v += penalty_slope.raw()[i] * c.raw()[i];
  return v;
}

double RaSurrogate::value(const Eigen::MatrixXd& p, const Tensor3& c) const {
  double v = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < users(); ++k) v = std::min(v, rate(k, p, c));
  return v + rho_lb(c);
}

RaSurrogate build_ra_surrogate(const SolutionState& state, const Eigen::MatrixXd& gains,
                               double noise_power) {
  const std::size_t K = state.users(), M = state.uavs(), N = state.subcarriers();
  RaSurrogate s;
  s.snr_gain = gains / noise_power;
  s.c_ref = state.c;
  s.p_ref = state.p;
  s.b_prime_minus = Tensor3(K, M, N);
  s.rate_coef = Tensor3(K, M, N);
  s.r_bar0 = Tensor3(K, M, N);
  s.penalty_slope = Tensor3(K, M, N);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t n = 0; n < N; ++n) {
        double others = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
          if (j != m) others += state.p(j, n) * s.snr_gain(k, j);
        }
        const double c = state.c(k, m, n);
        s.b_prime_minus(k, m, n) = c / (1.0 + others);
        s.rate_coef(k, m, n) = std::log2(1.0 + state.p(m, n) * s.snr_gain(k, m) / (1.0 + others));
        s.r_bar0(k, m, n) = c * std::log2(1.0 + others);
        const double lam = state.lambda(k, m, n);
        s.penalty_slope(k, m, n) = lam * (2.0 * c - 1.0);
        s.penalty_const -= lam * c * c;
      }
    }
  }
  return s;
}

namespace {

class RaPiece final : public ConcaveFunction {
 public:
  RaPiece(const RaSurrogate& sur, const RaLayout& layout, std::size_t k)
      : sur_(sur), layout_(layout), k_(k) {
    const std::size_t M = layout.m, N = layout.n;
    weight_.resize(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t m = 0; m < M; ++m) weight_[n] += kLog2e * sur.c_ref(k, m, n);
    }
    linear_ = Eigen::VectorXd::Zero(layout.dim());
    for (std::size_t j = 0; j < M; ++j) {
      for (std::size_t n = 0; n < N; ++n) {
        double coef = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
          if (m != j) coef += sur.b_prime_minus(k, m, n);
        }
        linear_[layout.p_index(j, n)] = -kLog2e * coef * sur.snr_gain(k, j);
      }
    }
    if (layout.optimize_c) {
      for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t n = 0; n < N; ++n) {
          linear_[layout.c_index(k, m, n)] = sur.rate_coef(k, m, n);
        }
      }
    }
    // Anchor the value at the expansion point to R_k(P^l, C^l).
    Eigen::VectorXd ref = Eigen::VectorXd::Zero(layout.dim());
    double base = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t n = 0; n < N; ++n) {
        ref[layout.p_index(m, n)] = sur.p_ref(m, n);
        if (layout.optimize_c) ref[layout.c_index(k, m, n)] = sur.c_ref(k, m, n);
        const double c = sur.c_ref(k, m, n);
        base += c < 1e-12 ? 0.0 : c * sur.rate_coef(k, m, n);
      }
    }
    constant_ = 0.0;
    constant_ = base - value(ref);
  }

  double value(const Eigen::VectorXd& v) const override {
    double out = constant_ + linear_.dot(v);
    for (std::size_t n = 0; n < layout_.n; ++n) {
      if (weight_[n] == 0.0) continue;
      out += weight_[n] * std::log1p(total(v, n));
    }
    return out;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& v) const override {
    Eigen::VectorXd g = linear_;
    for (std::size_t n = 0; n < layout_.n; ++n) {
      if (weight_[n] == 0.0) continue;
      const double f = weight_[n] / (1.0 + total(v, n));
      for (std::size_t j = 0; j < layout_.m; ++j) {
        g[layout_.p_index(j, n)] += f * sur_.snr_gain(k_, j);
      }
    }
    return g;
  }

  void add_hessian(const Eigen::VectorXd& v, double weight, Eigen::MatrixXd& hess) const override {
    for (std::size_t n = 0; n < layout_.n; ++n) {
      if (weight_[n] == 0.0) continue;
      const double s = 1.0 + total(v, n);
      const double f = -weight * weight_[n] / (s * s);
      for (std::size_t i = 0; i < layout_.m; ++i) {
        for (std::size_t j = 0; j < layout_.m; ++j) {
          hess(layout_.p_index(i, n), layout_.p_index(j, n)) +=
              f * sur_.snr_gain(k_, i) * sur_.snr_gain(k_, j);
        }
      }
    }
  }

 private:
  double total(const Eigen::VectorXd& v, std::size_t n) const {
    double s = 0.0;
    for (std::size_t j = 0; j < layout_.m; ++j) {
      s += v[layout_.p_index(j, n)] * sur_.snr_gain(k_, j);
    }
    return s;
  }

  const RaSurrogate& sur_;
  RaLayout layout_;
  std::size_t k_;
  std::vector<double> weight_;
  Eigen::VectorXd linear_;
  double constant_ = 0.0;
};

}  // namespace

RaProblem ra_problem(const RaSurrogate& sur, const Limits& limits, bool optimize_c) {
  RaProblem rp;
  RaLayout& L = rp.layout;
  L.k = sur.users();
  L.m = sur.uavs();
  L.n = sur.subcarriers();
  L.optimize_c = optimize_c && L.m * L.n > 1;
  MaximinProblem& prob = rp.problem;
  prob.dim = L.dim();
  const double inf = std::numeric_limits<double>::infinity();
  prob.lower = Eigen::VectorXd::Zero(prob.dim);
  prob.upper = Eigen::VectorXd::Constant(prob.dim, inf);
  prob.start = Eigen::VectorXd::Zero(prob.dim);
  Eigen::VectorXd hint(prob.dim);

  for (std::size_t m = 0; m < L.m; ++m) {
    LinearRow budget;
    budget.rhs = limits.p_max;
    for (std::size_t n = 0; n < L.n; ++n) {
      prob.start[L.p_index(m, n)] = sur.p_ref(m, n);
      hint[L.p_index(m, n)] = limits.p_max / static_cast<double>(L.n + 1);
      budget.terms.emplace_back(L.p_index(m, n), 1.0);
    }
    prob.inequalities.push_back(std::move(budget));
  }

  for (std::size_t k = 0; k < L.k; ++k) {
    prob.pieces.push_back(std::make_shared<RaPiece>(sur, L, k));
  }

  if (L.optimize_c) {
    const double uniform = 1.0 / static_cast<double>(L.m * L.n);
    Eigen::VectorXd slope = Eigen::VectorXd::Zero(prob.dim);
    for (std::size_t k = 0; k < L.k; ++k) {
      for (std::size_t m = 0; m < L.m; ++m) {
        for (std::size_t n = 0; n < L.n; ++n) {
          const int i = L.c_index(k, m, n);
          prob.start[i] = sur.c_ref(k, m, n);
          hint[i] = uniform;
          prob.upper[i] = 1.0;
          slope[i] = sur.penalty_slope(k, m, n);
        }
      }
    }
    prob.outside = std::make_shared<ConcaveQuadratic>(sur.penalty_const, slope);
    // Every (m, n) slot is necessarily full when K = M N.
    const bool saturated = L.k == L.m * L.n;
    for (std::size_t m = 0; m < L.m; ++m) {
      for (std::size_t n = 0; n < L.n; ++n) {
        LinearRow row;
        row.rhs = 1.0;
        for (std::size_t k = 0; k < L.k; ++k) row.terms.emplace_back(L.c_index(k, m, n), 1.0);
        (saturated ? prob.equalities : prob.inequalities).push_back(std::move(row));
      }
    }
    for (std::size_t k = 0; k < L.k; ++k) {
      LinearRow row;
      row.rhs = 1.0;
      for (std::size_t m = 0; m < L.m; ++m) {
        for (std::size_t n = 0; n < L.n; ++n) row.terms.emplace_back(L.c_index(k, m, n), 1.0);
      }
      prob.equalities.push_back(std::move(row));
    }
  } else {
    prob.outside = std::make_shared<ConcaveQuadratic>(sur.rho_lb(sur.c_ref),
                                                      Eigen::VectorXd::Zero(prob.dim));
  }
  prob.interior_hint = hint;
  return rp;
}

void unpack_ra(const RaProblem& rp, const Eigen::VectorXd& v, const RaSurrogate& sur,
               Eigen::MatrixXd& p, Tensor3& c) {
  const RaLayout& L = rp.layout;
  p.resize(static_cast<Eigen::Index>(L.m), static_cast<Eigen::Index>(L.n));
  for (std::size_t m = 0; m < L.m; ++m) {
    for (std::size_t n = 0; n < L.n; ++n) p(m, n) = std::max(0.0, v[L.p_index(m, n)]);
  }
  c = sur.c_ref;
  if (!L.optimize_c) return;
  for (std::size_t k = 0; k < L.k; ++k) {
    for (std::size_t m = 0; m < L.m; ++m) {
      for (std::size_t n = 0; n < L.n; ++n) c(k, m, n) = v[L.c_index(k, m, n)];
    }
  }
}

}  // namespace uavbs
