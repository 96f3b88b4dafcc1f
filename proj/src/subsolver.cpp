#include "uavbs/subsolver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "uavbs/types.hpp"

namespace uavbs {

double ConcaveQuadratic::value(const Eigen::VectorXd& x) const {
  double v = constant_ + linear_.dot(x);
  if (quad_.size() != 0) v += 0.5 * x.dot(quad_ * x);
  return v;
}

Eigen::VectorXd ConcaveQuadratic::gradient(const Eigen::VectorXd& x) const {
  if (quad_.size() == 0) return linear_;
  return linear_ + quad_ * x;
}

void ConcaveQuadratic::add_hessian(const Eigen::VectorXd&, double weight,
                                   Eigen::MatrixXd& hess) const {
  if (quad_.size() != 0) hess.topLeftCorner(quad_.rows(), quad_.cols()) += weight * quad_;
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::iteration_limit: return "iteration-limit";
    case SolveStatus::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

double maximin_value(const MaximinProblem& problem, const Eigen::VectorXd& x) {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& f : problem.pieces) v = std::min(v, f->value(x));
  if (problem.outside) v += problem.outside->value(x);
  return v;
}

double constraint_violation(const MaximinProblem& problem, const Eigen::VectorXd& x) {
  double v = 0.0;
  for (const LinearRow& row : problem.inequalities) v = std::max(v, row.eval(x) - row.rhs);
  for (const LinearRow& row : problem.equalities) v = std::max(v, std::abs(row.eval(x) - row.rhs));
  for (int i = 0; i < problem.dim; ++i) {
    if (problem.lower.size()) v = std::max(v, problem.lower[i] - x[i]);
    if (problem.upper.size()) v = std::max(v, x[i] - problem.upper[i]);
  }
  return v;
}

double midpoint_concavity_gap(const MaximinProblem& problem, const Eigen::VectorXd& a,
                              const Eigen::VectorXd& b) {
  const Eigen::VectorXd mid = 0.5 * (a + b);
  double gap = std::numeric_limits<double>::infinity();
  auto check = [&](const ConcaveFunction& f) {
    gap = std::min(gap, f.value(mid) - 0.5 * (f.value(a) + f.value(b)));
  };
  for (const auto& f : problem.pieces) check(*f);
  if (problem.outside) check(*problem.outside);
  return gap;
}

namespace {

// Log-barrier Newton method on the epigraph form. Variables z = [x; t].
class Barrier {
 public:
  explicit Barrier(const MaximinProblem& p) : p_(p), n_(p.dim) {
    for (int i = 0; i < n_; ++i) {
      if (p.lower.size() && std::isfinite(p.lower[i])) lower_idx_.push_back(i);
      if (p.upper.size() && std::isfinite(p.upper[i])) upper_idx_.push_back(i);
    }
    constraint_count_ = static_cast<double>(p.pieces.size() + p.inequalities.size() +
                                            lower_idx_.size() + upper_idx_.size());
    eq_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.equalities.size()), n_ + 1);
    eq_rhs_ = Eigen::VectorXd::Zero(eq_.rows());
    for (std::size_t r = 0; r < p.equalities.size(); ++r) {
      for (const auto& [i, a] : p.equalities[r].terms) eq_(static_cast<Eigen::Index>(r), i) += a;
      eq_rhs_[static_cast<Eigen::Index>(r)] = p.equalities[r].rhs;
    }
  }

  double constraint_count() const { return constraint_count_; }

  bool linear_interior(const Eigen::VectorXd& x) const {
    for (const LinearRow& row : p_.inequalities) {
      if (!(row.rhs - row.eval(x) > 0.0)) return false;
    }
    for (int i : lower_idx_) {
      if (!(x[i] - p_.lower[i] > 0.0)) return false;
    }
    for (int i : upper_idx_) {
      if (!(p_.upper[i] - x[i] > 0.0)) return false;
    }
    return true;
  }

  // Barrier objective; +inf outside the domain.
  double phi(const Eigen::VectorXd& z, double mu) const {
    const Eigen::VectorXd x = z.head(n_);
    const double t = z[n_];
    if (!linear_interior(x)) return std::numeric_limits<double>::infinity();
    double val = 0.0;
    for (const auto& f : p_.pieces) {
      const double slack = f->value(x) - t;
      if (!(slack > 0.0) || !std::isfinite(slack)) return std::numeric_limits<double>::infinity();
      val -= std::log(slack);
    }
    double obj = t;
    if (p_.outside) obj += p_.outside->value(x);
    if (!std::isfinite(obj)) return std::numeric_limits<double>::infinity();
    val -= mu * obj;
    for (const LinearRow& row : p_.inequalities) val -= std::log(row.rhs - row.eval(x));
    for (int i : lower_idx_) val -= std::log(x[i] - p_.lower[i]);
    for (int i : upper_idx_) val -= std::log(p_.upper[i] - x[i]);
    return val;
  }

  void derivatives(const Eigen::VectorXd& z, double mu, Eigen::VectorXd& grad,
                   Eigen::MatrixXd& hess) const {
    const Eigen::VectorXd x = z.head(n_);
    const double t = z[n_];
    grad = Eigen::VectorXd::Zero(n_ + 1);
    hess = Eigen::MatrixXd::Zero(n_ + 1, n_ + 1);
    Eigen::MatrixXd hxx = Eigen::MatrixXd::Zero(n_, n_);

    grad[n_] -= mu;
    if (p_.outside) {
      grad.head(n_) -= mu * p_.outside->gradient(x);
      p_.outside->add_hessian(x, -mu, hxx);
    }
    for (const auto& f : p_.pieces) {
      const double slack = f->value(x) - t;
      const Eigen::VectorXd gf = f->gradient(x);
      const double inv = 1.0 / slack;
      grad.head(n_) -= inv * gf;
      grad[n_] += inv;
      hxx.selfadjointView<Eigen::Lower>().rankUpdate(gf, inv * inv);
      f->add_hessian(x, -inv, hxx);
      hess.block(n_, 0, 1, n_) -= inv * inv * gf.transpose();
      hess(n_, n_) += inv * inv;
    }
    for (const LinearRow& row : p_.inequalities) {
      const double inv = 1.0 / (row.rhs - row.eval(x));
      for (const auto& [i, a] : row.terms) {
        grad[i] += inv * a;
        for (const auto& [j, b] : row.terms) {
          if (j <= i) hxx(i, j) += inv * inv * a * b;
        }
      }
    }
    for (int i : lower_idx_) {
      const double inv = 1.0 / (x[i] - p_.lower[i]);
      grad[i] -= inv;
      hxx(i, i) += inv * inv;
    }
    for (int i : upper_idx_) {
      const double inv = 1.0 / (p_.upper[i] - x[i]);
      grad[i] += inv;
      hxx(i, i) += inv * inv;
    }
    // rankUpdate and the row terms fill only the lower triangle.
    Eigen::MatrixXd full = hxx.triangularView<Eigen::StrictlyLower>();
    full += hxx.triangularView<Eigen::StrictlyLower>().transpose();
    full.diagonal() = hxx.diagonal();
    hess.topLeftCorner(n_, n_) = full;
    hess.block(0, n_, n_, 1) = hess.block(n_, 0, 1, n_).transpose();
  }

  // Newton direction for the equality-constrained barrier problem.
  bool newton_step(const Eigen::VectorXd& z, const Eigen::VectorXd& grad,
                   Eigen::MatrixXd hess, Eigen::VectorXd& dz) const {
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    double ridge = 1e-14 * std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
    while (llt.info() != Eigen::Success) {
      hess.diagonal().array() += ridge;
      llt.compute(hess);
      ridge *= 100.0;
      if (!std::isfinite(ridge) || ridge > 1e300) return false;
    }
    const Eigen::VectorXd y = llt.solve(-grad);
    if (eq_.rows() == 0) {
      dz = y;
    } else {
      const Eigen::VectorXd resid = eq_rhs_ - eq_ * z;
      const Eigen::MatrixXd hinv_at = llt.solve(eq_.transpose());
      const Eigen::MatrixXd schur = eq_ * hinv_at;
      const Eigen::VectorXd w =
          schur.completeOrthogonalDecomposition().solve(eq_ * y - resid);
      dz = y - hinv_at * w;
    }
    return dz.allFinite();
  }

  struct Result {
    Eigen::VectorXd z;
    double gap = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool failed = false;
    bool converged = false;
  };

  // z0 must be strictly inside the barrier domain.
  Result run(Eigen::VectorXd z, double tol, int max_iter, double mu,
             const std::function<bool(const Eigen::VectorXd&, double)>& stop_early) const {
    Result res;
    const double factor = 20.0;
    Eigen::VectorXd grad, dz;
    Eigen::MatrixXd hess;
    while (true) {
      // Centering.
      for (int inner = 0; inner < 60; ++inner) {
        if (res.iterations >= max_iter) {
          res.z = z;
          res.gap = constraint_count_ / mu;
          return res;
        }
        ++res.iterations;
        derivatives(z, mu, grad, hess);
        if (!grad.allFinite() || !hess.allFinite() || !newton_step(z, grad, hess, dz)) {
          res.z = z;
          res.failed = true;
          return res;
        }
        const double decrement = -grad.dot(dz);
        if (decrement < 0.0 || decrement * 0.5 <= 1e-10) break;
        const double f0 = phi(z, mu);
        double step = 1.0;
        bool moved = false;
        while (step > 1e-14) {
          const Eigen::VectorXd trial = z + step * dz;
          const double f1 = phi(trial, mu);
          if (std::isfinite(f1) && f1 <= f0 - 0.25 * step * decrement) {
            z = trial;
            moved = true;
            break;
          }
          step *= 0.5;
        }
        if (!moved) break;
      }
      const double gap = constraint_count_ / mu;
      if (stop_early && stop_early(z, gap)) {
        res.z = z;
        res.gap = gap;
        res.converged = true;
        return res;
      }
      if (gap <= tol) {
        res.z = z;
        res.gap = gap;
        res.converged = true;
        return res;
      }
      mu *= factor;
    }
  }

 private:
  const MaximinProblem& p_;
  int n_;
  std::vector<int> lower_idx_, upper_idx_;
  double constraint_count_ = 0.0;
  Eigen::MatrixXd eq_;
  Eigen::VectorXd eq_rhs_;
};

double min_normalized_slack(const MaximinProblem& p, const Eigen::VectorXd& x) {
  double s = std::numeric_limits<double>::infinity();
  for (const LinearRow& row : p.inequalities) {
    double norm = 0.0;
    for (const auto& term : row.terms) norm += term.second * term.second;
    norm = std::sqrt(norm);
    if (norm > 0.0) s = std::min(s, (row.rhs - row.eval(x)) / norm);
  }
  for (int i = 0; i < p.dim; ++i) {
    if (p.lower.size() && std::isfinite(p.lower[i])) s = std::min(s, x[i] - p.lower[i]);
    if (p.upper.size() && std::isfinite(p.upper[i])) s = std::min(s, p.upper[i] - x[i]);
  }
  return s;
}

// Finds a point whose normalised slack on every inequality is positive by
// maximising the common slack s (capped at 1) subject to the equalities.
std::optional<Eigen::VectorXd> find_interior(const MaximinProblem& p, const Eigen::VectorXd& x0) {
  const double s0 = min_normalized_slack(p, x0);
  if (!std::isfinite(s0)) return x0;  // no inequalities at all

  MaximinProblem aux;
  aux.dim = p.dim + 1;
  const int s_idx = p.dim;
  for (const LinearRow& row : p.inequalities) {
    double norm = 0.0;
    for (const auto& term : row.terms) norm += term.second * term.second;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) continue;
    LinearRow r;
    for (const auto& [i, a] : row.terms) r.terms.emplace_back(i, a / norm);
    r.terms.emplace_back(s_idx, 1.0);
    r.rhs = row.rhs / norm;
    aux.inequalities.push_back(std::move(r));
  }
  for (int i = 0; i < p.dim; ++i) {
    if (p.lower.size() && std::isfinite(p.lower[i])) {
      aux.inequalities.push_back(LinearRow{{{i, -1.0}, {s_idx, 1.0}}, -p.lower[i]});
    }
    if (p.upper.size() && std::isfinite(p.upper[i])) {
      aux.inequalities.push_back(LinearRow{{{i, 1.0}, {s_idx, 1.0}}, p.upper[i]});
    }
  }
  aux.inequalities.push_back(LinearRow{{{s_idx, 1.0}}, 1.0});
  aux.equalities = p.equalities;
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(aux.dim);
  lin[s_idx] = 1.0;
  aux.pieces.push_back(std::make_shared<ConcaveQuadratic>(0.0, lin));

  Eigen::VectorXd z(aux.dim + 1);
  z.head(p.dim) = x0;
  z[s_idx] = std::min(s0, 1.0) - 1.0;
  z[aux.dim] = z[s_idx] - 1.0;

  Barrier barrier(aux);
  auto enough = [&](const Eigen::VectorXd& zz, double gap) {
    return zz[s_idx] > 0.0 && gap <= 0.5 * zz[s_idx];
  };
  const auto res = barrier.run(z, 1e-9, 400, 1.0, enough);
  if (res.failed || !(res.z[s_idx] > 0.0)) return std::nullopt;
  Eigen::VectorXd x = res.z.head(p.dim);
  if (!barrier.linear_interior(res.z.head(aux.dim))) return std::nullopt;
  return x;
}

// Removes the drift that Newton steps accumulate on the equality rows by
// alternating projections onto the equality set and the bound box.
void repair_drift(const MaximinProblem& p, Eigen::VectorXd& x, double tol) {
  if (p.equalities.empty()) return;
  const auto rows = static_cast<Eigen::Index>(p.equalities.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, p.dim);
  Eigen::VectorXd b(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const LinearRow& row = p.equalities[static_cast<std::size_t>(i)];
    for (const auto& [j, c] : row.terms) a(i, j) += c;
    b[i] = row.rhs;
  }
  const auto cod = (a * a.transpose()).completeOrthogonalDecomposition();
  Eigen::VectorXd best = x;
  double best_violation = constraint_violation(p, x);
  for (int round = 0; round < 50 && best_violation > tol; ++round) {
    x += a.transpose() * cod.solve(b - a * x);
    for (int i = 0; i < p.dim; ++i) {
      if (p.lower.size()) x[i] = std::max(x[i], p.lower[i]);
      if (p.upper.size()) x[i] = std::min(x[i], p.upper[i]);
    }
    const double v = constraint_violation(p, x);
    if (v < best_violation) {
      best_violation = v;
      best = x;
    }
  }
  x = best;
}

}  // namespace

SolveReport solve_maximin(const MaximinProblem& problem, double tol_kkt, double tol_feas,
                          int max_iter) {
  if (problem.start.size() != problem.dim) throw Error("maximin: start has wrong dimension");
  if (problem.pieces.empty()) throw Error("maximin: no pieces");
  const double start_violation = constraint_violation(problem, problem.start);
  if (start_violation > tol_feas) throw Error("maximin: infeasible start");

  SolveReport report;
  report.x = problem.start;
  report.value = maximin_value(problem, problem.start);
  report.violation = start_violation;
  if (!std::isfinite(report.value)) {
    report.status = SolveStatus::numerical_failure;
    return report;
  }

  Barrier barrier(problem);

  std::optional<Eigen::VectorXd> interior;
  if (problem.interior_hint && barrier.linear_interior(*problem.interior_hint) &&
      constraint_violation(problem, *problem.interior_hint) <= tol_feas) {
    interior = problem.interior_hint;
  } else if (barrier.linear_interior(problem.start)) {
    interior = problem.start;
  } else {
    interior = find_interior(problem, problem.start);
  }
  if (!interior) {
    report.status = SolveStatus::numerical_failure;
    return report;
  }

  // Pull the interior point toward the warm start while staying interior.
  Eigen::VectorXd x0 = *interior;
  if (!barrier.linear_interior(problem.start)) {
    const double theta = 0.1;
    Eigen::VectorXd blend = problem.start + theta * (x0 - problem.start);
    if (barrier.linear_interior(blend)) x0 = blend;
  } else {
    x0 = problem.start;
  }

  double tmin = std::numeric_limits<double>::infinity();
  for (const auto& f : problem.pieces) tmin = std::min(tmin, f->value(x0));
  if (!std::isfinite(tmin)) {
    report.status = SolveStatus::numerical_failure;
    return report;
  }
  const double scale = std::max(1e-3, std::abs(maximin_value(problem, x0)));
  Eigen::VectorXd z(problem.dim + 1);
  z.head(problem.dim) = x0;
  z[problem.dim] = tmin - std::max(1e-3, 0.1 * scale);

  const double mu0 = barrier.constraint_count() / scale;
  const auto res = barrier.run(z, tol_kkt, max_iter, mu0, nullptr);
  report.iterations = res.iterations;
  report.residual = res.gap;

  Eigen::VectorXd x = res.z.head(problem.dim);
  repair_drift(problem, x, 0.1 * tol_feas);
  const double value = maximin_value(problem, x);
  const double violation = constraint_violation(problem, x);
  if (res.failed || !std::isfinite(value)) {
    report.status = SolveStatus::numerical_failure;
    return report;
  }
  if (value >= report.value && violation <= tol_feas) {
    report.x = x;
    report.value = value;
    report.violation = violation;
  }
  report.status = res.converged && report.violation <= tol_feas && res.gap <= tol_kkt
                      ? SolveStatus::converged
                      : SolveStatus::iteration_limit;
  return report;
}

}  // namespace uavbs
