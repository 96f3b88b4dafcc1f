#pragma once

// Maximin solver: maximize min_k f_k(x) + h(x) over a polyhedron, with every
// f_k and h concave. Solved in epigraph form (maximize t + h(x) subject to
// t <= f_k(x)) by a log-barrier Newton method.

#include <limits>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace uavbs {

/// Smooth concave function of the full variable vector.
class ConcaveFunction {
 public:
  virtual ~ConcaveFunction() = default;
  virtual double value(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd gradient(const Eigen::VectorXd& x) const = 0;
  /// hess += weight * (Hessian of this function at x)
  virtual void add_hessian(const Eigen::VectorXd& x, double weight,
                           Eigen::MatrixXd& hess) const = 0;
};

/// f(x) = constant + linear . x + 0.5 x' Q x with Q negative semidefinite.
/// An empty Q means the function is affine.
class ConcaveQuadratic final : public ConcaveFunction {
 public:
  ConcaveQuadratic(double constant, Eigen::VectorXd linear, Eigen::MatrixXd quad = {})
      : constant_(constant), linear_(std::move(linear)), quad_(std::move(quad)) {}

  double value(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const override;
  void add_hessian(const Eigen::VectorXd& x, double weight,
                   Eigen::MatrixXd& hess) const override;

 private:
  double constant_;
  Eigen::VectorXd linear_;
  Eigen::MatrixXd quad_;
};

/// Sparse row: sum terms[i].second * x[terms[i].first]  (<= or ==) rhs.
struct LinearRow {
  std::vector<std::pair<int, double>> terms;
  double rhs = 0.0;

  double eval(const Eigen::VectorXd& x) const {
    double s = 0.0;
    for (const auto& [i, a] : terms) s += a * x[i];
    return s;
  }
};

struct MaximinProblem {
  int dim = 0;
  std::vector<std::shared_ptr<const ConcaveFunction>> pieces;
  /// Concave term added outside the min; may be null.
  std::shared_ptr<const ConcaveFunction> outside;
  std::vector<LinearRow> inequalities;  // row . x <= rhs
  std::vector<LinearRow> equalities;    // row . x == rhs
  Eigen::VectorXd lower;                // -inf allowed
  Eigen::VectorXd upper;                // +inf allowed
  /// Feasible warm start.
  Eigen::VectorXd start;
  /// Optional strictly feasible point; skips the interior-point search.
  std::optional<Eigen::VectorXd> interior_hint;
};

enum class SolveStatus { converged, iteration_limit, numerical_failure };

const char* to_string(SolveStatus s);

struct SolveReport {
  Eigen::VectorXd x;
  double value = 0.0;
  double violation = 0.0;
  /// Duality-gap bound of the final barrier iterate.
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  SolveStatus status = SolveStatus::numerical_failure;
};

/// min_k f_k(x) + h(x)
double maximin_value(const MaximinProblem& problem, const Eigen::VectorXd& x);

/// Largest violation of the linear constraints and bounds (0 when feasible).
double constraint_violation(const MaximinProblem& problem, const Eigen::VectorXd& x);

/// Throws Error when the start violates the constraints by more than
/// `tol_feas`. The returned point is never worse than the start.
SolveReport solve_maximin(const MaximinProblem& problem, double tol_kkt = 1e-6,
                          double tol_feas = 1e-9, int max_iter = 200);

/// f((a+b)/2) - (f(a)+f(b))/2 minimised over the pieces; negative values
/// beyond rounding indicate a non-concave piece.
double midpoint_concavity_gap(const MaximinProblem& problem, const Eigen::VectorXd& a,
                              const Eigen::VectorXd& b);

}  // namespace uavbs
