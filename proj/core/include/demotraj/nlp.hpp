#pragma once

#include <Eigen/Core>

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <vector>

/// Bound-constrained augmented Lagrangian solver for small dense NLPs.
///
///   min f(x)  s.t.  c_E(x) = 0,  c_I(x) <= 0,  lo <= x <= hi
///
/// Outer loop: Powell-Hestenes-Rockafellar multiplier updates with monotone
/// penalty growth. Inner loop: projected limited-memory BFGS on the box with an
/// optional problem-supplied preconditioner as initial inverse Hessian.
namespace demotraj::nlp {

using Vector = Eigen::VectorXd;
using VectorRef = Eigen::Ref<Vector>;
using ConstVectorRef = Eigen::Ref<const Vector>;

struct Objective {
  std::function<double(const Vector& x)> value;
  /// Writes the full gradient. Empty: central differences are used.
  std::function<void(const Vector& x, VectorRef grad)> gradient;
  /// Optional dense Hessian. When present the inner iterations take projected
  /// Gauss-Newton steps on the merit (objective Hessian plus rho J^T J over the
  /// active rows) instead of L-BFGS steps.
  std::function<void(const Vector& x, Eigen::Ref<Eigen::MatrixXd> hess)> hessian;
};

struct ConstraintBlock {
  std::string name;
  int size = 0;
  std::function<void(const Vector& x, VectorRef out)> value;
  /// Accumulates J(x)^T w into grad. Empty: central differences are used.
  std::function<void(const Vector& x, const Vector& w, VectorRef grad)> jacobian_transpose;
  /// Optional dense Jacobian (size x dim), written in full. Only needed for the
  /// Gauss-Newton model; falls back to jacobian_transpose with unit weights.
  std::function<void(const Vector& x, Eigen::Ref<Eigen::MatrixXd> jac)> jacobian;
};

struct Problem {
  int dim = 0;
  Objective objective;
  std::vector<ConstraintBlock> equalities;    // target 0
  std::vector<ConstraintBlock> inequalities;  // target <= 0
  Vector lower, upper;                        // empty = unbounded
  /// Optional approximate inverse Hessian of the objective: out = M^{-1} in.
  std::function<void(const Vector& in, VectorRef out)> precondition;

  int equality_count() const;
  int inequality_count() const;
};

enum class Status { converged, max_iter, infeasible, numeric_failure, cancelled };
const char* to_string(Status s);

struct Options {
  double feas_tol = 1e-6;
  double opt_tol = 1e-5;
  int max_outer = 50;
  int max_inner = 500;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double max_penalty = 1e12;
  int lbfgs_memory = 10;
  /// Keep the merit value of every accepted inner step (diagnostics / tests).
  bool record_merit = false;
  /// Checked between outer iterations.
  const std::atomic<bool>* cancel = nullptr;
};

struct WarmStart {
  Vector eq_multipliers;
  Vector ineq_multipliers;
  double penalty = 0.0;  // <= 0: use Options::initial_penalty
};

struct Solution {
  Vector x;
  double objective_value = 0.0;
  double kkt_residual = 0.0;
  double constraint_violation = 0.0;  // max over equalities |c|, inequalities max(c,0)
  Status status = Status::max_iter;
  Vector eq_multipliers;
  Vector ineq_multipliers;
  double penalty = 0.0;
  int outer_iterations = 0;
  int inner_iterations = 0;
  std::string diagnostic;
  /// Merit value after each accepted inner step, grouped by outer iteration.
  std::vector<std::vector<double>> merit_history;

  WarmStart warm_start() const { return {eq_multipliers, ineq_multipliers, penalty}; }
};

Solution solve(const Problem& p, Vector x0, const Options& opts = {},
               const std::optional<WarmStart>& warm = std::nullopt);

/// Max over all constraints of the violation at x (recomputed from raw callbacks).
double max_violation(const Problem& p, const Vector& x);

struct GradientCheckEntry {
  std::string callback;  // "objective" or the constraint block name
  int index = 0;         // variable index
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool flagged = false;
};

struct GradientReport {
  std::vector<GradientCheckEntry> entries;
  double max_rel_error = 0.0;
  bool any_flagged() const;
};

/// Compares analytic gradients (objective) and J^T w products (constraint blocks,
/// with a fixed pseudo-random weight vector) against central differences.
/// Optional dense callbacks are checked too: the Hessian along a fixed direction
/// against differenced gradients, dense Jacobians against the J^T w product.
GradientReport check_gradients(const Problem& p, const Vector& x, double flag_threshold = 1e-4);

}  // namespace demotraj::nlp
