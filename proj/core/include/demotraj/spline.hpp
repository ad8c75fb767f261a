#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <span>
#include <utility>
#include <vector>

namespace demotraj {

using Vector = Eigen::VectorXd;

/// Non-decreasing knot sequence of a clamped B-spline of order k (degree k-1).
class KnotVector {
 public:
  KnotVector(std::vector<double> knots, int order);

  /// Clamped knots with uniformly spaced interior knots on [0,1].
  static KnotVector clamped_uniform(int n_ctrl, int order);

  int order() const { return order_; }
  int ctrl_count() const { return static_cast<int>(knots_.size()) - order_; }
  std::size_t size() const { return knots_.size(); }
  double operator[](std::size_t i) const { return knots_[i]; }
  std::span<const double> values() const { return knots_; }

  /// Index mu with knots[mu] <= s < knots[mu+1]; s == 1 maps to the last non-empty span.
  int find_span(double s) const;

  /// Knot vector of the derivative spline (first and last knot dropped, order - 1).
  KnotVector derivative() const;

 private:
  std::vector<double> knots_;
  int order_;
};

/// Cox-de Boor basis N_{i,k}(s) with 0-based index i.
double basis(int i, int order, double s, const KnotVector& knots);

/// The `order` basis functions that are non-zero at s, starting at index `first`.
struct LocalBasis {
  int first = 0;
  std::vector<double> values;
};
LocalBasis nonzero_basis(const KnotVector& knots, double s);

/// Linear map taking control points of a spline to those of its r-th derivative.
/// Rows = ctrl_count - r, cols = ctrl_count.
Eigen::MatrixXd derivative_control_map(const KnotVector& knots, int r);

/// Gram matrix H with  integral_0^1 |xi^(r)(s)|^2 ds = sum_j p_j^T H p_j,
/// where p_j is the column of joint j's control values. Integrated per knot span
/// with Gauss-Legendre, exact for the piecewise polynomial integrand.
Eigen::MatrixXd derivative_gram(const KnotVector& knots, int r);

/// G_ab = integral_0^1 N_a(s) N_b(s) ds. derivative_gram is M^T G M with M the
/// derivative control map and G taken on the derivative knots; evaluating the
/// two factors separately avoids cancellation when control points are smooth.
Eigen::MatrixXd basis_gram(const KnotVector& knots);

class BSplineCurve {
 public:
  BSplineCurve(std::vector<Vector> control_points, KnotVector knots);

  int order() const { return knots_.order(); }
  int dim() const { return static_cast<int>(ctrl_.front().size()); }
  int size() const { return static_cast<int>(ctrl_.size()); }
  const std::vector<Vector>& control_points() const { return ctrl_; }
  const KnotVector& knots() const { return knots_; }

  Vector eval(double s) const;
  /// r-th derivative with respect to s, 0 <= r < order.
  Vector derivative(double s, int r) const;
  /// Spline whose control points are the differenced, span-scaled control points.
  BSplineCurve derivative_curve(int r) const;
  /// Component-wise min/max of the r-th derivative's control points (convex hull bound).
  std::pair<Vector, Vector> derivative_control_bounds(int r) const;

 private:
  std::vector<Vector> ctrl_;
  KnotVector knots_;
};

/// Spline in normalized time s = t / duration.
class TimedTrajectory {
 public:
  TimedTrajectory(BSplineCurve curve, double duration);

  const BSplineCurve& curve() const { return curve_; }
  double duration() const { return duration_; }
  int dim() const { return curve_.dim(); }

  Vector position(double t) const;
  /// r-th time derivative: (1/T^r) times the r-th normalized derivative.
  Vector derivative(double t, int r) const;

 private:
  BSplineCurve curve_;
  double duration_;
};

/// {order, knots[], control_points[][], duration_s}; doubles round-trip exactly.
nlohmann::json to_json(const TimedTrajectory& traj);
TimedTrajectory trajectory_from_json(const nlohmann::json& j);

}  // namespace demotraj
