#include "demotraj/spline.hpp"

#include "demotraj/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace demotraj {

KnotVector::KnotVector(std::vector<double> knots, int order)
    : knots_(std::move(knots)), order_(order) {
  if (order_ < 1) throw InvalidArgument("knot vector order must be >= 1");
  if (knots_.size() < static_cast<std::size_t>(2 * order_))
    throw InvalidArgument("knot vector needs at least 2*order knots");
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (knots_[i] < knots_[i - 1]) throw InvalidArgument("knots must be non-decreasing");
  }
  for (int i = 0; i < order_; ++i) {
    if (knots_[i] != 0.0 || knots_[knots_.size() - 1 - i] != 1.0)
      throw InvalidArgument("knot vector must be clamped on [0,1]");
  }
}

KnotVector KnotVector::clamped_uniform(int n_ctrl, int order) {
  if (order < 2) throw InvalidArgument("spline order must be >= 2");
  if (n_ctrl < order)
    throw InvalidArgument("need at least `order` control points, got " + std::to_string(n_ctrl));
  std::vector<double> k;
  k.reserve(static_cast<std::size_t>(n_ctrl + order));
  k.insert(k.end(), static_cast<std::size_t>(order), 0.0);
  const int spans = n_ctrl - order + 1;
  for (int j = 1; j < spans; ++j) k.push_back(static_cast<double>(j) / spans);
  k.insert(k.end(), static_cast<std::size_t>(order), 1.0);
  return KnotVector(std::move(k), order);
}

int KnotVector::find_span(double s) const {
  const int n = ctrl_count();
  if (s >= knots_[static_cast<std::size_t>(n)]) return n - 1;
  if (s <= knots_[static_cast<std::size_t>(order_ - 1)]) return order_ - 1;
  // knots_[mu] <= s < knots_[mu+1]
  auto it = std::upper_bound(knots_.begin() + order_ - 1, knots_.begin() + n + 1, s);
  return static_cast<int>(it - knots_.begin()) - 1;
}

KnotVector KnotVector::derivative() const {
  if (order_ < 2) throw InvalidArgument("cannot differentiate an order-1 knot vector");
  return KnotVector(std::vector<double>(knots_.begin() + 1, knots_.end() - 1), order_ - 1);
}

namespace {

double basis_recursive(int i, int k, double s, const KnotVector& u, int span) {
  if (k == 1) return i == span ? 1.0 : 0.0;
  const auto ui = static_cast<std::size_t>(i);
  const auto uk = static_cast<std::size_t>(k);
  double value = 0.0;
  const double left_den = u[ui + uk - 1] - u[ui];
  if (left_den > 0.0) value += (s - u[ui]) / left_den * basis_recursive(i, k - 1, s, u, span);
  const double right_den = u[ui + uk] - u[ui + 1];
  if (right_den > 0.0) value += (u[ui + uk] - s) / right_den * basis_recursive(i + 1, k - 1, s, u, span);
  return value;
}

void check_unit_interval(double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw DomainError("normalized time outside [0,1]: " + std::to_string(s));
}

}  // namespace

double basis(int i, int order, double s, const KnotVector& knots) {
  if (order != knots.order()) throw InvalidArgument("basis order does not match knot vector");
  if (i < 0 || i >= knots.ctrl_count()) throw InvalidArgument("basis index out of range");
  check_unit_interval(s);
  return basis_recursive(i, order, s, knots, knots.find_span(s));
}

LocalBasis nonzero_basis(const KnotVector& knots, double s) {
  check_unit_interval(s);
  const int p = knots.order() - 1;
  const int span = knots.find_span(s);
  LocalBasis out;
  out.first = span - p;
  out.values.assign(static_cast<std::size_t>(p + 1), 0.0);
  std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
  auto& N = out.values;
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    left[uj] = s - knots[static_cast<std::size_t>(span + 1 - j)];
    right[uj] = knots[static_cast<std::size_t>(span + j)] - s;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      const double den = right[ur + 1] + left[uj - ur];
      const double tmp = den > 0.0 ? N[ur] / den : 0.0;
      N[ur] = saved + right[ur + 1] * tmp;
      saved = left[uj - ur] * tmp;
    }
    N[uj] = saved;
  }
  return out;
}

Eigen::MatrixXd derivative_control_map(const KnotVector& knots, int r) {
  if (r < 0 || r >= knots.order()) throw InvalidArgument("derivative order must be in [0, order)");
  const int n = knots.ctrl_count();
  Eigen::MatrixXd map = Eigen::MatrixXd::Identity(n, n);
  KnotVector current = knots;
  for (int level = 0; level < r; ++level) {
    const int k = current.order();
    const int rows = current.ctrl_count() - 1;
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, rows + 1);
    for (int i = 0; i < rows; ++i) {
      const double span = current[static_cast<std::size_t>(i + k)] - current[static_cast<std::size_t>(i + 1)];
      const double c = span > 0.0 ? (k - 1) / span : 0.0;
      d(i, i) = -c;
      d(i, i + 1) = c;
    }
    map = d * map;
    current = current.derivative();
  }
  return map;
}

Eigen::MatrixXd derivative_gram(const KnotVector& knots, int r) {
  const Eigen::MatrixXd map = derivative_control_map(knots, r);
  KnotVector dk = knots;
  for (int i = 0; i < r; ++i) dk = dk.derivative();
  return map.transpose() * basis_gram(dk) * map;
}

Eigen::MatrixXd basis_gram(const KnotVector& dk) {
  const int nd = dk.ctrl_count();
  using Rule = boost::math::quadrature::gauss<double, 8>;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(nd, nd);
  for (std::size_t j = 0; j + 1 < dk.size(); ++j) {
    const double a = dk[j];
    const double b = dk[j + 1];
    if (b <= a) continue;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    auto accumulate = [&](double x, double w) {
      const LocalBasis lb = nonzero_basis(dk, mid + half * x);
      for (std::size_t p = 0; p < lb.values.size(); ++p) {
        for (std::size_t q = 0; q < lb.values.size(); ++q) {
          gram(lb.first + static_cast<int>(p), lb.first + static_cast<int>(q)) +=
              w * half * lb.values[p] * lb.values[q];
        }
      }
    };
    const auto& xs = Rule::abscissa();
    const auto& ws = Rule::weights();
    for (std::size_t q = 0; q < xs.size(); ++q) {
      if (xs[q] == 0.0) {
        accumulate(0.0, ws[q]);
      } else {
        accumulate(xs[q], ws[q]);
        accumulate(-xs[q], ws[q]);
      }
    }
  }
  return gram;
}

BSplineCurve::BSplineCurve(std::vector<Vector> control_points, KnotVector knots)
    : ctrl_(std::move(control_points)), knots_(std::move(knots)) {
  if (static_cast<int>(ctrl_.size()) != knots_.ctrl_count())
    throw InvalidArgument("control point count does not match knot vector");
  if (ctrl_.empty() || static_cast<int>(ctrl_.size()) < knots_.order())
    throw InvalidArgument("need at least `order` control points");
  for (const auto& p : ctrl_) {
    if (p.size() != ctrl_.front().size())
      throw InvalidArgument("control points must share one dimension");
  }
}

Vector BSplineCurve::eval(double s) const {
  const LocalBasis lb = nonzero_basis(knots_, s);
  Vector out = Vector::Zero(dim());
  for (std::size_t j = 0; j < lb.values.size(); ++j)
    out += lb.values[j] * ctrl_[static_cast<std::size_t>(lb.first) + j];
  return out;
}

BSplineCurve BSplineCurve::derivative_curve(int r) const {
  if (r < 0 || r >= order()) throw InvalidArgument("derivative order must be in [0, order)");
  std::vector<Vector> pts = ctrl_;
  KnotVector k = knots_;
  for (int level = 0; level < r; ++level) {
    const int ord = k.order();
    std::vector<Vector> next;
    next.reserve(pts.size() - 1);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const double span = k[i + static_cast<std::size_t>(ord)] - k[i + 1];
      if (span > 0.0) {
        next.push_back((ord - 1) / span * (pts[i + 1] - pts[i]));
      } else {
        next.push_back(Vector::Zero(dim()));
      }
    }
    pts = std::move(next);
    k = k.derivative();
  }
  return BSplineCurve(std::move(pts), std::move(k));
}

Vector BSplineCurve::derivative(double s, int r) const {
  if (r == 0) return eval(s);
  return derivative_curve(r).eval(s);
}

std::pair<Vector, Vector> BSplineCurve::derivative_control_bounds(int r) const {
  const BSplineCurve d = derivative_curve(r);
  Vector lo = d.ctrl_.front();
  Vector hi = d.ctrl_.front();
  for (const auto& p : d.ctrl_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return {lo, hi};
}

TimedTrajectory::TimedTrajectory(BSplineCurve curve, double duration)
    : curve_(std::move(curve)), duration_(duration) {
  if (!(duration_ > 0.0) || !std::isfinite(duration_))
    throw InvalidArgument("trajectory duration must be positive");
}

Vector TimedTrajectory::position(double t) const { return derivative(t, 0); }

Vector TimedTrajectory::derivative(double t, int r) const {
  if (!(t >= 0.0 && t <= duration_)) throw DomainError("time outside [0, T]");
  const double s = std::min(1.0, t / duration_);
  return curve_.derivative(s, r) / std::pow(duration_, r);
}

nlohmann::json to_json(const TimedTrajectory& traj) {
  const auto& c = traj.curve();
  nlohmann::json ctrl = nlohmann::json::array();
  for (const auto& p : c.control_points()) ctrl.push_back(std::vector<double>(p.data(), p.data() + p.size()));
  const auto kv = c.knots().values();
  return {{"order", c.order()},
          {"knots", std::vector<double>(kv.begin(), kv.end())},
          {"control_points", ctrl},
          {"duration_s", traj.duration()}};
}

TimedTrajectory trajectory_from_json(const nlohmann::json& j) {
  try {
    const int order = j.at("order").get<int>();
    KnotVector knots(j.at("knots").get<std::vector<double>>(), order);
    std::vector<Vector> ctrl;
    for (const auto& row : j.at("control_points")) {
      const auto v = row.get<std::vector<double>>();
      ctrl.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    return TimedTrajectory(BSplineCurve(std::move(ctrl), std::move(knots)), j.at("duration_s").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed trajectory JSON: ") + e.what());
  }
}

}  // namespace demotraj
