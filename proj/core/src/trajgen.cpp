#include "demotraj/trajgen.hpp"

#include "demotraj/errors.hpp"
#include "demotraj/io.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace demotraj {

ToleranceProfile ToleranceProfile::uniform(std::size_t m, const Eigen::Vector3d& eps_p, double eps_theta) {
  ToleranceProfile t;
  t.eps_p.assign(m, eps_p);
  t.eps_theta.assign(m, eps_theta);
  return t;
}

void ToleranceProfile::validate(std::size_t m) const {
  if (eps_p.size() != m || eps_theta.size() != m)
    throw InvalidArgument("tolerance profile needs one entry per waypoint");
  for (std::size_t i = 0; i < m; ++i) {
    if (!(eps_p[i].minCoeff() > 0.0) || !(eps_theta[i] > 0.0))
      throw InvalidArgument("tolerances must be positive (waypoint " + std::to_string(i) + ")");
  }
}

nlohmann::json to_json(const ToleranceProfile& tol) {
  nlohmann::json p = nlohmann::json::array();
  for (const auto& e : tol.eps_p) p.push_back({e.x(), e.y(), e.z()});
  return {{"eps_p", p}, {"eps_theta", tol.eps_theta}};
}

ToleranceProfile tolerances_from_json(const nlohmann::json& j) {
  ToleranceProfile t;
  for (const auto& e : io::require(j, "eps_p")) {
    const auto v = io::doubles_from_json(e);
    if (v.size() != 3) throw InvalidArgument("eps_p entries need 3 components");
    t.eps_p.emplace_back(v[0], v[1], v[2]);
  }
  t.eps_theta = io::doubles_from_json(io::require(j, "eps_theta"));
  return t;
}

void TrajGenConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw InvalidArgument("cost weights must be non-negative");
  if (!(alpha > 0.0 || beta > 0.0 || gamma > 0.0)) throw InvalidArgument("at least one cost weight must be positive");
  if (order < 2) throw InvalidArgument("spline order must be at least 2");
  if (duration_band && !(*duration_band > 0.0)) throw InvalidArgument("duration band must be positive");
  if (!(limit_margin >= 0.0 && limit_margin < 1.0)) throw InvalidArgument("limit_margin must be in [0, 1)");
}

double VerificationReport::max_limit_violation() const {
  return *std::max_element(std::begin(max_violation), std::end(max_violation));
}

double VerificationReport::max_tolerance_excess() const {
  double e = 0.0;
  for (const auto& w : waypoints) e = std::max(e, w.excess);
  return e;
}

bool VerificationReport::clean(double slack) const {
  return max_limit_violation() <= slack && max_tolerance_excess() <= slack && start_residual <= 1e-9 &&
         goal_residual <= 1e-9 && boundary_velocity <= 1e-9;
}

nlohmann::json to_json(const VerificationReport& r) {
  nlohmann::json bands;
  for (int b = 0; b < 4; ++b) bands[to_string(static_cast<LimitBand>(b))] = r.max_violation[b];
  nlohmann::json wp = nlohmann::json::array();
  for (const auto& w : r.waypoints) {
    wp.push_back({{"position_error", {w.position_error.x(), w.position_error.y(), w.position_error.z()}},
                  {"angle_error", w.angle_error},
                  {"excess", w.excess}});
  }
  return {{"max_violation_per_band", bands},
          {"waypoint_residuals", wp},
          {"start_residual", r.start_residual},
          {"goal_residual", r.goal_residual},
          {"boundary_velocity", r.boundary_velocity},
          {"duration_s", r.duration},
          {"manj", r.manj},
          {"samples", r.samples}};
}

bool SmoothTrajectory::ok() const {
  return (solution.status == nlp::Status::converged || solution.status == nlp::Status::max_iter) && report.clean();
}

namespace {

// Tolerance rows are divided by max(tolerance, floor): relative for ordinary
// tolerances, absolute for tiny ones so their gradients stay bounded.
constexpr double kPosScaleFloor = 1e-3;
constexpr double kAngScaleFloor = 1e-6;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int control_count(std::size_t m, int order) { return std::max(static_cast<int>(m), order); }

/// Joint configuration each control point is pulled towards. With as many
/// control points as waypoints this is the waypoint itself; otherwise the
/// waypoint polyline over tau is sampled at the Greville abscissae.
RowMatrix reference_configs(const std::vector<Waypoint>& wps, const std::vector<double>& tau, const KnotVector& kv) {
  const int nbar = kv.ctrl_count();
  const int n = static_cast<int>(wps.front().q.size());
  RowMatrix q(nbar, n);
  if (static_cast<std::size_t>(nbar) == wps.size()) {
    for (int i = 0; i < nbar; ++i) q.row(i) = wps[static_cast<std::size_t>(i)].q.transpose();
    return q;
  }
  const int k = kv.order();
  for (int i = 0; i < nbar; ++i) {
    double g = 0.0;
    for (int l = 1; l < k; ++l) g += kv[static_cast<std::size_t>(i + l)];
    g /= (k - 1);
    std::size_t seg = 0;
    while (seg + 2 < tau.size() && g > tau[seg + 1]) ++seg;
    const double w = std::clamp((g - tau[seg]) / (tau[seg + 1] - tau[seg]), 0.0, 1.0);
    q.row(i) = ((1.0 - w) * wps[seg].q + w * wps[seg + 1].q).transpose();
  }
  return q;
}

void check_inputs(const std::vector<Waypoint>& wps, const std::vector<double>& tau, const RobotModel& model) {
  if (wps.size() < 2) throw InvalidArgument("trajectory generation needs at least 2 waypoints");
  if (tau.size() != wps.size()) throw InvalidArgument("need one tau per waypoint");
  if (tau.front() != 0.0 || tau.back() != 1.0) throw InvalidArgument("tau must start at 0 and end at 1");
  for (std::size_t i = 1; i < tau.size(); ++i)
    if (!(tau[i] > tau[i - 1])) throw InvalidArgument("tau must be strictly increasing");
  for (const auto& w : wps)
    if (w.q.size() != model.joint_count()) throw InvalidArgument("waypoint joint count does not match the model");
}

/// Jerk integral as (M P)^T G (M P): differencing first keeps the value accurate
/// where P^T (M^T G M) P would cancel catastrophically.
struct JerkForm {
  Eigen::MatrixXd map, gram;
  JerkForm(const KnotVector& kv, int r) : map(derivative_control_map(kv, r)) {
    KnotVector dk = kv;
    for (int i = 0; i < r; ++i) dk = dk.derivative();
    gram = basis_gram(dk);
  }
};

double objective_value(const Eigen::Ref<const RowMatrix>& p, double t, const JerkForm& jf, const RowMatrix& q,
                       const TrajGenConfig& cfg) {
  const RowMatrix d = jf.map * p;
  return cfg.alpha * t + cfg.beta * (d.transpose() * jf.gram * d).trace() + cfg.gamma * (p - q).squaredNorm();
}

}  // namespace

double normalized_max_jerk(const BSplineCurve& curve) {
  if (curve.order() == 4) {
    // Third derivative of a cubic is piecewise constant: its control points are exact.
    const auto [lo, hi] = curve.derivative_control_bounds(3);
    return std::max(hi.maxCoeff(), -lo.minCoeff());
  }
  if (curve.order() < 4) return 0.0;
  double m = 0.0;
  for (int i = 0; i <= 10000; ++i) m = std::max(m, curve.derivative(i / 10000.0, 3).cwiseAbs().maxCoeff());
  return m;
}

double trajgen_objective(const TimedTrajectory& traj, const std::vector<Waypoint>& wps, const std::vector<double>& tau,
                         const TrajGenConfig& cfg) {
  const auto& c = traj.curve();
  RowMatrix p(c.size(), c.dim());
  for (int i = 0; i < c.size(); ++i) p.row(i) = c.control_points()[static_cast<std::size_t>(i)].transpose();
  return objective_value(p, traj.duration(), JerkForm(c.knots(), std::min(3, c.order() - 1)),
                         reference_configs(wps, tau, c.knots()), cfg);
}

VerificationReport verify(const TimedTrajectory& traj, const RobotModel& model, const std::vector<Waypoint>& wps,
                          const std::vector<double>& tau, const ToleranceProfile& tol) {
  if (tau.size() != wps.size()) throw InvalidArgument("need one tau per waypoint");
  tol.validate(wps.size());
  VerificationReport r;
  const double t_end = traj.duration();
  r.duration = t_end;
  const int steps = std::max(1000, static_cast<int>(std::ceil(t_end * 1000.0)));
  const BSplineCurve& c = traj.curve();
  for (int i = 0; i <= steps; ++i) {
    const double s = static_cast<double>(i) / steps;
    const Vector q = c.eval(s);
    const Vector dq = c.derivative(s, 1) / t_end;
    const Vector ddq = c.derivative(s, 2) / (t_end * t_end);
    const Vector dddq = c.order() > 3 ? Vector(c.derivative(s, 3) / (t_end * t_end * t_end)) : Vector::Zero(q.size());
    for (const auto& v : check_limits(model, q, dq, ddq, dddq)) {
      double& slot = r.max_violation[static_cast<int>(v.band)];
      slot = std::max(slot, v.amount);
    }
  }
  r.samples = steps + 1;
  for (std::size_t i = 0; i < wps.size(); ++i) {
    const Pose pose = fk(model, c.eval(tau[i]));
    WaypointResidual w;
    w.position_error = (pose.p - wps[i].p).cwiseAbs();
    w.angle_error = quat_diff(pose.theta, wps[i].theta);
    w.excess = std::max({0.0, (w.position_error - tol.eps_p[i]).maxCoeff(), w.angle_error - tol.eps_theta[i]});
    r.waypoints.push_back(w);
  }
  r.start_residual = (c.eval(0.0) - wps.front().q).cwiseAbs().maxCoeff();
  r.goal_residual = (c.eval(1.0) - wps.back().q).cwiseAbs().maxCoeff();
  r.boundary_velocity = std::max(traj.derivative(0.0, 1).cwiseAbs().maxCoeff(),
                                 traj.derivative(t_end, 1).cwiseAbs().maxCoeff());
  r.manj = normalized_max_jerk(c);
  return r;
}

TrajGenProblem build_trajgen_problem(const std::vector<Waypoint>& wps, const std::vector<double>& tau, double t_ref,
                                     const ToleranceProfile& tol, const RobotModel& model, const TrajGenConfig& cfg) {
  cfg.validate();
  check_inputs(wps, tau, model);
  tol.validate(wps.size());
  if (!(t_ref > 0.0)) throw InvalidArgument("reference duration must be positive");

  const int n = model.joint_count();
  const int m = static_cast<int>(wps.size());
  const int nbar = control_count(wps.size(), cfg.order);
  const KnotVector kv = KnotVector::clamped_uniform(nbar, cfg.order);
  const int np = nbar * n;
  const int dim = np + 1;
  const int ti = np;
  const auto& lim = model.limits();
  const double keep = 1.0 - cfg.limit_margin;

  const JerkForm jf(kv, std::min(3, cfg.order - 1));
  const Eigen::MatrixXd h = jf.map.transpose() * jf.gram * jf.map;
  const RowMatrix qref = reference_configs(wps, tau, kv);

  nlp::Problem p;
  p.dim = dim;
  p.lower.resize(dim);
  p.upper.resize(dim);
  for (int i = 0; i < nbar; ++i) {
    for (int j = 0; j < n; ++j) {
      const double mid = 0.5 * (lim.q_min[j] + lim.q_max[j]);
      p.lower[i * n + j] = mid + keep * (lim.q_min[j] - mid);
      p.upper[i * n + j] = mid + keep * (lim.q_max[j] - mid);
    }
  }
  // Exact start and goal with zero boundary velocity.
  for (int j = 0; j < n; ++j) {
    for (int i : {0, 1}) p.lower[i * n + j] = p.upper[i * n + j] = wps.front().q[j];
    for (int i : {nbar - 2, nbar - 1}) p.lower[i * n + j] = p.upper[i * n + j] = wps.back().q[j];
  }
  p.lower[ti] = 1e-3;
  p.upper[ti] = std::numeric_limits<double>::infinity();
  if (cfg.duration_band) {
    p.lower[ti] = std::max(1e-3, t_ref - *cfg.duration_band);
    p.upper[ti] = t_ref + *cfg.duration_band;
  }

  auto ctrl = [nbar, n](const Vector& x) { return Eigen::Map<const RowMatrix>(x.data(), nbar, n); };

  p.objective.value = [=](const Vector& x) { return objective_value(ctrl(x), x[ti], jf, qref, cfg); };
  p.objective.gradient = [=](const Vector& x, nlp::VectorRef g) {
    const auto pm = ctrl(x);
    Eigen::Map<RowMatrix> gp(g.data(), nbar, n);
    const RowMatrix d = jf.map * pm;
    gp = 2.0 * cfg.beta * (jf.map.transpose() * (jf.gram * d)) + 2.0 * cfg.gamma * (pm - qref);
    g[ti] = cfg.alpha;
  };
  p.objective.hessian = [=](const Vector&, Eigen::Ref<Eigen::MatrixXd> hs) {
    hs.setZero();
    for (int i = 0; i < nbar; ++i)
      for (int k = 0; k < nbar; ++k) {
        const double v = 2.0 * cfg.beta * h(i, k) + (i == k ? 2.0 * cfg.gamma : 0.0);
        for (int j = 0; j < n; ++j) hs(i * n + j, k * n + j) = v;
      }
  };

  // Derivative bounds per order r, polynomial in T: d / limit - T^r <= 0 on each side.
  const int max_r = std::min(3, cfg.order - 1);
  for (int r = 1; r <= max_r; ++r) {
    const Eigen::MatrixXd dmap = derivative_control_map(kv, r);
    const LimitBand band = static_cast<LimitBand>(r);
    const Vector inv_up = (keep * lim.upper(band)).cwiseInverse();
    const Vector inv_lo = (-keep * lim.lower(band)).cwiseInverse();
    const int rows = nbar - r;
    nlp::ConstraintBlock b;
    b.name = to_string(band);
    b.size = rows * n * 2;
    b.value = [=](const Vector& x, nlp::VectorRef c) {
      const RowMatrix d = dmap * ctrl(x);
      const double tr = std::pow(x[ti], r);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < n; ++j) {
          c[2 * (i * n + j)] = d(i, j) * inv_up[j] - tr;
          c[2 * (i * n + j) + 1] = -d(i, j) * inv_lo[j] - tr;
        }
      }
    };
    b.jacobian_transpose = [=](const Vector& x, const Vector& w, nlp::VectorRef g) {
      RowMatrix wd(rows, n);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < n; ++j) wd(i, j) = w[2 * (i * n + j)] * inv_up[j] - w[2 * (i * n + j) + 1] * inv_lo[j];
      Eigen::Map<RowMatrix> gp(g.data(), nbar, n);
      gp += dmap.transpose() * wd;
      g[ti] -= w.sum() * r * std::pow(x[ti], r - 1);
    };
    b.jacobian = [=](const Vector& x, Eigen::Ref<Eigen::MatrixXd> jac) {
      jac.setZero();
      const double dt = -r * std::pow(x[ti], r - 1);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < n; ++j) {
          for (int k = 0; k < nbar; ++k) {
            jac(2 * (i * n + j), k * n + j) = dmap(i, k) * inv_up[j];
            jac(2 * (i * n + j) + 1, k * n + j) = -dmap(i, k) * inv_lo[j];
          }
          jac(2 * (i * n + j), ti) = jac(2 * (i * n + j) + 1, ti) = dt;
        }
    };
    p.inequalities.push_back(std::move(b));
  }

  // Cartesian tolerances at the interior waypoints, evaluated at xi(tau_i).
  struct Site {
    int wp;
    LocalBasis basis;
    Eigen::Vector3d p, eps, scale;
    Eigen::Vector4d theta;  // w, x, y, z
    double s2, s2_scale;
  };
  std::vector<Site> sites;
  for (int i = 1; i + 1 < m; ++i) {
    Site s;
    s.wp = i;
    s.basis = nonzero_basis(kv, tau[static_cast<std::size_t>(i)]);
    s.p = wps[static_cast<std::size_t>(i)].p;
    s.eps = keep * tol.eps_p[static_cast<std::size_t>(i)];
    s.scale = s.eps.cwiseMax(kPosScaleFloor).cwiseInverse();
    const auto& th = wps[static_cast<std::size_t>(i)].theta;
    s.theta = Eigen::Vector4d(th.w(), th.x(), th.y(), th.z());
    const double half = std::sin(0.5 * keep * tol.eps_theta[static_cast<std::size_t>(i)]);
    s.s2 = half * half;
    s.s2_scale = 1.0 / std::max(s.s2, kAngScaleFloor);
    sites.push_back(std::move(s));
  }
  if (!sites.empty()) {
    auto config_at = [=](const Vector& x, const Site& s) {
      const auto pm = ctrl(x);
      Vector q = Vector::Zero(n);
      for (std::size_t l = 0; l < s.basis.values.size(); ++l)
        q += s.basis.values[l] * pm.row(s.basis.first + static_cast<int>(l)).transpose();
      return q;
    };
    nlp::ConstraintBlock b;
    b.name = "tolerance";
    b.size = static_cast<int>(sites.size()) * 7;
    b.value = [=, &model](const Vector& x, nlp::VectorRef c) {
      for (std::size_t k = 0; k < sites.size(); ++k) {
        const Site& s = sites[k];
        const Pose pose = fk(model, config_at(x, s));
        const Eigen::Vector3d e = pose.p - s.p;
        for (int a = 0; a < 3; ++a) {
          c[7 * k + 2 * a] = (e[a] - s.eps[a]) * s.scale[a];
          c[7 * k + 2 * a + 1] = (-e[a] - s.eps[a]) * s.scale[a];
        }
        const double dot = pose.theta.w() * s.theta[0] + pose.theta.x() * s.theta[1] +
                           pose.theta.y() * s.theta[2] + pose.theta.z() * s.theta[3];
        c[7 * k + 6] = (1.0 - dot * dot - s.s2) * s.s2_scale;
      }
    };
    b.jacobian_transpose = [=, &model](const Vector& x, const Vector& w, nlp::VectorRef g) {
      Eigen::Map<RowMatrix> gp(g.data(), nbar, n);
      for (std::size_t k = 0; k < sites.size(); ++k) {
        const Site& s = sites[k];
        const PoseJacobian pj = fk_jacobian(model, config_at(x, s));
        Eigen::Vector3d wp;
        for (int a = 0; a < 3; ++a) wp[a] = (w[7 * k + 2 * a] - w[7 * k + 2 * a + 1]) * s.scale[a];
        const auto& rt = pj.raw_theta;
        const double dot = rt.w() * s.theta[0] + rt.x() * s.theta[1] + rt.y() * s.theta[2] + rt.z() * s.theta[3];
        const Vector gq = pj.dp.transpose() * wp +
                          w[7 * k + 6] * s.s2_scale * (-2.0 * dot) * (pj.dquat.transpose() * s.theta);
        for (std::size_t l = 0; l < s.basis.values.size(); ++l)
          gp.row(s.basis.first + static_cast<int>(l)) += s.basis.values[l] * gq.transpose();
      }
    };
    b.jacobian = [=, &model](const Vector& x, Eigen::Ref<Eigen::MatrixXd> jac) {
      jac.setZero();
      for (std::size_t k = 0; k < sites.size(); ++k) {
        const Site& s = sites[k];
        const PoseJacobian pj = fk_jacobian(model, config_at(x, s));
        const auto& rt = pj.raw_theta;
        const double dot = rt.w() * s.theta[0] + rt.x() * s.theta[1] + rt.y() * s.theta[2] + rt.z() * s.theta[3];
        Eigen::MatrixXd dq(7, n);
        for (int a = 0; a < 3; ++a) {
          dq.row(2 * a) = s.scale[a] * pj.dp.row(a);
          dq.row(2 * a + 1) = -s.scale[a] * pj.dp.row(a);
        }
        dq.row(6) = (s.s2_scale * -2.0 * dot) * (pj.dquat.transpose() * s.theta).transpose();
        for (std::size_t l = 0; l < s.basis.values.size(); ++l) {
          const int row = s.basis.first + static_cast<int>(l);
          jac.block(7 * static_cast<int>(k), row * n, 7, n) += s.basis.values[l] * dq;
        }
      }
    };
    p.inequalities.push_back(std::move(b));
  }

  // Inverse of the objective's control-point Hessian on the free rows.
  const int free_first = 2, free_count = std::max(0, nbar - 4);
  if (free_count > 0 && (cfg.beta > 0.0 || cfg.gamma > 0.0)) {
    Eigen::MatrixXd hess = 2.0 * cfg.beta * h.block(free_first, free_first, free_count, free_count);
    hess.diagonal().array() += 2.0 * cfg.gamma;
    const double floor = 1e-9 * std::max(1.0, hess.diagonal().maxCoeff());
    hess.diagonal().array() += floor;
    const Eigen::LLT<Eigen::MatrixXd> llt(hess);
    // T has no objective curvature; its effective curvature comes from the active
    // derivative bounds. A fixed scale tuned on the bundled fixture (0.03 .. 0.1 all work).
    const double t_scale = 0.1;
    p.precondition = [=](const Vector& in, nlp::VectorRef out) {
      out = in;
      Eigen::Map<const RowMatrix> pin(in.data(), nbar, n);
      Eigen::Map<RowMatrix> pout(out.data(), nbar, n);
      pout.middleRows(free_first, free_count) = llt.solve(pin.middleRows(free_first, free_count));
      out[ti] = in[ti] * t_scale;
    };
  }

  Vector x0(dim);
  Eigen::Map<RowMatrix>(x0.data(), nbar, n) = qref;
  x0[ti] = std::clamp(t_ref, p.lower[ti], p.upper[ti]);
  return TrajGenProblem{std::move(p), std::move(x0), kv, nbar, n};
}

TimedTrajectory TrajGenProblem::trajectory(const Vector& x) const {
  std::vector<Vector> cps;
  for (int i = 0; i < ctrl_count; ++i) cps.push_back(x.segment(i * dof, dof));
  return TimedTrajectory(BSplineCurve(std::move(cps), knots), x[ctrl_count * dof]);
}

SmoothTrajectory generate(const std::vector<Waypoint>& wps, const std::vector<double>& tau, double t_ref,
                          const ToleranceProfile& tol, const RobotModel& model, const TrajGenConfig& cfg,
                          const std::optional<nlp::Solution>& warm) {
  const TrajGenProblem tp = build_trajgen_problem(wps, tau, t_ref, tol, model, cfg);
  Vector x0 = tp.x0;
  std::optional<nlp::WarmStart> ws;
  if (warm && warm->x.size() == tp.problem.dim) {
    x0 = warm->x;
    ws = warm->warm_start();
  }
  nlp::Solution sol = nlp::solve(tp.problem, x0, cfg.solver, ws);
  TimedTrajectory traj = tp.trajectory(sol.x);
  VerificationReport report = verify(traj, model, wps, tau, tol);
  if (sol.status == nlp::Status::infeasible) {
    sol.diagnostic += "; max limit violation " + std::to_string(report.max_limit_violation()) +
                      ", max tolerance excess " + std::to_string(report.max_tolerance_excess());
  }
  return SmoothTrajectory{std::move(traj), tau, tol, std::move(report), std::move(sol)};
}

nlohmann::json to_json(const SmoothTrajectory& st) {
  return {{"trajectory", to_json(st.traj)},
          {"tau", st.tau},
          {"tolerances", to_json(st.tolerances)},
          {"report", to_json(st.report)},
          {"status", nlp::to_string(st.solution.status)},
          {"objective", st.solution.objective_value},
          {"warm_start",
           {{"x", io::to_json(st.solution.x)},
            {"eq_multipliers", io::to_json(st.solution.eq_multipliers)},
            {"ineq_multipliers", io::to_json(st.solution.ineq_multipliers)},
            {"penalty", st.solution.penalty}}}};
}

SmoothTrajectory smooth_trajectory_from_json(const nlohmann::json& j) {
  SmoothTrajectory st{trajectory_from_json(io::require(j, "trajectory")), io::doubles_from_json(io::require(j, "tau")),
                      {}, {}, {}};
  if (j.contains("tolerances")) st.tolerances = tolerances_from_json(j.at("tolerances"));
  if (j.contains("warm_start")) {
    const auto& w = j.at("warm_start");
    try {
      st.solution.x = io::vector_from_json(w.at("x"));
      st.solution.eq_multipliers = io::vector_from_json(w.at("eq_multipliers"));
      st.solution.ineq_multipliers = io::vector_from_json(w.at("ineq_multipliers"));
      st.solution.penalty = w.at("penalty").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("malformed warm_start: ") + e.what());
    }
  }
  return st;
}

}  // namespace demotraj
