#pragma once

#include "demotraj/ingest.hpp"
#include "demotraj/kin.hpp"
#include "demotraj/nlp.hpp"
#include "demotraj/spline.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <vector>

namespace demotraj {

/// Per-waypoint Cartesian box (m, per axis) and orientation tolerance (rad).
struct ToleranceProfile {
  std::vector<Eigen::Vector3d> eps_p;
  std::vector<double> eps_theta;

  static ToleranceProfile uniform(std::size_t m, const Eigen::Vector3d& eps_p, double eps_theta);
  std::size_t size() const { return eps_theta.size(); }
  void validate(std::size_t m) const;
};

nlohmann::json to_json(const ToleranceProfile& tol);
ToleranceProfile tolerances_from_json(const nlohmann::json& j);

inline nlp::Options trajgen_solver_defaults() {
  nlp::Options o;
  o.max_outer = 60;
  o.max_inner = 1000;
  o.opt_tol = 1e-4;
  return o;
}

struct TrajGenConfig {
  double alpha = 1.0;  // duration weight
  double beta = 0.04;  // normalized jerk integral weight
  double gamma = 1.0;  // control point to waypoint configuration weight
  int order = 4;
  /// Half-width of the band around the timing-law duration; nullopt disables it.
  std::optional<double> duration_band = 0.5;
  /// All limits and tolerances are shrunk by this fraction inside the solver.
  double limit_margin = 1e-4;
  nlp::Options solver = trajgen_solver_defaults();

  void validate() const;
};

struct WaypointResidual {
  Eigen::Vector3d position_error = Eigen::Vector3d::Zero();  // |p_f - p_w| per axis
  double angle_error = 0.0;
  double excess = 0.0;  // worst amount beyond the tolerance, 0 when inside
};

struct VerificationReport {
  double max_violation[4] = {0, 0, 0, 0};  // indexed by LimitBand
  std::vector<WaypointResidual> waypoints;
  double start_residual = 0.0;  // max |q_f(0) - Q_w1|
  double goal_residual = 0.0;
  double boundary_velocity = 0.0;  // max |dq| at t = 0 and t = T
  double duration = 0.0;
  double manj = 0.0;
  int samples = 0;

  double max_limit_violation() const;
  double max_tolerance_excess() const;
  bool clean(double slack = 1e-6) const;
};

nlohmann::json to_json(const VerificationReport& r);

struct SmoothTrajectory {
  TimedTrajectory traj;
  std::vector<double> tau;
  ToleranceProfile tolerances;
  VerificationReport report;
  nlp::Solution solution;

  bool ok() const;
};

/// The trajectory-generation NLP. Variable layout: control points row by row
/// (x[i*n + j]) followed by T. Callbacks reference `model`, which must outlive it.
struct TrajGenProblem {
  nlp::Problem problem;
  Vector x0;
  KnotVector knots;
  int ctrl_count = 0;
  int dof = 0;

  TimedTrajectory trajectory(const Vector& x) const;
};

TrajGenProblem build_trajgen_problem(const std::vector<Waypoint>& wps, const std::vector<double>& tau, double t_ref,
                                     const ToleranceProfile& tol, const RobotModel& model, const TrajGenConfig& cfg);

/// `t_ref` is the timing-law total: initial T and centre of the duration band.
/// `warm` reuses a previous solution of the same size (point and multipliers).
SmoothTrajectory generate(const std::vector<Waypoint>& wps, const std::vector<double>& tau, double t_ref,
                          const ToleranceProfile& tol, const RobotModel& model, const TrajGenConfig& cfg = {},
                          const std::optional<nlp::Solution>& warm = std::nullopt);

/// Objective value of a trajectory under cfg (same formula as the solver).
double trajgen_objective(const TimedTrajectory& traj, const std::vector<Waypoint>& wps, const std::vector<double>& tau,
                         const TrajGenConfig& cfg);

/// Dense 1 kHz check of limits, waypoint tolerances and endpoints.
VerificationReport verify(const TimedTrajectory& traj, const RobotModel& model, const std::vector<Waypoint>& wps,
                          const std::vector<double>& tau, const ToleranceProfile& tol);

/// Maximum absolute third derivative with respect to normalized time.
double normalized_max_jerk(const BSplineCurve& curve);

/// {trajectory, tau, tolerances, report, status, objective, warm_start}.
nlohmann::json to_json(const SmoothTrajectory& st);
/// Restores the trajectory, timings, tolerances and warm start; the report is left empty.
SmoothTrajectory smooth_trajectory_from_json(const nlohmann::json& j);

}  // namespace demotraj
