#pragma once

#include "demotraj/ingest.hpp"
#include "demotraj/kin.hpp"
#include "demotraj/nlp.hpp"
#include "demotraj/spline.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace demotraj {

/// The timing problem is a linear program; its augmented Lagrangian stalls
/// around 1e-4 relative stationarity once the objective is settled to ~1e-9.
inline nlp::Options timing_solver_defaults() {
  nlp::Options o;
  o.opt_tol = 1e-3;
  o.feas_tol = 1e-7;
  return o;
}

struct TimingOptions {
  int order = 4;
  int ctrl_per_segment = 4;
  double min_duration = 1e-3;  // lower bound on every segment duration
  /// Velocity limits are shrunk by this fraction so solver tolerance cannot push
  /// the sampled law past the true limit.
  double limit_margin = 1e-4;
  nlp::Options solver = timing_solver_defaults();
};

/// Piecewise minimum-time timing law through all waypoints.
struct TimingResult {
  std::vector<double> segment_durations;
  std::vector<BSplineCurve> segments;  // each in its own normalized time
  std::vector<double> tau;             // one per waypoint, 0 .. 1
  nlp::Solution solution;

  double total() const;
  bool ok() const;  // converged, or stopped early at a feasible point
  /// Joint position of the concatenated law at absolute time t.
  Vector position(double t) const;
  /// r-th time derivative at absolute time t.
  Vector derivative(double t, int r) const;
};

/// Minimizes the summed segment durations under joint position and velocity
/// limits, with exact waypoint interpolation, zero boundary velocity and C1
/// junctions. Acceleration and jerk are ignored at this stage.
TimingResult solve_timing(const std::vector<Waypoint>& wps, const RobotModel& model, const TimingOptions& opts = {});

/// tau_i = (sum of the first i durations) / (sum of all durations).
std::vector<double> normalized_times(const std::vector<double>& durations);

nlohmann::json to_json(const TimingResult& r);

}  // namespace demotraj
