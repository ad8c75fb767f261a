#pragma once

#include "demotraj/trajgen.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace demotraj {

/// tau_f R'' = K (C - R) - D R'
struct CommandFilterParams {
  double tau_f = 0.1;
  double K = 100.0;
  double D = 20.0;
  double dt = 0.01;

  void validate() const;
};

/// Gamma(R) = (max - min)(1 - (-R)^exponent) + min, per tolerance kind.
struct ToleranceMapParams {
  double eps_p_max = 0.05;
  double eps_p_min = 0.01;
  double eps_theta_max = 0.3;
  double eps_theta_min = 0.1;
  double exponent = 2.0;

  void validate() const;
  double position(double R) const;
  double angle(double R) const;
};

struct RefineParams {
  double eta = 5.0;         // replay slowdown: V0r = 1 / (eta T_f)
  double vmin_ratio = 0.2;  // Vminr = vmin_ratio V0r
  CommandFilterParams filter;
  ToleranceMapParams tolerance;

  void validate() const;
};

/// State at time t plus the command held over [t, t + dt).
struct RefineSample {
  double t = 0.0;
  double C = 0.0;
  double R = 0.0;
  double v = 0.0;
  double s_r = 0.0;
};

struct RefinementTrace {
  std::vector<RefineSample> samples;
  double V0r = 0.0;
  double Vminr = 0.0;
  double eta = 0.0;
  double dt = 0.0;

  /// Replay time at which s_r reached 1.
  double end_time() const { return samples.empty() ? 0.0 : samples.back().t; }
  bool complete() const { return !samples.empty() && samples.back().s_r >= 1.0; }
};

struct RefinementResult {
  std::vector<double> tau_r;
  ToleranceProfile tolerances;
  RefinementTrace trace;
  double source_duration = 0.0;  // T_f of the replayed trajectory
};

/// Exact zero-order-hold discretization of the command filter. The internal
/// state is left unclamped; the output is clamped to [-1, 0].
class CommandFilter {
 public:
  explicit CommandFilter(const CommandFilterParams& p);

  /// Advances one dt with C held; returns the clamped output at the end of the step.
  double step(double C);
  double output() const;
  /// Largest amount the unclamped state has left [-1, 0] so far.
  double overshoot() const { return overshoot_; }

 private:
  Eigen::Matrix2d phi_;
  Eigen::Vector2d gamma_;
  Eigen::Vector2d x_ = Eigen::Vector2d::Zero();
  double overshoot_ = 0.0;
};

/// Samples of the filtered command for a held input sequence, R[0] = 0.
std::vector<double> filter_command(const std::vector<double>& C, const CommandFilterParams& p);

/// v' = R, s_r' = v with R held per dt, v clamped to [Vminr, V0r], integrated
/// exactly. Until the first braking tick s_r = V0r t in closed form, so an
/// unbraked replay reproduces the nominal time map bit for bit.
class TimeMap {
 public:
  TimeMap(double V0r, double Vminr, double dt);

  /// Advances one dt, or less on the tick where s_r reaches 1.
  void step(double R);
  bool done() const { return done_; }
  double t() const { return t_; }
  double v() const { return v_; }
  double s() const { return s_; }

 private:
  double V0r_, Vminr_, dt_;
  long tick_ = 0;
  bool braked_ = false;
  bool done_ = false;
  double t_ = 0.0, v_, s_ = 0.0;
};

/// Incremental filter plus time map; the offline and online paths both drive this.
class Refiner {
 public:
  Refiner(double t_f, const RefineParams& p);

  /// Consumes the command for the current tick and advances one dt.
  void step(double C);
  bool done() const { return map_.done(); }
  const RefineSample& current() const { return cur_; }
  const RefinementTrace& trace() const { return trace_; }
  double V0r() const { return trace_.V0r; }

 private:
  CommandFilter filter_;
  RefinementTrace trace_;
  TimeMap map_;
  RefineSample cur_;
};

/// Integrates v' = R, s_r' = v from v = V0r, with R held per dt, v clamped to
/// [Vminr, V0r] and s_r stopping at 1. Samples beyond R.size() use R = 0.
RefinementTrace integrate_time_map(const std::vector<double>& R, double V0r, double Vminr, double dt);

/// tau_i^r = s_r^{-1}(tau_i) / s_r^{-1}(1) by piecewise-linear inversion.
/// Throws IncompleteReplay when s_r never reaches the last tau.
std::vector<double> remap_timings(const RefinementTrace& trace, const std::vector<double>& tau);

/// Gamma evaluated at the replay time each waypoint was passed.
ToleranceProfile extract_tolerances(const RefinementTrace& trace, const std::vector<double>& tau,
                                    const ToleranceMapParams& p);

/// Replays the held command sequence C (then C = 0) until s_r reaches 1.
RefinementResult refine(const std::vector<double>& C, double t_f, const std::vector<double>& tau,
                        const RefineParams& p = {});
/// Finalizes a completed trace: timings and tolerances.
RefinementResult finalize(const RefinementTrace& trace, double t_f, const std::vector<double>& tau,
                          const ToleranceMapParams& p);

/// Stage E: re-runs trajectory generation with the refined timings and tolerances,
/// warm-started from the smoothed trajectory's solution.
SmoothTrajectory fine_tune(const std::vector<Waypoint>& wps, const SmoothTrajectory& smoothed,
                           const RefinementResult& refinement, const RobotModel& model,
                           const TrajGenConfig& cfg = {});

/// Throws InvalidArgument unless tau has 2+ strictly increasing entries from 0 to 1.
void check_timings(const std::vector<double>& tau);

/// Command file `t,C` (or a full `t,C,R,v,s_r` trace) sampled and held onto
/// the dt grid; returns the C column.
std::vector<double> read_command_trace(const std::string& path, double dt);
void write_command_trace(const std::string& path, const std::vector<double>& C, double dt);

/// Full session trace `t,C,R,v,s_r`.
void write_trace_csv(const std::string& path, const RefinementTrace& trace);
RefinementTrace read_trace_csv(const std::string& path);

nlohmann::json to_json(const RefinementResult& r);
RefinementResult refinement_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RefineParams& p);
/// Keys missing from j keep their value from base.
RefineParams refine_params_from_json(const nlohmann::json& j, const RefineParams& base = {});

}  // namespace demotraj
