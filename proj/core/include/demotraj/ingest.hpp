#pragma once

#include "demotraj/kin.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace demotraj {

/// Joint-space recording of a demonstration. Timestamps strictly increase.
struct DemoRecording {
  double rate_hz = 10.0;
  std::string model;
  std::vector<double> t;
  std::vector<Vector> q;

  std::size_t size() const { return t.size(); }
  double duration() const { return t.empty() ? 0.0 : t.back() - t.front(); }
  void validate() const;
};

/// A retained demonstration sample: joint configuration plus its end-effector pose.
struct Waypoint {
  int index = 0;  // sample index in the source recording
  Vector q;
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Quaterniond theta = Eigen::Quaterniond::Identity();
};

Waypoint make_waypoint(const RobotModel& model, const Vector& q, int index);

/// Keeps the first sample, then every sample whose end-effector moved at least
/// pos_thresh (m) or rotated at least ang_thresh (rad) away from the last kept
/// one; the final sample is always appended unless it repeats the last kept pose.
std::vector<Waypoint> extract_waypoints(const DemoRecording& rec, const RobotModel& model, double pos_thresh,
                                        double ang_thresh);

struct SampledDerivatives {
  std::vector<Vector> dq, ddq, dddq;
};

/// Second-order central differences inside, one-sided at the ends, applied
/// repeatedly for orders 1..3. Needs at least 4 samples.
SampledDerivatives differentiate_noncausal(const std::vector<double>& t, const std::vector<Vector>& q);

/// Joint trajectory on a time grid with its first three time derivatives.
struct SampledTrajectory {
  std::vector<double> t;
  std::vector<Vector> q, dq, ddq, dddq;

  std::size_t size() const { return t.size(); }
  double duration() const { return t.empty() ? 0.0 : t.back() - t.front(); }
};

/// The recording with non-causally differentiated derivatives.
SampledTrajectory sample_recording(const DemoRecording& rec);

struct SynthSpec {
  std::vector<Vector> skeleton;  // joint configurations the path passes through
  double duration = 10.0;
  double noise_std = 0.0;
  double rate_hz = 10.0;
  std::uint64_t seed = 0;
  std::string model;
};

/// Noise-free path: natural cubic spline through the skeleton, traversed with a
/// minimum-jerk time law over `duration`.
Vector synth_path(const SynthSpec& spec, double t);

/// synth_path sampled at rate_hz plus seeded i.i.d. Gaussian joint noise.
DemoRecording synth_demo(const SynthSpec& spec);

SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);

/// CSV `t,q1,...,qn`; the JSON sidecar {rate_hz, model} sits next to it with
/// the extension replaced by `.json`.
void write_recording(const std::string& csv_path, const DemoRecording& rec);
DemoRecording read_recording(const std::string& csv_path);
std::string sidecar_path(const std::string& csv_path);

/// CSV `t,q1..qn,dq1..dqn,ddq1..ddqn,dddq1..dddqn`. Reading also accepts a plain
/// `t,q1..qn` table and differentiates it non-causally.
void write_sampled_trajectory(const std::string& csv_path, const SampledTrajectory& s);
SampledTrajectory read_sampled_trajectory(const std::string& csv_path);

nlohmann::json waypoints_to_json(const std::vector<Waypoint>& wps);
std::vector<Waypoint> waypoints_from_json(const nlohmann::json& j);

}  // namespace demotraj
