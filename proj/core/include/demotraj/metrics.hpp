#pragma once

#include "demotraj/ingest.hpp"
#include "demotraj/kin.hpp"
#include "demotraj/spline.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <variant>
#include <vector>

namespace demotraj {

/// Maximum absolute third derivative in normalized time s in [0,1], over all joints.
double manj(const TimedTrajectory& traj, int grid_n = 10000);
/// Sampled variant: max |d3q/dt3| * T^3.
double manj(const SampledTrajectory& traj);

/// A maximal run of consecutive samples where one joint exceeds one band.
struct ViolationInterval {
  int joint = 0;
  LimitBand band = LimitBand::position;
  double t_begin = 0.0;
  double t_end = 0.0;
  double max_amount = 0.0;
};

std::vector<ViolationInterval> violations(const SampledTrajectory& traj, const RobotModel& model);
std::vector<ViolationInterval> violations(const TimedTrajectory& traj, const RobotModel& model, double dt = 1e-3);

/// The trajectory on a grid of about dt (ending exactly at T) with analytic derivatives.
SampledTrajectory sample_trajectory(const TimedTrajectory& traj, double dt = 1e-3);

struct ReportEntry {
  std::string label;
  std::variant<TimedTrajectory, SampledTrajectory> traj;
};

struct ComparisonRow {
  std::string label;
  double time_s = 0.0;
  double manj = 0.0;
  int violations = 0;
};

struct ComparisonReport {
  static constexpr int kFormatVersion = 1;
  int version = kFormatVersion;
  std::vector<ComparisonRow> rows;
};

ComparisonReport report(const std::vector<ReportEntry>& entries, const RobotModel& model);

/// `label,time_s,manj,violations`
std::string to_csv(const ComparisonReport& r);
ComparisonReport report_from_csv(const std::string& text);
nlohmann::json to_json(const ComparisonReport& r);
ComparisonReport report_from_json(const nlohmann::json& j);
/// Fixed-width table for terminals.
std::string format_table(const ComparisonReport& r);

}  // namespace demotraj
