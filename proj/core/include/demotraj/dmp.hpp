#pragma once

#include "demotraj/ingest.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace demotraj {

/// Discrete joint-space DMP, one transformation system per joint sharing a
/// canonical phase:
///   T z' = alpha_z (beta_z (g - y) - z) - alpha_z beta_z (g - y0) x + f(x),  T y' = z,  T x' = -alpha_x x
///   f(x) = x * sum(psi_i (w_i + s_i (x - c_i))) / sum(psi_i) * (g - y0) / (g_d - y0_d)
/// where (y0_d, g_d) are the trained start and goal and each kernel carries a
/// local linear model. Models without slopes behave as plain weighted averages. The (g - y0) x term cancels
/// the spring at the start so a rest-to-rest demonstration has zero forcing
/// target at both ends.
struct DmpModel {
  struct Joint {
    double y0 = 0.0;
    double g = 0.0;
    std::vector<double> weights;
    std::vector<double> slopes;
  };
  double alpha_z = 48.0;
  double beta_z = 12.0;
  double alpha_x = 4.605170185988091;  // x(T) = 0.01
  double duration = 1.0;               // nominal duration T_d
  std::vector<double> centers, widths;
  std::vector<Joint> joints;

  int dof() const { return static_cast<int>(joints.size()); }
  int basis_count() const { return static_cast<int>(centers.size()); }
  void validate() const;
};

struct DmpTrainOptions {
  int n_basis = 25;
  double alpha_z = 48.0;
};

/// Fits the forcing term per joint by locally weighted (linear) regression on
/// Gaussian kernels over the phase. Needs at least 4 samples.
DmpModel train_dmp(const SampledTrajectory& demo, const DmpTrainOptions& opts = {});

/// Euler rollout over [0, duration] at step about dt (the grid is adjusted to end
/// exactly at duration). Derivatives are the analytic ones of the dynamics.
SampledTrajectory rollout(const DmpModel& m, const Vector& start, const Vector& goal, double duration,
                          double dt = 1e-3);
/// Rollout with the trained start and goal.
SampledTrajectory rollout(const DmpModel& m, double duration, double dt = 1e-3);

nlohmann::json to_json(const DmpModel& m);
DmpModel dmp_from_json(const nlohmann::json& j);

}  // namespace demotraj
