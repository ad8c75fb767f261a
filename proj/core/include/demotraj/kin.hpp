#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace demotraj {

using Vector = Eigen::VectorXd;

/// One modified-DH row: T = RotX(alpha) * TransX(a) * RotZ(q + theta_offset) * TransZ(d).
struct DhRow {
  double a = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double theta_offset = 0.0;
};

enum class LimitBand { position, velocity, acceleration, jerk };
const char* to_string(LimitBand band);

struct KinematicLimits {
  Vector q_min, q_max;
  Vector v_min, v_max;
  Vector a_min, a_max;
  Vector j_min, j_max;

  const Vector& lower(LimitBand band) const;
  const Vector& upper(LimitBand band) const;
  /// Throws InvalidArgument unless every band has length n, min < max and (for
  /// derivative bands) contains zero.
  void validate(int n) const;
};

/// End-effector pose; the quaternion is unit length with w >= 0.
struct Pose {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Quaterniond theta = Eigen::Quaterniond::Identity();
};

/// Canonical representative of a rotation: normalized, w >= 0.
Eigen::Quaterniond canonical(const Eigen::Quaterniond& q);

class RobotModel {
 public:
  RobotModel(std::string name, std::vector<DhRow> joints, KinematicLimits limits,
             Eigen::Isometry3d tool = Eigen::Isometry3d::Identity());

  const std::string& name() const { return name_; }
  int joint_count() const { return static_cast<int>(joints_.size()); }
  const std::vector<DhRow>& joints() const { return joints_; }
  const KinematicLimits& limits() const { return limits_; }
  const Eigen::Isometry3d& tool() const { return tool_; }

 private:
  std::string name_;
  std::vector<DhRow> joints_;
  KinematicLimits limits_;
  Eigen::Isometry3d tool_;
};

Pose fk(const RobotModel& model, const Vector& q);

/// Pose together with its derivatives with respect to q. `dquat` columns hold
/// d(w,x,y,z)/dq_i of the quaternion *before* sign canonicalization (`raw_theta`).
struct PoseJacobian {
  Pose pose;
  Eigen::Quaterniond raw_theta;
  Eigen::Matrix<double, 3, Eigen::Dynamic> dp;
  Eigen::Matrix<double, 4, Eigen::Dynamic> dquat;
};
PoseJacobian fk_jacobian(const RobotModel& model, const Vector& q);

/// Absolute rotation angle between two unit quaternions, in [0, pi].
double quat_diff(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

struct LimitViolation {
  int joint = 0;
  LimitBand band = LimitBand::position;
  double amount = 0.0;  // distance beyond the violated bound, > 0
};

std::vector<LimitViolation> check_limits(const RobotModel& model, const Vector& q, const Vector& dq,
                                         const Vector& ddq, const Vector& dddq);

/// Model file: {name, convention:"modified_dh", joints:[{a,d,alpha,theta_offset}],
/// limits:{q_min,...,j_max}, tool?:{xyz:[3], quat_wxyz:[4]}}.
RobotModel model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RobotModel& model);
RobotModel load_model(const std::string& path);

}  // namespace demotraj
