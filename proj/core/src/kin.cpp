#include "demotraj/kin.hpp"

#include "demotraj/errors.hpp"

#include <algorithm>
#include <cmath>

namespace demotraj {

const char* to_string(LimitBand band) {
  switch (band) {
    case LimitBand::position: return "pos";
    case LimitBand::velocity: return "vel";
    case LimitBand::acceleration: return "acc";
    case LimitBand::jerk: return "jerk";
  }
  return "?";
}

const Vector& KinematicLimits::lower(LimitBand band) const {
  switch (band) {
    case LimitBand::position: return q_min;
    case LimitBand::velocity: return v_min;
    case LimitBand::acceleration: return a_min;
    case LimitBand::jerk: return j_min;
  }
  return q_min;
}

const Vector& KinematicLimits::upper(LimitBand band) const {
  switch (band) {
    case LimitBand::position: return q_max;
    case LimitBand::velocity: return v_max;
    case LimitBand::acceleration: return a_max;
    case LimitBand::jerk: return j_max;
  }
  return q_max;
}

void KinematicLimits::validate(int n) const {
  for (auto band : {LimitBand::position, LimitBand::velocity, LimitBand::acceleration, LimitBand::jerk}) {
    const Vector& lo = lower(band);
    const Vector& hi = upper(band);
    if (lo.size() != n || hi.size() != n)
      throw InvalidArgument(std::string("limit band '") + to_string(band) + "' has wrong length");
    for (int i = 0; i < n; ++i) {
      if (!(lo[i] < hi[i]))
        throw InvalidArgument(std::string("limit band '") + to_string(band) + "' needs min < max");
      if (band != LimitBand::position && !(lo[i] <= 0.0 && hi[i] >= 0.0))
        throw InvalidArgument(std::string("limit band '") + to_string(band) + "' must contain zero");
    }
  }
}

Eigen::Quaterniond canonical(const Eigen::Quaterniond& q) {
  Eigen::Quaterniond out = q.normalized();
  if (out.w() < 0.0) out.coeffs() *= -1.0;
  return out;
}

RobotModel::RobotModel(std::string name, std::vector<DhRow> joints, KinematicLimits limits,
                       Eigen::Isometry3d tool)
    : name_(std::move(name)), joints_(std::move(joints)), limits_(std::move(limits)), tool_(tool) {
  if (joints_.empty()) throw InvalidArgument("robot model needs at least one joint");
  limits_.validate(joint_count());
}

namespace {

void check_dim(const RobotModel& model, const Vector& q) {
  if (q.size() != model.joint_count())
    throw InvalidArgument("joint vector has " + std::to_string(q.size()) + " entries, model has " +
                          std::to_string(model.joint_count()));
}

Eigen::Isometry3d pre_joint(const DhRow& row) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.rotate(Eigen::AngleAxisd(row.alpha, Eigen::Vector3d::UnitX()));
  t.translate(Eigen::Vector3d(row.a, 0.0, 0.0));
  return t;
}

}  // namespace

Pose fk(const RobotModel& model, const Vector& q) {
  check_dim(model, q);
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  for (int i = 0; i < model.joint_count(); ++i) {
    const DhRow& row = model.joints()[static_cast<std::size_t>(i)];
    t = t * pre_joint(row);
    t.rotate(Eigen::AngleAxisd(q[i] + row.theta_offset, Eigen::Vector3d::UnitZ()));
    t.translate(Eigen::Vector3d(0.0, 0.0, row.d));
  }
  t = t * model.tool();
  Pose pose;
  pose.p = t.translation();
  pose.theta = canonical(Eigen::Quaterniond(t.rotation()));
  return pose;
}

PoseJacobian fk_jacobian(const RobotModel& model, const Vector& q) {
  check_dim(model, q);
  const int n = model.joint_count();
  std::vector<Eigen::Vector3d> axes(static_cast<std::size_t>(n)), origins(static_cast<std::size_t>(n));
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  for (int i = 0; i < n; ++i) {
    const DhRow& row = model.joints()[static_cast<std::size_t>(i)];
    t = t * pre_joint(row);
    axes[static_cast<std::size_t>(i)] = t.linear().col(2);
    origins[static_cast<std::size_t>(i)] = t.translation();
    t.rotate(Eigen::AngleAxisd(q[i] + row.theta_offset, Eigen::Vector3d::UnitZ()));
    t.translate(Eigen::Vector3d(0.0, 0.0, row.d));
  }
  t = t * model.tool();

  PoseJacobian out;
  out.pose.p = t.translation();
  out.raw_theta = Eigen::Quaterniond(t.rotation()).normalized();
  out.pose.theta = canonical(out.raw_theta);
  out.dp.resize(3, n);
  out.dquat.resize(4, n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d& z = axes[static_cast<std::size_t>(i)];
    out.dp.col(i) = z.cross(out.pose.p - origins[static_cast<std::size_t>(i)]);
    // d/dq of Rot(z, dq) * theta at dq = 0: 0.5 * (0, z) (x) theta
    const Eigen::Quaterniond omega(0.0, z.x(), z.y(), z.z());
    const Eigen::Quaterniond d = omega * out.raw_theta;
    out.dquat.col(i) << 0.5 * d.w(), 0.5 * d.x(), 0.5 * d.y(), 0.5 * d.z();
  }
  return out;
}

double quat_diff(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  if (std::abs(a.norm() - 1.0) > 1e-6 || std::abs(b.norm() - 1.0) > 1e-6)
    throw InvalidArgument("quat_diff expects unit quaternions");
  const double dot = std::min(1.0, std::abs(a.dot(b)));
  return std::clamp(2.0 * std::acos(dot), 0.0, M_PI);
}

std::vector<LimitViolation> check_limits(const RobotModel& model, const Vector& q, const Vector& dq,
                                         const Vector& ddq, const Vector& dddq) {
  std::vector<LimitViolation> out;
  const KinematicLimits& lim = model.limits();
  const auto scan = [&](const Vector& x, LimitBand band) {
    const Vector& lo = lim.lower(band);
    const Vector& hi = lim.upper(band);
    for (int i = 0; i < std::min<int>(static_cast<int>(x.size()), model.joint_count()); ++i) {
      if (x[i] > hi[i]) out.push_back({i, band, x[i] - hi[i]});
      else if (x[i] < lo[i]) out.push_back({i, band, lo[i] - x[i]});
    }
  };
  scan(q, LimitBand::position);
  scan(dq, LimitBand::velocity);
  scan(ddq, LimitBand::acceleration);
  scan(dddq, LimitBand::jerk);
  return out;
}

}  // namespace demotraj

#include "demotraj/io.hpp"

namespace demotraj {

RobotModel model_from_json(const nlohmann::json& j) {
  const std::string convention = j.value("convention", "modified_dh");
  if (convention != "modified_dh")
    throw InvalidArgument("unsupported kinematic convention '" + convention + "'");
  std::vector<DhRow> rows;
  for (const auto& jr : io::require(j, "joints")) {
    rows.push_back({jr.value("a", 0.0), jr.value("d", 0.0), jr.value("alpha", 0.0), jr.value("theta_offset", 0.0)});
  }
  const auto& jl = io::require(j, "limits");
  KinematicLimits lim;
  lim.q_min = io::vector_from_json(io::require(jl, "q_min"));
  lim.q_max = io::vector_from_json(io::require(jl, "q_max"));
  lim.v_min = io::vector_from_json(io::require(jl, "v_min"));
  lim.v_max = io::vector_from_json(io::require(jl, "v_max"));
  lim.a_min = io::vector_from_json(io::require(jl, "a_min"));
  lim.a_max = io::vector_from_json(io::require(jl, "a_max"));
  lim.j_min = io::vector_from_json(io::require(jl, "j_min"));
  lim.j_max = io::vector_from_json(io::require(jl, "j_max"));
  Eigen::Isometry3d tool = Eigen::Isometry3d::Identity();
  if (j.contains("tool")) {
    const auto& jt = j.at("tool");
    if (jt.contains("quat_wxyz")) {
      const auto q = io::doubles_from_json(jt.at("quat_wxyz"));
      if (q.size() != 4) throw InvalidArgument("tool.quat_wxyz needs 4 entries");
      tool.linear() = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
    }
    if (jt.contains("xyz")) {
      const auto t = io::doubles_from_json(jt.at("xyz"));
      if (t.size() != 3) throw InvalidArgument("tool.xyz needs 3 entries");
      tool.translation() = Eigen::Vector3d(t[0], t[1], t[2]);
    }
  }
  return RobotModel(j.value("name", "unnamed"), std::move(rows), std::move(lim), tool);
}

nlohmann::json to_json(const RobotModel& model) {
  nlohmann::json j;
  j["name"] = model.name();
  j["convention"] = "modified_dh";
  for (const auto& r : model.joints())
    j["joints"].push_back({{"a", r.a}, {"d", r.d}, {"alpha", r.alpha}, {"theta_offset", r.theta_offset}});
  const auto& l = model.limits();
  j["limits"] = {{"q_min", io::to_json(l.q_min)}, {"q_max", io::to_json(l.q_max)},
                 {"v_min", io::to_json(l.v_min)}, {"v_max", io::to_json(l.v_max)},
                 {"a_min", io::to_json(l.a_min)}, {"a_max", io::to_json(l.a_max)},
                 {"j_min", io::to_json(l.j_min)}, {"j_max", io::to_json(l.j_max)}};
  const Eigen::Quaterniond q(model.tool().linear());
  const Eigen::Vector3d t = model.tool().translation();
  j["tool"] = {{"xyz", {t.x(), t.y(), t.z()}}, {"quat_wxyz", {q.w(), q.x(), q.y(), q.z()}}};
  return j;
}

RobotModel load_model(const std::string& path) { return model_from_json(io::load_json(path)); }

}  // namespace demotraj
