#include "demotraj/replay.hpp"

#include "demotraj/errors.hpp"
#include "demotraj/io.hpp"

#include <algorithm>
#include <cmath>

namespace demotraj {

const char* to_string(SessionPhase phase) {
  switch (phase) {
    case SessionPhase::idle: return "idle";
    case SessionPhase::replaying: return "replaying";
    case SessionPhase::done: return "done";
  }
  return "unknown";
}

namespace {

SessionPhase phase_from_string(const std::string& s) {
  for (auto p : {SessionPhase::idle, SessionPhase::replaying, SessionPhase::done})
    if (s == to_string(p)) return p;
  throw InvalidArgument("unknown session phase '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const StateMessage& m) {
  const auto& th = m.pose.theta;
  return {{"seq", m.seq},
          {"phase", to_string(m.phase)},
          {"t", m.t},
          {"s_r", m.s_r},
          {"v", m.v},
          {"R", m.R},
          {"q", std::vector<double>(m.q.data(), m.q.data() + m.q.size())},
          {"p", {m.pose.p.x(), m.pose.p.y(), m.pose.p.z()}},
          {"theta", {th.w(), th.x(), th.y(), th.z()}}};
}

StateMessage state_message_from_json(const nlohmann::json& j) {
  try {
    StateMessage m;
    m.seq = j.at("seq").get<long>();
    m.phase = phase_from_string(j.at("phase").get<std::string>());
    m.t = j.at("t").get<double>();
    m.s_r = j.at("s_r").get<double>();
    m.v = j.at("v").get<double>();
    m.R = j.at("R").get<double>();
    m.q = io::vector_from_json(j.at("q"));
    const auto p = j.at("p").get<std::vector<double>>();
    const auto th = j.at("theta").get<std::vector<double>>();
    if (p.size() != 3 || th.size() != 4) throw InvalidArgument("state message needs p[3] and theta[4]");
    m.pose.p = Eigen::Vector3d(p[0], p[1], p[2]);
    m.pose.theta = Eigen::Quaterniond(th[0], th[1], th[2], th[3]);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed state message: ") + e.what());
  }
}

nlohmann::json to_json(const CommandMessage& m) { return {{"t_client", m.t_client}, {"C", m.C}}; }

CommandMessage command_from_json(const nlohmann::json& j) {
  CommandMessage m;
  try {
    m.t_client = j.at("t_client").get<double>();
    m.C = j.at("C").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed command: ") + e.what());
  }
  if (!std::isfinite(m.t_client)) throw InvalidArgument("t_client must be finite");
  if (!(m.C >= -1.0 && m.C <= 0.0)) throw InvalidArgument("C must lie in [-1, 0]");
  return m;
}

ReplaySource replay_source_from_json(const nlohmann::json& j) {
  ReplaySource src{trajectory_from_json(io::require(j, "trajectory")), io::doubles_from_json(io::require(j, "tau"))};
  check_timings(src.tau);
  return src;
}

ReplaySession::ReplaySession(std::string id, ReplaySource source, RobotModel model, const RefineParams& params)
    : id_(std::move(id)), source_(std::move(source)), model_(std::move(model)), params_(params) {
  params_.validate();
  check_timings(source_.tau);
  if (source_.traj.dim() != model_.joint_count())
    throw InvalidArgument("trajectory has " + std::to_string(source_.traj.dim()) + " joints, model has " +
                          std::to_string(model_.joint_count()));
  if (!(source_.traj.duration() > 0.0) || !std::isfinite(source_.traj.duration()))
    throw InvalidArgument("trajectory duration must be positive");
}

double ReplaySession::V0r() const { return 1.0 / (params_.eta * source_.traj.duration()); }

SessionPhase ReplaySession::phase() const {
  std::lock_guard lock(mu_);
  return phase_;
}

void ReplaySession::start() {
  std::lock_guard lock(mu_);
  if (phase_ != SessionPhase::idle) throw StateConflict(std::string("cannot start a session that is ") + to_string(phase_));
  refiner_.emplace(source_.traj.duration(), params_);
  result_.reset();
  phase_ = SessionPhase::replaying;
}

void ReplaySession::stop() {
  std::lock_guard lock(mu_);
  refiner_.reset();
  result_.reset();
  latest_C_ = 0.0;
  latest_t_client_ = -std::numeric_limits<double>::infinity();
  ticks_since_loss_ = -1;
  phase_ = SessionPhase::idle;
}

bool ReplaySession::command(const CommandMessage& m) {
  if (!(m.C >= -1.0 && m.C <= 0.0)) throw InvalidArgument("C must lie in [-1, 0]");
  std::lock_guard lock(mu_);
  if (m.t_client < latest_t_client_) return false;
  latest_t_client_ = m.t_client;
  latest_C_ = m.C;
  return true;
}

void ReplaySession::client_connected() {
  std::lock_guard lock(mu_);
  ++clients_;
  ticks_since_loss_ = -1;
}

void ReplaySession::client_disconnected() {
  std::lock_guard lock(mu_);
  if (clients_ > 0 && --clients_ == 0) ticks_since_loss_ = 0;
}

StateMessage ReplaySession::tick() {
  std::lock_guard lock(mu_);
  if (phase_ != SessionPhase::replaying) throw StateConflict(std::string("cannot tick a session that is ") + to_string(phase_));
  const long hold_ticks = std::lround(kFailsafeHold / params_.filter.dt);
  if (ticks_since_loss_ >= hold_ticks) {
    latest_C_ = 0.0;
    ticks_since_loss_ = -1;
  }
  if (ticks_since_loss_ >= 0) ++ticks_since_loss_;
  refiner_->step(latest_C_);
  if (refiner_->done()) {
    result_ = finalize(refiner_->trace(), source_.traj.duration(), source_.tau, params_.tolerance);
    phase_ = SessionPhase::done;
  }
  ++seq_;
  return message_locked();
}

StateMessage ReplaySession::snapshot() const {
  std::lock_guard lock(mu_);
  return message_locked();
}

StateMessage ReplaySession::message_locked() const {
  StateMessage m;
  m.seq = seq_;
  m.phase = phase_;
  if (refiner_) {
    const RefineSample& c = refiner_->current();
    m.t = c.t;
    m.s_r = c.s_r;
    m.v = c.v;
    m.R = c.R;
  } else {
    m.v = V0r();
  }
  m.q = source_.traj.curve().eval(std::clamp(m.s_r, 0.0, 1.0));
  m.pose = fk(model_, m.q);
  return m;
}

std::optional<RefinementResult> ReplaySession::result() const {
  std::lock_guard lock(mu_);
  return result_;
}

RefinementTrace ReplaySession::trace() const {
  std::lock_guard lock(mu_);
  return refiner_ ? refiner_->trace() : RefinementTrace{};
}

std::shared_ptr<ReplaySession> SessionRegistry::create(ReplaySource source, RobotModel model,
                                                       const RefineParams& params) {
  std::lock_guard lock(mu_);
  const std::string id = "s" + std::to_string(next_);
  auto session = std::make_shared<ReplaySession>(id, std::move(source), std::move(model), params);
  ++next_;
  sessions_.emplace(id, session);
  return session;
}

std::shared_ptr<ReplaySession> SessionRegistry::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::string> SessionRegistry::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

}  // namespace demotraj
