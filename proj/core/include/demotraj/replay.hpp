#pragma once

#include "demotraj/kin.hpp"
#include "demotraj/refine.hpp"

#include <nlohmann/json.hpp>

#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace demotraj {

enum class SessionPhase { idle, replaying, done };
const char* to_string(SessionPhase phase);

/// Server to client, once per tick: {seq, phase, t, s_r, v, R, q[], p[], theta[w,x,y,z]}.
struct StateMessage {
  long seq = 0;
  SessionPhase phase = SessionPhase::idle;
  double t = 0.0;
  double s_r = 0.0;
  double v = 0.0;
  double R = 0.0;
  Vector q;
  Pose pose;
};
nlohmann::json to_json(const StateMessage& m);
StateMessage state_message_from_json(const nlohmann::json& j);

/// Client to server: {t_client, C} with C in [-1, 0].
struct CommandMessage {
  double t_client = 0.0;
  double C = 0.0;
};
nlohmann::json to_json(const CommandMessage& m);
/// Throws InvalidArgument on missing fields or C outside [-1, 0].
CommandMessage command_from_json(const nlohmann::json& j);

/// A smoothed trajectory and its waypoint timings.
struct ReplaySource {
  TimedTrajectory traj;
  std::vector<double> tau;
};
/// Accepts trajectory generation output ({trajectory, tau, ...}).
ReplaySource replay_source_from_json(const nlohmann::json& j);

/// One replay at reduced speed driven by a brake command. Deterministic: the
/// outcome depends only on the command held at each tick, never on wall time.
/// Thread safe; tick() and the command mailbox may be used from different threads.
class ReplaySession {
 public:
  /// Replay time a lost client's last command is held before it drops to 0.
  static constexpr double kFailsafeHold = 0.25;

  ReplaySession(std::string id, ReplaySource source, RobotModel model, const RefineParams& params);
  ReplaySession(const ReplaySession&) = delete;
  ReplaySession& operator=(const ReplaySession&) = delete;

  const std::string& id() const { return id_; }
  const RefineParams& params() const { return params_; }
  const ReplaySource& source() const { return source_; }
  double V0r() const;
  double tick_period() const { return params_.filter.dt; }

  SessionPhase phase() const;
  /// idle -> replaying. Throws StateConflict in any other phase.
  void start();
  /// Aborts a replay (or clears a finished one) and returns to idle with no result.
  void stop();

  /// Latest-value mailbox, last writer wins per tick. Commands older than the
  /// newest accepted t_client are dropped; returns whether it was accepted.
  bool command(const CommandMessage& m);
  void client_connected();
  void client_disconnected();

  /// Samples the mailbox, advances one tick and returns the published state.
  /// Finalizes the result exactly once when s_r reaches 1. Throws StateConflict
  /// unless replaying.
  StateMessage tick();
  /// Current state without advancing.
  StateMessage snapshot() const;

  std::optional<RefinementResult> result() const;
  /// Recorded trace of the current or last run.
  RefinementTrace trace() const;

 private:
  StateMessage message_locked() const;

  const std::string id_;
  const ReplaySource source_;
  const RobotModel model_;
  const RefineParams params_;

  mutable std::mutex mu_;
  SessionPhase phase_ = SessionPhase::idle;
  std::optional<Refiner> refiner_;
  std::optional<RefinementResult> result_;
  long seq_ = 0;
  double latest_C_ = 0.0;
  double latest_t_client_ = -std::numeric_limits<double>::infinity();
  int clients_ = 0;
  long ticks_since_loss_ = -1;  // -1 while a client is connected or none ever was
};

/// Thread-safe id -> session map with sequential ids s1, s2, ...
class SessionRegistry {
 public:
  std::shared_ptr<ReplaySession> create(ReplaySource source, RobotModel model, const RefineParams& params);
  /// nullptr when unknown.
  std::shared_ptr<ReplaySession> find(const std::string& id) const;
  std::vector<std::string> ids() const;

 private:
  mutable std::mutex mu_;
  long next_ = 1;
  std::map<std::string, std::shared_ptr<ReplaySession>> sessions_;
};

}  // namespace demotraj
