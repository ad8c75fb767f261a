#pragma once

#include "demotraj/replay.hpp"

#include <chrono>
#include <memory>
#include <string>

namespace demotraj {

struct ReplayServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 picks a free port
  RefineParams defaults;    // used when a POST /sessions body has no "params"
  /// Wall seconds per replay second. 1 is real time; 0 ticks back to back.
  double time_scale = 1.0;
  /// When non-empty, every finished session writes <id>.csv (t,C,R,v,s_r) and
  /// <id>.json (the result) here.
  std::string trace_dir;
};

/// HTTP control endpoints and the WebSocket state stream for replay sessions.
///
///   POST /sessions               body: trajectory generation output, optional "params"
///   GET  /sessions/{id}          current state
///   POST /sessions/{id}/start
///   POST /sessions/{id}/stop     abort, back to idle, no result
///   GET  /sessions/{id}/result   409 until done
///   WS   /sessions/{id}/stream   state messages out ({seq, phase, t, s_r, v, R, q, p, theta}),
///                                commands in ({t_client, C}); ?rate=N decimates to about N Hz
///
/// Errors are JSON {"error": ...} with 400, 404, 405 or 409. A ticker thread per
/// running session advances it at 1/dt Hz and hands messages to the network
/// thread without waiting on clients.
class ReplayServer {
 public:
  ReplayServer(RobotModel model, ReplayServerOptions options = {});
  ~ReplayServer();
  ReplayServer(const ReplayServer&) = delete;
  ReplayServer& operator=(const ReplayServer&) = delete;

  /// Binds and starts serving on a background thread. Throws on bind failure.
  void start();
  void stop();
  unsigned short port() const;

  /// Same as POST /sessions. Returns the id.
  std::string create_session(const nlohmann::json& body);
  /// Same as POST /sessions/{id}/start.
  void start_session(const std::string& id);
  std::shared_ptr<ReplaySession> session(const std::string& id) const;
  /// Waits until the session reaches done. False on timeout.
  bool wait_done(const std::string& id, std::chrono::milliseconds timeout);

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace demotraj
