#include "demotraj/errors.hpp"
#include "demotraj/io.hpp"
#include "demotraj/replay.hpp"
#include "demotraj/replay_server.hpp"
#include "test_util.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <thread>

namespace demotraj {
namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

RobotModel planar() { return load_model(test::source_path("models/planar2r.json")); }

ReplaySource source(double T = 1.2) {
  std::vector<Vector> ctrl{Eigen::Vector2d(0.1, 0.5), Eigen::Vector2d(0.4, 0.8), Eigen::Vector2d(0.9, 0.6),
                           Eigen::Vector2d(1.2, 1.1)};
  return {TimedTrajectory(BSplineCurve(ctrl, KnotVector::clamped_uniform(4, 4)), T), {0.0, 0.3, 0.7, 1.0}};
}

nlohmann::json source_json(double T = 1.2) {
  const ReplaySource s = source(T);
  return {{"trajectory", to_json(s.traj)}, {"tau", s.tau}};
}

RefinementResult run_to_end(ReplaySession& s, const std::function<double(const StateMessage&)>& brake = {}) {
  s.start();
  StateMessage m = s.snapshot();
  double tc = 0.0;
  while (m.phase != SessionPhase::done) {
    if (brake) s.command({tc += 1.0, brake(m)});
    m = s.tick();
  }
  return *s.result();
}

TEST(ReplaySession, NoInputKeepsTimingsAndLoosestTolerances) {
  ReplaySession s("a", source(), planar(), {});
  const RefinementResult r = run_to_end(s);
  EXPECT_EQ(r.tau_r, s.source().tau);
  const ToleranceMapParams tol;
  for (std::size_t i = 0; i < r.tolerances.size(); ++i) {
    EXPECT_EQ(r.tolerances.eps_theta[i], tol.eps_theta_max);
    EXPECT_EQ(r.tolerances.eps_p[i], Eigen::Vector3d::Constant(tol.eps_p_max));
  }
  EXPECT_NEAR(r.trace.end_time(), 5.0 * 1.2, 1e-12);
}

TEST(ReplaySession, ReplaySpeedFollowsSlowdown) {
  ReplaySession s("a", source(1.2), planar(), {});
  EXPECT_DOUBLE_EQ(s.V0r(), 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(s.snapshot().v, 1.0 / 6.0);
  RefineParams p;
  for (double eta : {1.0, 0.5}) {
    p.eta = eta;
    EXPECT_THROW(ReplaySession("b", source(), planar(), p), InvalidArgument) << eta;
  }
}

TEST(ReplaySession, RejectsMismatchedInputs) {
  ReplaySource bad = source();
  bad.tau = {0.0, 0.5, 0.4, 1.0};
  EXPECT_THROW(ReplaySession("a", bad, planar(), {}), InvalidArgument);
  EXPECT_THROW(ReplaySession("a", source(), load_model(test::source_path("models/fr3.json")), {}), InvalidArgument);
  EXPECT_THROW(command_from_json({{"t_client", 0.0}, {"C", 0.5}}), InvalidArgument);
  EXPECT_THROW(command_from_json({{"t_client", 0.0}, {"C", -1.5}}), InvalidArgument);
  EXPECT_THROW(command_from_json({{"C", -0.5}}), InvalidArgument);
  EXPECT_THROW(replay_source_from_json({{"tau", {0.0, 1.0}}}), InvalidArgument);
}

TEST(ReplaySession, PhaseTransitions) {
  ReplaySession s("a", source(), planar(), {});
  EXPECT_EQ(s.phase(), SessionPhase::idle);
  EXPECT_THROW(s.tick(), StateConflict);
  EXPECT_FALSE(s.result());
  s.start();
  EXPECT_EQ(s.phase(), SessionPhase::replaying);
  EXPECT_THROW(s.start(), StateConflict);
  s.tick();
  s.stop();
  EXPECT_EQ(s.phase(), SessionPhase::idle);
  EXPECT_TRUE(s.trace().samples.empty());
  run_to_end(s);
  EXPECT_EQ(s.phase(), SessionPhase::done);
  EXPECT_THROW(s.tick(), StateConflict);
  EXPECT_THROW(s.start(), StateConflict);
  s.stop();
  EXPECT_FALSE(s.result());
  run_to_end(s);
  EXPECT_TRUE(s.result());
}

TEST(ReplaySession, ProgressIsMonotoneAndSequenced) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 0.0);
  for (int trial = 0; trial < 5; ++trial) {
    ReplaySession s("a", source(0.5 + trial * 0.3), planar(), {});
    s.start();
    StateMessage prev = s.snapshot();
    double tc = 0.0;
    while (prev.phase != SessionPhase::done) {
      s.command({tc += 1.0, u(rng)});
      const StateMessage m = s.tick();
      EXPECT_EQ(m.seq, prev.seq + 1);
      EXPECT_GE(m.s_r, prev.s_r);
      EXPECT_LE(m.s_r, 1.0);
      EXPECT_GE(m.R, -1.0);
      EXPECT_LE(m.R, 0.0);
      EXPECT_GE(m.v, (0.2 - 1e-12) * s.V0r());
      EXPECT_LE(m.v, s.V0r() * (1 + 1e-12));
      EXPECT_EQ(m.q.size(), 2);
      prev = m;
    }
    EXPECT_EQ(prev.s_r, 1.0);
  }
}

TEST(ReplaySession, StaleCommandsAreIgnored) {
  ReplaySession s("a", source(), planar(), {});
  EXPECT_TRUE(s.command({2.0, -0.5}));
  EXPECT_FALSE(s.command({1.0, -1.0}));
  EXPECT_TRUE(s.command({2.0, -0.25}));
  s.start();
  s.tick();
  EXPECT_EQ(s.trace().samples.front().C, -0.25);
}

std::vector<double> trace_commands(const ReplaySession& s) {
  std::vector<double> c;
  for (const auto& x : s.trace().samples) c.push_back(x.C);
  return c;
}

TEST(ReplaySession, LostClientHoldsCommandThenReleases) {
  ReplaySession s("a", source(), planar(), {});
  s.client_connected();
  s.command({1.0, -1.0});
  s.start();
  for (int k = 0; k < 10; ++k) s.tick();
  s.client_disconnected();
  for (int k = 0; k < 40; ++k) s.tick();
  const std::vector<double> c = trace_commands(s);
  const long held = std::count(c.begin(), c.end(), -1.0);
  EXPECT_EQ(held, 10 + 25);
  for (std::size_t k = 0; k < c.size(); ++k)
    if (static_cast<long>(k) >= held && k < 50) EXPECT_EQ(c[k], 0.0) << k;
}

TEST(ReplaySession, ReconnectCancelsRelease) {
  ReplaySession s("a", source(), planar(), {});
  s.client_connected();
  s.command({1.0, -1.0});
  s.start();
  s.client_disconnected();
  for (int k = 0; k < 20; ++k) s.tick();
  s.client_connected();
  for (int k = 0; k < 40; ++k) s.tick();
  for (double c : trace_commands(s)) EXPECT_EQ(c, -1.0);
}

TEST(ReplaySession, OnlineMatchesOfflineBitForBit) {
  const auto brake = [](const StateMessage& m) { return m.s_r >= 0.45 && m.s_r < 0.8 ? -0.8 : 0.0; };
  ReplaySession s("a", source(), planar(), {});
  const RefinementResult online = run_to_end(s, brake);
  const RefinementResult offline = refine(trace_commands(s), 1.2, s.source().tau, s.params());
  EXPECT_EQ(online.tau_r, offline.tau_r);
  EXPECT_EQ(to_json(online).dump(), to_json(offline).dump());

  const auto path = std::filesystem::temp_directory_path() / "demotraj_replay_trace.csv";
  write_trace_csv(path.string(), s.trace());
  const RefinementResult from_file =
      refine(read_command_trace(path.string(), s.params().filter.dt), 1.2, s.source().tau, s.params());
  std::filesystem::remove(path);
  EXPECT_EQ(to_json(online).dump(), to_json(from_file).dump());
}

TEST(ReplaySession, StateMessageJsonRoundTrip) {
  ReplaySession s("a", source(), planar(), {});
  s.start();
  for (int k = 0; k < 17; ++k) s.tick();
  const StateMessage m = s.snapshot();
  const nlohmann::json j = to_json(m);
  for (const char* key : {"seq", "phase", "t", "s_r", "v", "R", "q", "p", "theta"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(to_json(state_message_from_json(nlohmann::json::parse(j.dump()))).dump(), j.dump());
  EXPECT_EQ(j["phase"], "replaying");
  EXPECT_THROW(state_message_from_json({{"seq", 1}}), InvalidArgument);
}

TEST(SessionRegistry, IndependentSessions) {
  SessionRegistry reg;
  auto a = reg.create(source(), planar(), {});
  auto b = reg.create(source(), planar(), {});
  EXPECT_NE(a->id(), b->id());
  EXPECT_EQ(reg.find(a->id()), a);
  EXPECT_EQ(reg.find("nope"), nullptr);
  a->start();
  a->tick();
  EXPECT_EQ(b->phase(), SessionPhase::idle);
  EXPECT_EQ(reg.ids().size(), 2u);
}

// Synchronous clients for the server tests.

struct Reply {
  unsigned status = 0;
  nlohmann::json body;
};

Reply request(unsigned short port, http::verb method, const std::string& target, const std::string& body = "") {
  net::io_context ioc;
  beast::tcp_stream stream(ioc);
  stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
  http::request<http::string_body> req{method, target, 11};
  req.set(http::field::host, "127.0.0.1");
  req.set(http::field::content_type, "application/json");
  req.body() = body;
  req.prepare_payload();
  http::write(stream, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(stream, buf, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  Reply r{res.result_int(), {}};
  if (!res.body().empty()) r.body = nlohmann::json::parse(res.body());
  return r;
}

class WsClient {
 public:
  WsClient(unsigned short port, const std::string& target) : ws_(ioc_) {
    ws_.next_layer().connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    ws_.handshake("127.0.0.1", target);
  }
  nlohmann::json read() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return nlohmann::json::parse(beast::buffers_to_string(buf.data()));
  }
  void send(const nlohmann::json& j) { ws_.write(net::buffer(j.dump())); }
  void close() { ws_.close(websocket::close_code::normal); }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("demotraj_replay_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::remove_all(dir_);
  }
  void TearDown() override {
    server_.reset();
    std::filesystem::remove_all(dir_);
  }
  ReplayServer& serve(double time_scale) {
    ReplayServerOptions o;
    o.time_scale = time_scale;
    o.trace_dir = dir_.string();
    server_ = std::make_unique<ReplayServer>(planar(), o);
    server_->start();
    return *server_;
  }

  std::filesystem::path dir_;
  std::unique_ptr<ReplayServer> server_;
};

TEST_F(ServerTest, HttpLifecycle) {
  ReplayServer& srv = serve(0.0);
  const auto port = srv.port();
  Reply r = request(port, http::verb::post, "/sessions", source_json().dump());
  ASSERT_EQ(r.status, 201u) << r.body;
  const std::string id = r.body.at("id");
  EXPECT_EQ(r.body.at("phase"), "idle");
  EXPECT_DOUBLE_EQ(r.body.at("V0r").get<double>(), 1.0 / 6.0);

  EXPECT_EQ(request(port, http::verb::get, "/sessions/" + id + "/result").status, 409u);
  r = request(port, http::verb::get, "/sessions/" + id);
  EXPECT_EQ(r.status, 200u);
  EXPECT_EQ(r.body.at("phase"), "idle");

  EXPECT_EQ(request(port, http::verb::post, "/sessions/" + id + "/start").status, 200u);
  ASSERT_TRUE(srv.wait_done(id, std::chrono::seconds(10)));
  r = request(port, http::verb::get, "/sessions/" + id + "/result");
  ASSERT_EQ(r.status, 200u);
  const RefinementResult res = refinement_from_json(r.body);
  EXPECT_EQ(res.tau_r, source().tau);
  EXPECT_EQ(request(port, http::verb::post, "/sessions/" + id + "/start").status, 409u);

  EXPECT_TRUE(std::filesystem::exists(dir_ / (id + ".csv")));
  EXPECT_TRUE(std::filesystem::exists(dir_ / (id + ".json")));

  EXPECT_EQ(request(port, http::verb::post, "/sessions/" + id + "/stop").status, 200u);
  EXPECT_EQ(request(port, http::verb::get, "/sessions/" + id).body.at("phase"), "idle");
  EXPECT_EQ(request(port, http::verb::get, "/sessions/" + id + "/result").status, 409u);
}

TEST_F(ServerTest, ErrorCodes) {
  ReplayServer& srv = serve(0.0);
  const auto port = srv.port();
  EXPECT_EQ(request(port, http::verb::post, "/sessions", "not json").status, 400u);
  EXPECT_EQ(request(port, http::verb::post, "/sessions", R"({"tau":[0,1]})").status, 400u);
  nlohmann::json bad = source_json();
  bad["params"] = {{"eta", 0.5}};
  Reply r = request(port, http::verb::post, "/sessions", bad.dump());
  EXPECT_EQ(r.status, 400u);
  EXPECT_TRUE(r.body.contains("error"));
  EXPECT_EQ(request(port, http::verb::get, "/sessions/s99").status, 404u);
  EXPECT_EQ(request(port, http::verb::post, "/sessions/s99/start").status, 404u);
  EXPECT_EQ(request(port, http::verb::get, "/elsewhere").status, 404u);
  EXPECT_EQ(request(port, http::verb::delete_, "/sessions").status, 405u);
  const std::string id = srv.create_session(source_json());
  EXPECT_EQ(request(port, http::verb::get, "/sessions/" + id + "/start").status, 405u);
  EXPECT_EQ(request(port, http::verb::options, "/sessions").status, 204u);
}

TEST_F(ServerTest, ParamsOverrideDefaults) {
  ReplayServer& srv = serve(0.0);
  nlohmann::json body = source_json();
  body["params"] = {{"eta", 3.0}};
  const std::string id = srv.create_session(body);
  EXPECT_EQ(srv.session(id)->params().eta, 3.0);
  EXPECT_EQ(srv.session(id)->params().vmin_ratio, RefineParams{}.vmin_ratio);
}

TEST_F(ServerTest, ScriptedBrakeTightensTailAndMatchesOffline) {
  ReplayServer& srv = serve(0.1);
  const auto port = srv.port();
  const std::string braked = srv.create_session(source_json());
  const std::string free_run = srv.create_session(source_json());

  WsClient ws(port, "/sessions/" + braked + "/stream");
  EXPECT_EQ(ws.read().at("phase"), "idle");
  srv.start_session(braked);
  srv.start_session(free_run);
  bool sent = false;
  long last_seq = 0;
  for (;;) {
    const StateMessage m = state_message_from_json(ws.read());
    EXPECT_GT(m.seq, last_seq);
    last_seq = m.seq;
    if (!sent && m.s_r >= 0.7) {
      ws.send(to_json(CommandMessage{1.0, -1.0}));
      sent = true;
    }
    if (m.phase == SessionPhase::done) break;
  }
  ws.close();
  ASSERT_TRUE(srv.wait_done(braked, std::chrono::seconds(10)));
  ASSERT_TRUE(srv.wait_done(free_run, std::chrono::seconds(10)));

  const nlohmann::json on_json = request(port, http::verb::get, "/sessions/" + braked + "/result").body;
  const RefinementResult on = *srv.session(braked)->result();
  const RefinementResult nominal = *srv.session(free_run)->result();
  const ToleranceMapParams tol;
  EXPECT_NEAR(on.tolerances.eps_p.back().x(), tol.eps_p_min, 1e-3 * tol.eps_p_min);
  EXPECT_NEAR(on.tolerances.eps_theta.back(), tol.eps_theta_min, 1e-3 * tol.eps_theta_min);
  EXPECT_EQ(on.tolerances.eps_p.front().x(), tol.eps_p_max);
  EXPECT_GT(on.trace.end_time(), nominal.trace.end_time());
  EXPECT_LT(on.tau_r[2], source().tau[2]);

  const RefinementResult off =
      refine(read_command_trace((dir_ / (braked + ".csv")).string(), RefineParams{}.filter.dt), 1.2, source().tau);
  EXPECT_EQ(to_json(off).dump(), on_json.dump());
  EXPECT_EQ(to_json(off).dump(), io::load_json((dir_ / (braked + ".json")).string()).dump());
}

TEST_F(ServerTest, DisconnectReleasesBrake) {
  ReplayServer& srv = serve(0.1);
  const std::string id = srv.create_session(source_json());
  {
    WsClient ws(srv.port(), "/sessions/" + id + "/stream?rate=10");
    ws.read();
    ws.send(to_json(CommandMessage{1.0, -1.0}));
    srv.start_session(id);
    state_message_from_json(ws.read());
    ws.close();
  }
  ASSERT_TRUE(srv.wait_done(id, std::chrono::seconds(20)));
  const auto samples = srv.session(id)->result()->trace.samples;
  ASSERT_FALSE(samples.empty());
  EXPECT_EQ(samples.front().C, -1.0);
  EXPECT_EQ(samples.back().C, 0.0);
  EXPECT_GT(samples.back().R, -0.01);
}

TEST_F(ServerTest, InvalidCommandGetsErrorReply) {
  ReplayServer& srv = serve(0.0);
  const std::string id = srv.create_session(source_json());
  WsClient ws(srv.port(), "/sessions/" + id + "/stream");
  ws.read();
  ws.send({{"t_client", 0.0}, {"C", 3.0}});
  EXPECT_TRUE(ws.read().contains("error"));
  ws.send({{"t_client", 0.0}, {"C", -0.5}});
  ws.close();
}

TEST_F(ServerTest, RealTimePacing) {
  ReplayServer& srv = serve(1.0);
  const std::string id = srv.create_session(source_json(0.2));
  const auto t0 = std::chrono::steady_clock::now();
  srv.start_session(id);
  ASSERT_TRUE(srv.wait_done(id, std::chrono::seconds(5)));
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_NEAR(wall, 5.0 * 0.2, 0.05 * 5.0 * 0.2);
}

}  // namespace
}  // namespace demotraj
