#include "demotraj/replay_server.hpp"

#include "demotraj/errors.hpp"
#include "demotraj/io.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <iostream>
#include <thread>

namespace demotraj {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

constexpr std::size_t kMaxQueued = 512;

struct Route {
  std::vector<std::string> parts;
  std::map<std::string, std::string> query;
};

std::string_view as_view(beast::string_view s) { return {s.data(), s.size()}; }

Route parse_target(std::string_view target) {
  Route r;
  const auto q = target.find('?');
  std::string_view path = target.substr(0, q);
  if (q != std::string_view::npos) {
    std::string_view rest = target.substr(q + 1);
    while (!rest.empty()) {
      const auto amp = rest.find('&');
      const std::string_view kv = rest.substr(0, amp);
      const auto eq = kv.find('=');
      r.query[std::string(kv.substr(0, eq))] = eq == std::string_view::npos ? "" : std::string(kv.substr(eq + 1));
      if (amp == std::string_view::npos) break;
      rest.remove_prefix(amp + 1);
    }
  }
  while (!path.empty()) {
    const auto slash = path.find('/');
    if (slash != 0) r.parts.emplace_back(path.substr(0, slash));
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
  }
  return r;
}

class HttpError : public std::runtime_error {
 public:
  HttpError(http::status s, const std::string& what) : std::runtime_error(what), status(s) {}
  http::status status;
};

}  // namespace

class StreamConnection;

struct ReplayServer::Impl {
  struct Run {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> cancel;
  };

  Impl(RobotModel m, ReplayServerOptions o) : model(std::move(m)), options(std::move(o)) {}

  RobotModel model;
  ReplayServerOptions options;
  SessionRegistry registry;

  net::io_context ioc{1};
  std::optional<tcp::acceptor> acceptor;
  std::thread io_thread;
  bool running = false;

  // Touched only on the network thread.
  std::map<std::string, std::vector<std::weak_ptr<StreamConnection>>> streams;

  std::mutex runs_mu;
  std::map<std::string, Run> runs;

  std::mutex done_mu;
  std::condition_variable done_cv;

  std::shared_ptr<ReplaySession> require_session(const std::string& id) const {
    auto s = registry.find(id);
    if (!s) throw HttpError(http::status::not_found, "no session '" + id + "'");
    return s;
  }

  std::string create(const nlohmann::json& body) {
    if (!body.is_object()) throw InvalidArgument("session body must be a JSON object");
    ReplaySource src = replay_source_from_json(body);
    const RefineParams params =
        body.contains("params") ? refine_params_from_json(body.at("params"), options.defaults) : options.defaults;
    return registry.create(std::move(src), model, params)->id();
  }

  void halt(const std::string& id) {
    Run old;
    {
      std::lock_guard lock(runs_mu);
      auto it = runs.find(id);
      if (it == runs.end()) return;
      old = std::move(it->second);
      runs.erase(it);
    }
    old.cancel->store(true);
    if (old.thread.joinable()) old.thread.join();
  }

  void start_run(const std::string& id) {
    auto s = require_session(id);
    halt(id);
    s->start();
    auto cancel = std::make_shared<std::atomic<bool>>(false);
    std::lock_guard lock(runs_mu);
    runs[id] = Run{std::thread([this, s, cancel] { tick_loop(s, cancel); }), cancel};
  }

  void stop_run(const std::string& id) {
    auto s = require_session(id);
    halt(id);
    s->stop();
    done_cv.notify_all();
  }

  void tick_loop(const std::shared_ptr<ReplaySession>& s, const std::shared_ptr<std::atomic<bool>>& cancel) {
    using clock = std::chrono::steady_clock;
    const auto period =
        std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(s->tick_period() * options.time_scale));
    auto next = clock::now();
    while (!cancel->load()) {
      if (options.time_scale > 0.0) {
        next += period;
        std::this_thread::sleep_until(next);
        if (cancel->load()) break;
      }
      StateMessage m;
      try {
        m = s->tick();
      } catch (const StateConflict&) {
        break;
      }
      publish(s->id(), m);
      if (m.phase == SessionPhase::done) {
        persist(*s);
        {
          std::lock_guard lock(done_mu);
        }
        done_cv.notify_all();
        break;
      }
    }
  }

  void persist(const ReplaySession& s) {
    if (options.trace_dir.empty()) return;
    try {
      const std::filesystem::path dir(options.trace_dir);
      std::filesystem::create_directories(dir);
      write_trace_csv((dir / (s.id() + ".csv")).string(), s.trace());
      if (auto r = s.result()) io::save_json((dir / (s.id() + ".json")).string(), to_json(*r));
    } catch (const std::exception& e) {
      std::cerr << "replay: could not persist session " << s.id() << ": " << e.what() << "\n";
    }
  }

  void publish(const std::string& id, const StateMessage& m);
  http::response<http::string_body> handle(const http::request<http::string_body>& req);
  void accept();
};

class StreamConnection : public std::enable_shared_from_this<StreamConnection> {
 public:
  StreamConnection(tcp::socket socket, std::shared_ptr<ReplaySession> session, ReplayServer::Impl& server, long stride)
      : ws_(std::move(socket)), session_(std::move(session)), server_(server), stride_(std::max(1L, stride)) {}

  ~StreamConnection() { detach(); }

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  /// Network thread only.
  void send(const std::shared_ptr<const std::string>& text, long seq, bool final) {
    if (!attached_ || (!final && seq % stride_ != 0)) return;
    queue_.push_back(text);
    // Never let a slow client hold back the ticker: drop the oldest unsent message.
    if (queue_.size() > kMaxQueued) queue_.erase(queue_.begin() + (writing_ ? 1 : 0));
    if (!writing_) write_next();
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    attached_ = true;
    session_->client_connected();
    server_.streams[session_->id()].push_back(weak_from_this());
    send(std::make_shared<const std::string>(to_json(session_->snapshot()).dump()), 0, true);
    read_next();
  }

  void read_next() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      detach();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
      session_->command(command_from_json(nlohmann::json::parse(text)));
    } catch (const std::exception& e) {
      send(std::make_shared<const std::string>(nlohmann::json{{"error", e.what()}}.dump()), 0, true);
    }
    read_next();
  }

  void write_next() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_write(ec); });
  }

  void on_write(beast::error_code ec) {
    writing_ = false;
    if (ec) {
      detach();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) write_next();
  }

  void detach() {
    if (!attached_) return;
    attached_ = false;
    queue_.clear();
    session_->client_disconnected();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool writing_ = false;
  bool attached_ = false;
  std::shared_ptr<ReplaySession> session_;
  ReplayServer::Impl& server_;
  long stride_;
};

void ReplayServer::Impl::publish(const std::string& id, const StateMessage& m) {
  auto text = std::make_shared<const std::string>(to_json(m).dump());
  const bool final = m.phase != SessionPhase::replaying;
  net::post(ioc, [this, id, text, seq = m.seq, final] {
    auto it = streams.find(id);
    if (it == streams.end()) return;
    auto& list = it->second;
    list.erase(std::remove_if(list.begin(), list.end(), [](const auto& w) { return w.expired(); }), list.end());
    for (const auto& w : list)
      if (auto c = w.lock()) c->send(text, seq, final);
  });
}

namespace {

http::response<http::string_body> json_response(http::status status, const nlohmann::json& body, unsigned version,
                                                 bool keep_alive) {
  http::response<http::string_body> res{status, version};
  res.set(http::field::content_type, "application/json");
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(keep_alive);
  res.body() = body.dump();
  res.prepare_payload();
  return res;
}

}  // namespace

http::response<http::string_body> ReplayServer::Impl::handle(const http::request<http::string_body>& req) {
  const unsigned version = req.version();
  const bool keep = req.keep_alive();
  if (req.method() == http::verb::options) {
    http::response<http::string_body> res{http::status::no_content, version};
    res.set(http::field::access_control_allow_origin, "*");
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    res.keep_alive(keep);
    res.prepare_payload();
    return res;
  }
  try {
    const Route route = parse_target(as_view(req.target()));
    const auto& p = route.parts;
    const auto method = req.method();
    auto expect = [&](http::verb v) {
      if (method != v) throw HttpError(http::status::method_not_allowed, "method not allowed");
    };
    if (p.size() == 1 && p[0] == "sessions") {
      if (method == http::verb::get) return json_response(http::status::ok, {{"sessions", registry.ids()}}, version, keep);
      expect(http::verb::post);
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body());
      } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument(std::string("body is not JSON: ") + e.what());
      }
      const std::string id = create(body);
      auto s = registry.find(id);
      return json_response(http::status::created,
                           {{"id", id}, {"phase", to_string(s->phase())}, {"V0r", s->V0r()}, {"dt", s->tick_period()}},
                           version, keep);
    }
    if (p.size() >= 2 && p[0] == "sessions") {
      auto s = require_session(p[1]);
      if (p.size() == 2) {
        expect(http::verb::get);
        nlohmann::json j = to_json(s->snapshot());
        j["id"] = s->id();
        return json_response(http::status::ok, j, version, keep);
      }
      if (p.size() == 3 && p[2] == "start") {
        expect(http::verb::post);
        start_run(s->id());
        return json_response(http::status::ok, {{"id", s->id()}, {"phase", to_string(s->phase())}}, version, keep);
      }
      if (p.size() == 3 && p[2] == "stop") {
        expect(http::verb::post);
        stop_run(s->id());
        return json_response(http::status::ok, {{"id", s->id()}, {"phase", to_string(s->phase())}}, version, keep);
      }
      if (p.size() == 3 && p[2] == "result") {
        expect(http::verb::get);
        auto r = s->result();
        if (!r) throw StateConflict(std::string("no result while ") + to_string(s->phase()));
        return json_response(http::status::ok, to_json(*r), version, keep);
      }
    }
    throw HttpError(http::status::not_found, "no route for " + std::string(req.target()));
  } catch (const HttpError& e) {
    return json_response(e.status, {{"error", e.what()}}, version, keep);
  } catch (const InvalidArgument& e) {
    return json_response(http::status::bad_request, {{"error", e.what()}}, version, keep);
  } catch (const StateConflict& e) {
    return json_response(http::status::conflict, {{"error", e.what()}}, version, keep);
  } catch (const std::exception& e) {
    return json_response(http::status::internal_server_error, {{"error", e.what()}}, version, keep);
  }
}

namespace {

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, ReplayServer::Impl& server) : stream_(std::move(socket)), server_(server) {}

  void run() { read_next(); }

 private:
  void read_next() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      const Route route = parse_target(as_view(req_.target()));
      const auto& p = route.parts;
      if (p.size() == 3 && p[0] == "sessions" && p[2] == "stream") {
        if (auto s = server_.registry.find(p[1])) {
          long stride = 1;
          if (auto it = route.query.find("rate"); it != route.query.end()) {
            const double rate = std::atof(it->second.c_str());
            if (rate > 0.0) stride = std::lround(1.0 / (rate * s->tick_period()));
          }
          stream_.expires_never();
          std::make_shared<StreamConnection>(stream_.release_socket(), s, server_, stride)->run(std::move(req_));
          return;
        }
      }
      write(json_response(http::status::not_found, {{"error", "no stream at " + std::string(req_.target())}},
                          req_.version(), false));
      return;
    }
    write(server_.handle(req_));
  }

  void write(http::response<http::string_body> res) {
    auto sp = std::make_shared<http::response<http::string_body>>(std::move(res));
    http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (sp->need_eof()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->read_next();
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  ReplayServer::Impl& server_;
};

}  // namespace

void ReplayServer::Impl::accept() {
  acceptor->async_accept(ioc, [this](beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted) return;
    if (!ec) std::make_shared<HttpConnection>(std::move(socket), *this)->run();
    accept();
  });
}

ReplayServer::ReplayServer(RobotModel model, ReplayServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(model), std::move(options))) {
  impl_->options.defaults.validate();
  if (!(impl_->options.time_scale >= 0.0)) throw InvalidArgument("time_scale must be non-negative");
}

ReplayServer::~ReplayServer() { stop(); }

void ReplayServer::start() {
  if (impl_->running) return;
  const tcp::endpoint ep(net::ip::make_address(impl_->options.address), impl_->options.port);
  impl_->acceptor.emplace(impl_->ioc);
  impl_->acceptor->open(ep.protocol());
  impl_->acceptor->set_option(net::socket_base::reuse_address(true));
  impl_->acceptor->bind(ep);
  impl_->acceptor->listen(net::socket_base::max_listen_connections);
  impl_->accept();
  impl_->running = true;
  impl_->io_thread = std::thread([this] { impl_->ioc.run(); });
}

void ReplayServer::stop() {
  if (!impl_) return;
  std::vector<std::string> ids;
  {
    std::lock_guard lock(impl_->runs_mu);
    for (const auto& [id, run] : impl_->runs) ids.push_back(id);
  }
  for (const auto& id : ids) impl_->halt(id);
  if (!impl_->running) return;
  net::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor->close(ec);
  });
  impl_->ioc.stop();
  if (impl_->io_thread.joinable()) impl_->io_thread.join();
  impl_->running = false;
}

unsigned short ReplayServer::port() const {
  if (!impl_->acceptor) throw StateConflict("server is not started");
  return impl_->acceptor->local_endpoint().port();
}

std::string ReplayServer::create_session(const nlohmann::json& body) { return impl_->create(body); }

void ReplayServer::start_session(const std::string& id) { impl_->start_run(id); }

std::shared_ptr<ReplaySession> ReplayServer::session(const std::string& id) const { return impl_->registry.find(id); }

bool ReplayServer::wait_done(const std::string& id, std::chrono::milliseconds timeout) {
  auto s = impl_->registry.find(id);
  if (!s) throw InvalidArgument("no session '" + id + "'");
  std::unique_lock lock(impl_->done_mu);
  return impl_->done_cv.wait_for(lock, timeout, [&] { return s->phase() == SessionPhase::done; });
}

}  // namespace demotraj
