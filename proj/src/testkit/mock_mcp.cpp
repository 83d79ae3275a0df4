#include <httplib.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <thread>

#include "testkit/server_util.hpp"
#include "toolreg/hub.hpp"
#include "toolreg/testkit.hpp"

namespace toolreg::testkit {

namespace {

constexpr const char* kKnownVersions[] = {"2024-11-05", "2025-03-26"};

Json rpc_result(const Json& id, Json result) { return {{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}}; }

Json rpc_error(const Json& id, int code, const std::string& message) {
  return {{"jsonrpc", "2.0"}, {"id", id}, {"error", {{"code", code}, {"message", message}}}};
}

struct BadParams {
  std::string message;
};

}  // namespace

std::vector<std::string> MockMcpConfig::to_args() const {
  std::vector<std::string> out = {"--name", server_name, "--server-version", server_version};
  std::string joined;
  for (const auto& t : tools) joined += (joined.empty() ? "" : ",") + t;
  out.insert(out.end(), {"--tools", joined});
  if (page_size) out.insert(out.end(), {"--page-size", std::to_string(page_size)});
  if (!error_tools.empty()) {
    std::string errs;
    for (const auto& t : error_tools) errs += (errs.empty() ? "" : ",") + t;
    out.insert(out.end(), {"--error-tools", errs});
  }
  if (drop_after_initialize) out.push_back("--drop-after-initialize");
  if (latency.fixed.count()) out.insert(out.end(), {"--latency-ms", std::to_string(latency.fixed.count())});
  if (latency.jitter.count()) out.insert(out.end(), {"--jitter-ms", std::to_string(latency.jitter.count())});
  if (!protocol_version.empty()) out.insert(out.end(), {"--protocol-version", protocol_version});
  out.insert(out.end(), {"--seed", std::to_string(seed)});
  return out;
}

Json McpServerStats::to_json() const {
  return {{"requests", requests}, {"notifications", notifications}, {"list_pages", list_pages}, {"violations", violations}};
}

McpServerCore::McpServerCore(MockMcpConfig config)
    : config_(std::move(config)), jitter_(std::make_unique<detail::Jitter>(config_.latency, config_.seed)) {
  std::map<std::string, Tool> all;
  for (const Tool& tool : hub::calculator_tools()) all.emplace(tool.name(), tool);
  for (const auto& name : config_.tools) {
    auto it = all.find(name);
    if (it == all.end()) throw std::invalid_argument("mock MCP server has no tool named " + name);
    tools_.emplace(name, it->second);
  }
}

McpServerCore::~McpServerCore() = default;

McpServerStats McpServerCore::stats() const {
  return {requests_.load(), notifications_.load(), list_pages_.load(), violations_.load()};
}

void McpServerCore::sleep_latency() { jitter_->sleep(); }

Json McpServerCore::list_tools(const Json& params) {
  ++list_pages_;
  std::size_t start = 0;
  if (params.is_object() && params.contains("cursor")) {
    const Json& cursor = params["cursor"];
    std::size_t used = 0;
    try {
      if (!cursor.is_string()) throw std::invalid_argument("cursor");
      start = std::stoul(cursor.get<std::string>(), &used);
    } catch (const std::exception&) {
      throw BadParams{"invalid cursor"};
    }
    if (used != cursor.get<std::string>().size() || start > config_.tools.size()) throw BadParams{"invalid cursor"};
  }
  std::size_t end = config_.page_size ? std::min(config_.tools.size(), start + config_.page_size) : config_.tools.size();
  Json list = Json::array();
  for (std::size_t i = start; i < end; ++i) {
    const Tool& tool = tools_.at(config_.tools[i]);
    list.push_back({{"name", tool.name()}, {"description", tool.description()}, {"inputSchema", tool.parameters().json()}});
  }
  Json result = {{"tools", list}};
  if (end < config_.tools.size()) result["nextCursor"] = std::to_string(end);
  return result;
}

Json McpServerCore::call_tool(const Json& params) {
  if (!params.is_object() || !params.contains("name") || !params["name"].is_string()) throw BadParams{"missing tool name"};
  std::string name = params["name"];
  auto it = tools_.find(name);
  if (it == tools_.end()) throw BadParams{"unknown tool: " + name};
  Json arguments = params.value("arguments", Json::object());
  sleep_latency();

  auto text_result = [](const std::string& text, bool error) {
    return Json{{"content", Json::array({{{"type", "text"}, {"text", text}}})}, {"isError", error}};
  };
  if (config_.error_tools.count(name)) return text_result("injected failure in " + name, true);
  ToolCallResult out = run_tool(it->second, arguments);
  if (!out.ok()) return text_result(out.error().message, true);
  return text_result(out.value().dump(), false);
}

std::optional<Json> McpServerCore::handle(Session& session, const Json& message, bool& drop) {
  drop = false;
  if (!message.is_object() || message.value("jsonrpc", "") != "2.0") {
    ++violations_;
    if (message.is_object() && message.contains("id")) return rpc_error(message["id"], -32600, "invalid request");
    return std::nullopt;
  }
  if (!message.contains("method")) return std::nullopt;  // a response to one of ours
  const Json& method_json = message["method"];
  if (!method_json.is_string()) {
    ++violations_;
    return message.contains("id") ? std::optional<Json>(rpc_error(message["id"], -32600, "invalid request")) : std::nullopt;
  }
  std::string method = method_json;
  Json params = message.value("params", Json::object());

  if (!message.contains("id")) {
    ++notifications_;
    if (method == "notifications/initialized") {
      std::lock_guard lock(session.mutex);
      if (!session.initialized) ++violations_;
      session.ready = true;
      drop = config_.drop_after_initialize;
    }
    return std::nullopt;
  }

  ++requests_;
  const Json& id = message["id"];
  if (method.rfind("notifications/", 0) == 0) ++violations_;
  {
    std::lock_guard lock(session.mutex);
    if (!session.seen_ids.insert(id.dump()).second) ++violations_;
    if (method != "initialize" && method != "ping" && !session.ready) ++violations_;
  }

  try {
    if (method == "initialize") {
      std::string asked = params.is_object() ? params.value("protocolVersion", "") : "";
      std::string version = config_.protocol_version;
      if (version.empty()) {
        version = kKnownVersions[std::size(kKnownVersions) - 1];
        for (const char* known : kKnownVersions) {
          if (asked == known) version = asked;
        }
      }
      {
        std::lock_guard lock(session.mutex);
        if (session.initialized) ++violations_;
        session.initialized = true;
      }
      return rpc_result(id, {{"protocolVersion", version},
                             {"capabilities", {{"tools", {{"listChanged", false}}}}},
                             {"serverInfo", {{"name", config_.server_name}, {"version", config_.server_version}}}});
    }
    if (method == "ping") return rpc_result(id, Json::object());
    if (method == "tools/list") return rpc_result(id, list_tools(params));
    if (method == "tools/call") return rpc_result(id, call_tool(params));
    if (method == "mock/stats") return rpc_result(id, stats().to_json());
  } catch (const BadParams& bad) {
    return rpc_error(id, -32602, bad.message);
  }
  return rpc_error(id, -32601, "method not found: " + method);
}

// ------------------------------------------------------------- HTTP server

namespace {

struct StreamSession {
  McpServerCore::Session state;
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::string> outbox;
  bool closed = false;

  void push(const Json& message) {
    {
      std::lock_guard lock(mutex);
      outbox.push_back(message.dump());
    }
    cv.notify_all();
  }
  void close() {
    {
      std::lock_guard lock(mutex);
      closed = true;
    }
    cv.notify_all();
  }
};

std::string format_event(const std::string& event, const std::string& data) {
  return "event: " + event + "\ndata: " + data + "\n\n";
}

}  // namespace

struct MockMcpServer::Impl {
  explicit Impl(MockMcpConfig c) : config(c), core(std::move(c)) {}

  MockMcpConfig config;
  McpServerCore core;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::once_flag stopped;
  std::atomic<bool> stopping{false};

  std::mutex mutex;
  std::uint64_t next_session = 1;
  std::map<std::string, std::shared_ptr<StreamSession>> sse_sessions;
  std::map<std::string, std::shared_ptr<McpServerCore::Session>> http_sessions;

  std::string new_session_id() {
    static thread_local std::mt19937_64 rng(std::random_device{}());
    char buf[40];
    std::snprintf(buf, sizeof buf, "%llu-%016llx", static_cast<unsigned long long>(next_session++),
                  static_cast<unsigned long long>(rng()));
    return buf;
  }

  void open_sse(const httplib::Request&, httplib::Response& res) {
    auto session = std::make_shared<StreamSession>();
    std::string id;
    {
      std::lock_guard lock(mutex);
      id = new_session_id();
      sse_sessions[id] = session;
    }
    bool sent_endpoint = false;
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, session, id, sent_endpoint](std::size_t, httplib::DataSink& sink) mutable {
          if (!sent_endpoint) {
            sent_endpoint = true;
            std::string first = format_event("endpoint", "/messages?session_id=" + id);
            return sink.write(first.data(), first.size());
          }
          std::deque<std::string> batch;
          bool closed;
          {
            std::unique_lock lock(session->mutex);
            session->cv.wait_for(lock, std::chrono::milliseconds(200),
                                 [&] { return !session->outbox.empty() || session->closed; });
            batch.swap(session->outbox);
            closed = session->closed || stopping.load();
          }
          for (const auto& message : batch) {
            std::string frame = format_event("message", message);
            if (!sink.write(frame.data(), frame.size())) return false;
          }
          if (closed) {
            sink.done();
            return true;
          }
          if (batch.empty()) {
            static const std::string keepalive = ": keep-alive\n\n";
            return sink.write(keepalive.data(), keepalive.size());
          }
          return true;
        },
        [this, id, session](bool) {
          session->close();
          std::lock_guard lock(mutex);
          sse_sessions.erase(id);
        });
  }

  void post_message(const httplib::Request& req, httplib::Response& res) {
    std::string id = req.get_param_value("session_id");
    std::shared_ptr<StreamSession> session;
    {
      std::lock_guard lock(mutex);
      auto it = sse_sessions.find(id);
      if (it != sse_sessions.end()) session = it->second;
    }
    if (!session) {
      res.status = 404;
      res.set_content("unknown session", "text/plain");
      return;
    }
    Json message = Json::parse(req.body, nullptr, false);
    if (message.is_discarded()) {
      res.status = 400;
      res.set_content("body is not JSON", "text/plain");
      return;
    }
    bool drop = false;
    if (auto reply = core.handle(session->state, message, drop)) session->push(*reply);
    if (drop) {
      session->close();
      std::lock_guard lock(mutex);
      sse_sessions.erase(id);
    }
    res.status = 202;
    res.set_content("Accepted", "text/plain");
  }

  void post_streamable(const httplib::Request& req, httplib::Response& res) {
    Json message = Json::parse(req.body, nullptr, false);
    if (message.is_discarded() || !message.is_object()) {
      res.status = 400;
      res.set_content("body must be one JSON-RPC message", "text/plain");
      return;
    }
    std::shared_ptr<McpServerCore::Session> session;
    std::string id = req.get_header_value("Mcp-Session-Id");
    bool fresh = false;
    if (id.empty()) {
      if (message.value("method", Json()) != "initialize") {
        res.status = 400;
        res.set_content("missing Mcp-Session-Id", "text/plain");
        return;
      }
      session = std::make_shared<McpServerCore::Session>();
      std::lock_guard lock(mutex);
      id = new_session_id();
      http_sessions[id] = session;
      fresh = true;
    } else {
      std::lock_guard lock(mutex);
      auto it = http_sessions.find(id);
      if (it != http_sessions.end()) session = it->second;
    }
    if (!session) {
      res.status = 404;
      res.set_content("unknown session", "text/plain");
      return;
    }

    bool drop = false;
    auto reply = core.handle(*session, message, drop);
    if (drop) {
      std::lock_guard lock(mutex);
      http_sessions.erase(id);
    }
    if (fresh) res.set_header("Mcp-Session-Id", id);
    if (!reply) {
      res.status = 202;
      return;
    }
    if (message.value("method", Json()) == "tools/call") {
      res.set_content(format_event("message", reply->dump()), "text/event-stream");
    } else {
      res.set_content(reply->dump(), "application/json");
    }
  }

  void delete_streamable(const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mutex);
    res.status = http_sessions.erase(req.get_header_value("Mcp-Session-Id")) ? 200 : 404;
  }
};

MockMcpServer::MockMcpServer(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

MockMcpServer::~MockMcpServer() { stop(); }

std::unique_ptr<MockMcpServer> MockMcpServer::start(MockMcpConfig config) {
  auto impl = std::make_unique<Impl>(std::move(config));
  Impl* self = impl.get();
  detail::tune_server(self->server);
  self->server.Get("/sse", [self](const httplib::Request& q, httplib::Response& r) { self->open_sse(q, r); });
  self->server.Post("/messages", [self](const httplib::Request& q, httplib::Response& r) { self->post_message(q, r); });
  self->server.Post("/mcp", [self](const httplib::Request& q, httplib::Response& r) { self->post_streamable(q, r); });
  self->server.Delete("/mcp", [self](const httplib::Request& q, httplib::Response& r) { self->delete_streamable(q, r); });

  self->port = detail::bind_server(self->server, self->config.host, self->config.port);
  self->thread = std::thread([self] { self->server.listen_after_bind(); });
  self->server.wait_until_ready();
  return std::unique_ptr<MockMcpServer>(new MockMcpServer(std::move(impl)));
}

std::string MockMcpServer::base_url() const {
  return "http://" + impl_->config.host + ":" + std::to_string(impl_->port);
}

McpTransportConfig MockMcpServer::transport(McpTransportKind kind) const {
  McpTransportConfig out;
  out.kind = kind;
  switch (kind) {
    case McpTransportKind::sse:
      out.url = sse_url();
      break;
    case McpTransportKind::streamable_http:
      out.url = streamable_url();
      break;
    case McpTransportKind::stdio:
      return mock_mcp_stdio_config(impl_->config);
  }
  return out;
}

McpServerStats MockMcpServer::stats() const { return impl_->core.stats(); }

std::size_t MockMcpServer::open_sessions() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->sse_sessions.size() + impl_->http_sessions.size();
}

void MockMcpServer::stop() {
  std::call_once(impl_->stopped, [this] {
    impl_->stopping = true;
    {
      std::lock_guard lock(impl_->mutex);
      for (auto& [id, session] : impl_->sse_sessions) session->close();
    }
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
  });
}

// ------------------------------------------------------------ stdio server

int run_mcp_stdio_server(const MockMcpConfig& config, int in_fd, int out_fd) {
  McpServerCore core(config);
  McpServerCore::Session session;
  std::mutex write_mutex;
  bool write_failed = false;

  auto write_line = [&](const Json& message) {
    std::string line = message.dump() + "\n";
    std::lock_guard lock(write_mutex);
    std::size_t off = 0;
    while (off < line.size() && !write_failed) {
      ssize_t n = ::write(out_fd, line.data() + off, line.size() - off);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        write_failed = true;
        break;
      }
      off += static_cast<std::size_t>(n);
    }
  };

  std::mutex inflight_mutex;
  std::condition_variable inflight_cv;
  std::size_t inflight = 0;
  auto finish = [&] {
    std::lock_guard lock(inflight_mutex);
    --inflight;
    inflight_cv.notify_all();
  };

  std::string buffer;
  char chunk[65536];
  bool dropped = false;
  while (!dropped) {
    ssize_t n = ::read(in_fd, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t newline;
    while (!dropped && (newline = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, newline);
      buffer.erase(0, newline + 1);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      Json message = Json::parse(line, nullptr, false);
      if (message.is_discarded()) {
        write_line(rpc_error(nullptr, -32700, "parse error"));
        continue;
      }
      if (message.is_object() && message.value("method", Json()) == "tools/call" && message.contains("id")) {
        {
          std::lock_guard lock(inflight_mutex);
          ++inflight;
        }
        std::thread([&, message] {
          bool drop = false;
          if (auto reply = core.handle(session, message, drop)) write_line(*reply);
          finish();
        }).detach();
        continue;
      }
      bool drop = false;
      if (auto reply = core.handle(session, message, drop)) write_line(*reply);
      dropped = drop;
    }
  }
  std::unique_lock lock(inflight_mutex);
  inflight_cv.wait(lock, [&] { return inflight == 0; });
  return 0;
}

// ----------------------------------------------------------------- helpers

std::string mock_binary_path() {
  namespace fs = std::filesystem;
  if (const char* env = std::getenv("TOOLREG_MOCK_BINARY"); env && *env) return env;
#ifdef TOOLREG_MOCK_BINARY_DEFAULT
  if (fs::exists(TOOLREG_MOCK_BINARY_DEFAULT)) return TOOLREG_MOCK_BINARY_DEFAULT;
#endif
  std::error_code ec;
  fs::path self = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) {
    fs::path sibling = self.parent_path() / "toolreg-mock";
    if (fs::exists(sibling)) return sibling.string();
  }
  return "toolreg-mock";
}

McpTransportConfig mock_mcp_stdio_config(const MockMcpConfig& config) {
  std::vector<std::string> args = {"mcp", "--stdio"};
  for (auto& a : config.to_args()) args.push_back(std::move(a));
  return McpTransportConfig::stdio(mock_binary_path(), std::move(args));
}

MockMcpEndpoint start_mock_mcp(McpTransportKind kind, const MockMcpConfig& config) {
  if (kind == McpTransportKind::stdio) return {mock_mcp_stdio_config(config), nullptr};
  std::shared_ptr<MockMcpServer> server = MockMcpServer::start(config);
  McpTransportConfig transport = server->transport(kind);
  return {std::move(transport), std::move(server)};
}

}  // namespace toolreg::testkit
