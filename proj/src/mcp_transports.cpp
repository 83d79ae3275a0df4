#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <thread>

#include "http_util.hpp"
#include "mcp_transport.hpp"

extern char** environ;

namespace toolreg::detail {

namespace {

httplib::Headers to_headers(const std::map<std::string, std::string>& headers) {
  httplib::Headers out;
  for (const auto& [k, v] : headers) out.emplace(k, v);
  return out;
}

void for_each_message(const Json& payload, const McpTransport::MessageFn& fn) {
  if (payload.is_array()) {
    for (const auto& m : payload) fn(m);
  } else {
    fn(payload);
  }
}

// ------------------------------------------------------------------ stdio

class StdioTransport : public McpTransport {
 public:
  explicit StdioTransport(McpTransportConfig config) : config_(std::move(config)) {}
  ~StdioTransport() override {
    close();
    if (reader_.joinable()) reader_.detach();  // destroyed from its own reader
  }

  void start(MessageFn on_message, ClosedFn on_closed) override {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
      throw ConnectError(std::string("socketpair: ") + std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, sv[1], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, sv[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclosefrom_np(&actions, STDERR_FILENO + 1);

    std::vector<std::string> argv_store{config_.command};
    argv_store.insert(argv_store.end(), config_.args.begin(), config_.args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    argv.push_back(nullptr);

    std::map<std::string, std::string> env_map;
    for (char** e = environ; e && *e; ++e) {
      std::string entry(*e);
      auto eq = entry.find('=');
      if (eq != std::string::npos) env_map[entry.substr(0, eq)] = entry.substr(eq + 1);
    }
    for (const auto& [k, v] : config_.env) env_map[k] = v;
    std::vector<std::string> env_store;
    for (const auto& [k, v] : env_map) env_store.push_back(k + "=" + v);
    std::vector<char*> envp;
    for (auto& e : env_store) envp.push_back(e.data());
    envp.push_back(nullptr);

    pid_t pid = 0;
    int rc = ::posix_spawnp(&pid, config_.command.c_str(), &actions, nullptr, argv.data(), envp.data());
    posix_spawn_file_actions_destroy(&actions);
    ::close(sv[1]);
    if (rc != 0) {
      ::close(sv[0]);
      throw ConnectError("cannot start MCP server \"" + config_.command + "\": " + std::strerror(rc));
    }
    pid_ = pid;
    fd_ = sv[0];
    reader_ = std::thread([this, keep = shared_from_this(), on_message = std::move(on_message),
                           on_closed = std::move(on_closed)] {
      read_loop(on_message, on_closed);
    });
  }

  void send(const Json& message) override {
    std::string line = message.dump() + "\n";
    std::lock_guard lock(write_mutex_);
    if (fd_ < 0 || write_closed_) throw TransportClosed("MCP stdio transport is closed");
    std::size_t off = 0;
    while (off < line.size()) {
      ssize_t n = ::send(fd_, line.data() + off, line.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportClosed(std::string("MCP server stdin closed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  void close() override {
    {
      std::lock_guard lock(write_mutex_);
      if (closing_) return;
      closing_ = true;
      if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
      write_closed_ = true;
    }
    if (pid_ > 0) {
      int status = 0;
      bool exited = false;
      for (int i = 0; i < 100 && !exited; ++i) {
        exited = ::waitpid(pid_, &status, WNOHANG) == pid_;
        if (!exited) std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      if (!exited) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
      }
      pid_ = -1;
    }
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    if (reader_.joinable()) {
      if (reader_.get_id() == std::this_thread::get_id()) {
        reader_.detach();
      } else {
        reader_.join();
      }
    }
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  void read_loop(const MessageFn& on_message, const ClosedFn& on_closed) {
    std::string buffer;
    char chunk[65536];
    while (true) {
      ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t start = 0;
      for (auto nl = buffer.find('\n'); nl != std::string::npos; nl = buffer.find('\n', start)) {
        std::string line = buffer.substr(start, nl - start);
        start = nl + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          for_each_message(Json::parse(line), on_message);
        } catch (const Json::parse_error&) {
          // not a protocol line
        }
      }
      buffer.erase(0, start);
    }
    bool expected;
    {
      std::lock_guard lock(write_mutex_);
      expected = closing_;
      write_closed_ = true;
    }
    if (!expected) on_closed("MCP server process closed its output");
  }

  McpTransportConfig config_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::mutex write_mutex_;
  bool write_closed_ = false;
  bool closing_ = false;
  std::thread reader_;
};

// -------------------------------------------------------------------- sse

class SseTransport : public McpTransport {
 public:
  explicit SseTransport(McpTransportConfig config) : config_(std::move(config)), url_(parse_url(config_.url)) {}
  ~SseTransport() override {
    close();
    if (reader_.joinable()) reader_.detach();  // destroyed from its own reader
  }

  void start(MessageFn on_message, ClosedFn on_closed) override {
    stream_ = std::make_unique<httplib::Client>(url_.origin());
    auto ct = config_.connect_timeout.count();
    stream_->set_connection_timeout(ct / 1000, (ct % 1000) * 1000);
    stream_->set_read_timeout(24 * 3600, 0);
    stream_->set_tcp_nodelay(true);
    stream_->set_keep_alive(false);

    reader_ = std::thread([this, keep = shared_from_this(), on_message = std::move(on_message),
                           on_closed = std::move(on_closed)] {
      SseParser parser;
      httplib::Headers headers = to_headers(config_.headers);
      headers.emplace("Accept", "text/event-stream");
      int status = 0;
      auto res = stream_->Get(
          url_.target, headers,
          [&](const httplib::Response& response) {
            status = response.status;
            return response.status == 200;
          },
          [&](const char* data, std::size_t length) {
            if (stopping_) return false;
            parser.feed(std::string_view(data, length), [&](const std::string& event, const std::string& payload) {
              if (event == "endpoint") {
                std::lock_guard lock(mutex_);
                endpoint_ = resolve_url(url_, payload);
                cv_.notify_all();
              } else if (event == "message") {
                try {
                  for_each_message(Json::parse(payload), on_message);
                } catch (const Json::parse_error&) {
                }
              }
            });
            return !stopping_;
          });
      std::string reason;
      if (status != 0 && status != 200) {
        reason = "MCP event stream answered HTTP " + std::to_string(status);
      } else if (!res) {
        reason = "MCP event stream failed: " + describe(res.error());
      } else {
        reason = "MCP event stream ended";
      }
      bool was_open;
      {
        std::lock_guard lock(mutex_);
        was_open = endpoint_.has_value();
        ended_ = true;
        end_reason_ = reason;
        cv_.notify_all();
      }
      if (was_open && !stopping_) on_closed(reason);
    });

    std::unique_lock lock(mutex_);
    bool ready = cv_.wait_for(lock, config_.connect_timeout, [&] { return endpoint_.has_value() || ended_; });
    if (endpoint_) {
      posts_ = std::make_unique<ClientPool>(endpoint_->origin(), post_options());
      return;
    }
    std::string reason = ended_ ? end_reason_ : "no endpoint event from " + config_.url;
    lock.unlock();
    close();
    if (!ready) throw TimeoutError("timed out waiting for the MCP endpoint event from " + config_.url);
    throw ConnectError(reason);
  }

  void send(const Json& message) override {
    Url endpoint;
    {
      std::lock_guard lock(mutex_);
      if (!endpoint_ || ended_ || stopping_) throw TransportClosed(ended_ ? end_reason_ : "MCP SSE transport is closed");
      endpoint = *endpoint_;
    }
    auto lease = posts_->acquire();
    auto res = lease->Post(endpoint.target, message.dump(), "application/json");
    if (!res) {
      lease.discard();
      throw TransportClosed("MCP message POST failed: " + describe(res.error()));
    }
    if (res->status == 404) throw TransportClosed("MCP server no longer knows this session");
    if (res->status < 200 || res->status >= 300) {
      throw TransportError("MCP message POST answered HTTP " + std::to_string(res->status) + ": " + excerpt(res->body));
    }
  }

  void close() override {
    if (stopping_.exchange(true)) return;
    if (stream_) stream_->stop();
    if (reader_.joinable()) {
      if (reader_.get_id() == std::this_thread::get_id()) {
        reader_.detach();
      } else {
        reader_.join();
      }
    }
  }

 private:
  ClientOptions post_options() const {
    ClientOptions o;
    o.connect_timeout = config_.connect_timeout;
    o.read_timeout = config_.request_timeout;
    o.headers = to_headers(config_.headers);
    return o;
  }

  McpTransportConfig config_;
  Url url_;
  std::unique_ptr<httplib::Client> stream_;
  std::unique_ptr<ClientPool> posts_;
  std::thread reader_;
  std::atomic<bool> stopping_{false};
  std::mutex mutex_;
  std::condition_variable cv_;
  std::optional<Url> endpoint_;
  bool ended_ = false;
  std::string end_reason_;
};

// -------------------------------------------------------- streamable http

class StreamableHttpTransport : public McpTransport {
 public:
  explicit StreamableHttpTransport(McpTransportConfig config)
      : config_(std::move(config)), url_(parse_url(config_.url)) {
    ClientOptions o;
    o.connect_timeout = config_.connect_timeout;
    o.read_timeout = config_.request_timeout;
    o.headers = to_headers(config_.headers);
    pool_ = std::make_unique<ClientPool>(url_.origin(), o);
  }
  ~StreamableHttpTransport() override { close(); }

  void start(MessageFn on_message, ClosedFn on_closed) override {
    on_message_ = std::move(on_message);
    on_closed_ = std::move(on_closed);
  }

  void send(const Json& message) override {
    httplib::Headers headers;
    headers.emplace("Accept", "application/json, text/event-stream");
    bool established;
    {
      std::lock_guard lock(mutex_);
      if (closed_) throw TransportClosed("MCP streamable HTTP transport is closed");
      established = !session_id_.empty();
      if (established) headers.emplace("Mcp-Session-Id", session_id_);
    }
    auto lease = pool_->acquire();
    auto res = lease->Post(url_.target, headers, message.dump(), "application/json");
    if (!res) {
      lease.discard();
      std::string why = "MCP POST to " + config_.url + " failed: " + describe(res.error());
      if (!established) throw ConnectError(why);
      drop(why);
      throw TransportClosed(why);
    }
    if (res->status == 404 && established) {
      drop("MCP server ended the session");
      throw TransportClosed("MCP server ended the session");
    }
    if (res->status < 200 || res->status >= 300) {
      std::string why = "MCP POST answered HTTP " + std::to_string(res->status) + ": " + excerpt(res->body);
      if (!established) throw ConnectError(why);
      throw TransportError(why);
    }
    if (res->has_header("Mcp-Session-Id")) {
      std::lock_guard lock(mutex_);
      session_id_ = res->get_header_value("Mcp-Session-Id");
    }
    if (res->status == 202 || res->body.empty()) return;
    std::string content_type = res->get_header_value("Content-Type");
    if (content_type.rfind("text/event-stream", 0) == 0) {
      SseParser parser;
      parser.feed(res->body, [&](const std::string& event, const std::string& data) {
        if (event != "message") return;
        try {
          for_each_message(Json::parse(data), on_message_);
        } catch (const Json::parse_error&) {
        }
      });
      return;
    }
    try {
      for_each_message(Json::parse(res->body), on_message_);
    } catch (const Json::parse_error&) {
      throw TransportError("MCP server sent a body that is not JSON: " + excerpt(res->body));
    }
  }

  void close() override {
    std::string session;
    {
      std::lock_guard lock(mutex_);
      if (closed_) return;
      closed_ = true;
      session = session_id_;
    }
    if (session.empty()) return;
    auto lease = pool_->acquire();
    auto timeout = std::min<long long>(config_.connect_timeout.count(), 2000);
    lease->set_read_timeout(timeout / 1000, (timeout % 1000) * 1000);
    lease->Delete(url_.target, httplib::Headers{{"Mcp-Session-Id", session}});
    lease.discard();
  }

 private:
  void drop(const std::string& reason) {
    {
      std::lock_guard lock(mutex_);
      if (closed_) return;
      closed_ = true;
    }
    if (on_closed_) on_closed_(reason);
  }

  McpTransportConfig config_;
  Url url_;
  std::unique_ptr<ClientPool> pool_;
  MessageFn on_message_;
  ClosedFn on_closed_;
  std::mutex mutex_;
  std::string session_id_;
  bool closed_ = false;
};

}  // namespace

std::shared_ptr<McpTransport> make_mcp_transport(const McpTransportConfig& config) {
  switch (config.kind) {
    case McpTransportKind::stdio: return std::make_shared<StdioTransport>(config);
    case McpTransportKind::sse: return std::make_shared<SseTransport>(config);
    case McpTransportKind::streamable_http: return std::make_shared<StreamableHttpTransport>(config);
  }
  throw std::invalid_argument("unknown MCP transport kind");
}

}  // namespace toolreg::detail
