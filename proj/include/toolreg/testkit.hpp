#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolreg/mcp.hpp"
#include "toolreg/tool.hpp"

namespace toolreg::testkit {

/// Added before each response: `fixed` plus a uniform draw from [0, jitter].
struct Latency {
  std::chrono::milliseconds fixed{0};
  std::chrono::milliseconds jitter{0};
};

// ------------------------------------------------------------ OpenAPI mock

struct MockOpenApiConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  Latency latency;
  /// Route ("/divide") -> status answered instead of computing.
  std::map<std::string, int> fault_status;
  /// When set, arithmetic routes require "Authorization: Bearer <token>".
  std::optional<std::string> bearer_token;
  std::uint64_t seed = 1;
};

/// The "Calc Service" OpenAPI 3.1 document the mock serves.
const Json& calculator_openapi_spec();

/// HTTP calculator: POST /add, /subtract, /multiply, /divide with
/// {"a","b"} answering {"result": x}; GET /openapi.json serves the spec.
class MockOpenApiServer {
 public:
  /// Throws BindError.
  static std::unique_ptr<MockOpenApiServer> start(MockOpenApiConfig config = {});
  ~MockOpenApiServer();

  std::string base_url() const;
  int port() const;
  void set_fault(const std::string& route, std::optional<int> status);
  std::uint64_t requests_served() const;
  /// Idempotent.
  void stop();

  struct Impl;

 private:
  explicit MockOpenApiServer(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------- MCP mock

struct MockMcpConfig {
  std::string server_name = "mock-mcp";
  std::string server_version = "1.0.0";
  /// Subset of add, subtract, multiply, divide, in listing order.
  std::vector<std::string> tools = {"add", "subtract", "multiply", "divide"};
  /// tools/list page size; 0 returns everything at once.
  std::size_t page_size = 0;
  /// Tools that always answer with isError.
  std::set<std::string> error_tools;
  /// Drop the connection right after notifications/initialized.
  bool drop_after_initialize = false;
  Latency latency;
  /// Protocol version answered to initialize; empty echoes a supported one.
  std::string protocol_version;
  std::string host = "127.0.0.1";
  int port = 0;
  std::uint64_t seed = 1;

  /// Command-line flags understood by `toolreg-mock mcp`.
  std::vector<std::string> to_args() const;
};

struct McpServerStats {
  std::uint64_t requests = 0;
  std::uint64_t notifications = 0;
  std::uint64_t list_pages = 0;
  std::uint64_t violations = 0;
  Json to_json() const;
};

namespace detail {
class Jitter;
}

/// Transport-independent MCP server logic shared by every mock transport.
class McpServerCore {
 public:
  explicit McpServerCore(MockMcpConfig config);
  ~McpServerCore();

  /// Per-connection protocol state.
  struct Session {
    std::mutex mutex;
    bool initialized = false;
    bool ready = false;
    std::set<std::string> seen_ids;
  };

  /// Response for a request, nothing for a notification. Sets `drop` when
  /// the connection should be cut after this message.
  std::optional<Json> handle(Session& session, const Json& message, bool& drop);

  McpServerStats stats() const;
  const MockMcpConfig& config() const { return config_; }

 private:
  Json call_tool(const Json& params);
  Json list_tools(const Json& params);
  void sleep_latency();

  MockMcpConfig config_;
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> notifications_{0};
  std::atomic<std::uint64_t> list_pages_{0};
  std::atomic<std::uint64_t> violations_{0};
  std::unique_ptr<detail::Jitter> jitter_;
  std::map<std::string, Tool> tools_;
};

/// Serves MCP over HTTP: GET /sse + POST /messages (sse) and POST /mcp
/// (streamable_http), from the same tool table.
class MockMcpServer {
 public:
  /// Throws BindError.
  static std::unique_ptr<MockMcpServer> start(MockMcpConfig config = {});
  ~MockMcpServer();

  std::string base_url() const;
  std::string sse_url() const { return base_url() + "/sse"; }
  std::string streamable_url() const { return base_url() + "/mcp"; }
  McpTransportConfig transport(McpTransportKind kind) const;
  McpServerStats stats() const;
  std::size_t open_sessions() const;
  void stop();

  struct Impl;

 private:
  explicit MockMcpServer(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Speaks MCP over newline-delimited JSON on the given descriptors until
/// end of input. Answers the extra method "mock/stats" with its counters.
int run_mcp_stdio_server(const MockMcpConfig& config, int in_fd = 0, int out_fd = 1);

/// Path of the toolreg-mock executable: $TOOLREG_MOCK_BINARY, else the
/// build-tree location, else a sibling of the running executable.
std::string mock_binary_path();

/// Launch description for the stdio mock.
McpTransportConfig mock_mcp_stdio_config(const MockMcpConfig& config = {});

/// Handle for whichever transport was asked for; `server` is empty for
/// stdio, where `transport` tells how to spawn it.
struct MockMcpEndpoint {
  McpTransportConfig transport;
  std::shared_ptr<MockMcpServer> server;
};
MockMcpEndpoint start_mock_mcp(McpTransportKind kind, const MockMcpConfig& config = {});

// ----------------------------------------------------------- workload tools

/// Sleeps `delay`, then returns its arguments. Transferable.
Tool make_latency_tool(std::chrono::milliseconds delay, const std::string& name = "latency");

/// Same contract, implemented as an asynchronous handler using a loop timer.
Tool make_async_latency_tool(std::chrono::milliseconds delay, const std::string& name = "async_latency");

/// Kills the process it runs in with SIGKILL. Only for isolated mode.
Tool make_crash_tool(const std::string& name = "crash");

/// Increments a live in-process counter and returns the new value. Holds
/// process state, so it cannot be sent to an isolated worker.
Tool make_counter_tool(std::shared_ptr<std::atomic<std::int64_t>> counter, const std::string& name = "counter");

/// Registers the handler factories behind the transferable tools above.
void register_testkit_factories();

}  // namespace toolreg::testkit
