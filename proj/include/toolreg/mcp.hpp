#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "toolreg/registry.hpp"

namespace toolreg {

enum class McpTransportKind { stdio, sse, streamable_http };

std::string_view to_string(McpTransportKind kind);

struct McpTransportConfig {
  McpTransportKind kind = McpTransportKind::stdio;
  // stdio
  std::string command;
  std::vector<std::string> args;
  std::map<std::string, std::string> env;
  // sse, streamable_http
  std::string url;
  std::map<std::string, std::string> headers;

  std::chrono::milliseconds connect_timeout{10'000};
  std::chrono::milliseconds request_timeout{30'000};

  static McpTransportConfig stdio(std::string command, std::vector<std::string> args = {},
                                  std::map<std::string, std::string> env = {});
  /// sse when the URL path ends in "/sse", streamable_http otherwise.
  static McpTransportConfig from_url(const std::string& url);

  /// Throws std::invalid_argument when fields of the other kind are set or
  /// the ones this kind needs are missing.
  void check() const;
};

struct McpToolDescriptor {
  std::string name;
  std::string description;
  Json input_schema;
};

/// Protocol revision this client speaks; servers answering with it or an
/// older known revision are accepted.
inline constexpr const char* kMcpProtocolVersion = "2025-03-26";

namespace detail {
class McpTransport;
}

/// One initialized connection to an MCP server. Requests may be issued from
/// many threads at once; responses are matched by id.
class McpSession : public std::enable_shared_from_this<McpSession> {
 public:
  /// Dials, runs the initialize handshake and sends
  /// notifications/initialized. Throws ConnectError, HandshakeError,
  /// TimeoutError.
  static std::shared_ptr<McpSession> connect(const McpTransportConfig& config);
  ~McpSession();

  const std::string& server_name() const { return server_name_; }
  const std::string& server_version() const { return server_version_; }
  const std::string& protocol_version() const { return protocol_version_; }
  const McpTransportConfig& config() const { return config_; }

  /// Follows nextCursor until the server stops returning one. Throws
  /// RpcError, TimeoutError, TransportClosed.
  std::vector<McpToolDescriptor> list_tools();

  /// Raw tools/call result object.
  Json call_tool(const std::string& name, const Json& arguments);

  /// Sends a request and waits for its result. Throws RpcError,
  /// TimeoutError, TransportClosed.
  Json request(const std::string& method, const Json& params);
  void notify(const std::string& method, const Json& params);

  void close();
  bool closed() const;

  /// Ids issued so far; strictly increasing from 1.
  std::int64_t last_request_id() const { return next_id_.load() - 1; }

 private:
  explicit McpSession(McpTransportConfig config);

  struct Pending {
    bool done = false;
    Json message;
    std::string failure;
  };

  void open_transport();
  void handshake();
  void on_message(const Json& message);
  void on_closed(const std::string& reason);
  Json send_and_wait(const std::string& method, const Json& params);

  McpTransportConfig config_;
  std::string server_name_;
  std::string server_version_;
  std::string protocol_version_;
  std::atomic<std::int64_t> next_id_{1};

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::shared_ptr<detail::McpTransport> transport_;
  std::uint64_t generation_ = 0;  // bumped on every (re)connect
  bool transport_down_ = false;
  bool closed_ = false;
  bool reconnect_used_ = false;
  std::map<std::int64_t, std::shared_ptr<Pending>> pending_;
  std::mutex reconnect_mutex_;
};

/// Tool calling `desc.name` over `session`. The tool holds the session
/// weakly; calls made after the session is gone fail with a transport error.
Tool mcp_tool_from_descriptor(const McpToolDescriptor& desc, const std::shared_ptr<McpSession>& session);

/// Descriptor input schema as a ParameterSchema: local $refs inlined,
/// `type: object` supplied when missing. Throws InvalidSchema.
ParameterSchema normalize_mcp_schema(const Json& input_schema);

/// tools/call result to a tool value: one text item becomes its text
/// (parsed as JSON when it is JSON), several items a list. Throws
/// std::runtime_error with the joined text when isError is set.
Json transform_mcp_content(const Json& result);

/// Connects, lists, wraps and registers every tool. The session is attached
/// to the registry and lives as long as it does. The namespace, when
/// requested, is the server name in snake_case.
std::size_t register_from_mcp(ToolRegistry& registry, const McpTransportConfig& config, bool with_namespace = false);
std::size_t register_from_mcp(ToolRegistry& registry, const std::string& url, bool with_namespace = false);

}  // namespace toolreg
