#pragma once

#include <functional>
#include <memory>
#include <string>

#include "toolreg/mcp.hpp"

namespace toolreg::detail {

/// Carries JSON-RPC messages to and from one MCP server. Incoming messages
/// and the close notice arrive on the callbacks, possibly from a reader
/// thread and possibly from inside send(). A reader thread holds a reference
/// to its transport, so the last owner may release it from a callback.
class McpTransport : public std::enable_shared_from_this<McpTransport> {
 public:
  using MessageFn = std::function<void(const Json& message)>;
  using ClosedFn = std::function<void(const std::string& reason)>;

  virtual ~McpTransport() = default;

  /// Blocks until messages can flow. Throws ConnectError, TimeoutError.
  virtual void start(MessageFn on_message, ClosedFn on_closed) = 0;
  /// Throws TransportClosed when the peer is gone, TransportError otherwise.
  virtual void send(const Json& message) = 0;
  /// Idempotent; does not invoke on_closed.
  virtual void close() = 0;
};

std::shared_ptr<McpTransport> make_mcp_transport(const McpTransportConfig& config);

}  // namespace toolreg::detail
