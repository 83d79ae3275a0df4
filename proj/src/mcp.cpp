#include "toolreg/mcp.hpp"

#include <regex>

#include "http_util.hpp"
#include "mcp_transport.hpp"
#include "schema_refs.hpp"

namespace toolreg {

std::string_view to_string(McpTransportKind kind) {
  switch (kind) {
    case McpTransportKind::stdio: return "stdio";
    case McpTransportKind::sse: return "sse";
    case McpTransportKind::streamable_http: return "streamable_http";
  }
  return "stdio";
}

McpTransportConfig McpTransportConfig::stdio(std::string command, std::vector<std::string> args,
                                             std::map<std::string, std::string> env) {
  McpTransportConfig c;
  c.kind = McpTransportKind::stdio;
  c.command = std::move(command);
  c.args = std::move(args);
  c.env = std::move(env);
  return c;
}

McpTransportConfig McpTransportConfig::from_url(const std::string& url) {
  McpTransportConfig c;
  c.url = url;
  std::string path = detail::parse_url(url).path();
  while (path.size() > 1 && path.back() == '/') path.pop_back();
  bool sse = path.size() >= 4 && path.compare(path.size() - 4, 4, "/sse") == 0;
  c.kind = sse ? McpTransportKind::sse : McpTransportKind::streamable_http;
  return c;
}

void McpTransportConfig::check() const {
  if (connect_timeout.count() <= 0 || request_timeout.count() <= 0) {
    throw std::invalid_argument("MCP timeouts must be positive");
  }
  if (kind == McpTransportKind::stdio) {
    if (command.empty()) throw std::invalid_argument("stdio MCP transport needs a command");
    if (!url.empty() || !headers.empty()) throw std::invalid_argument("stdio MCP transport takes no URL or headers");
    return;
  }
  if (url.empty()) throw std::invalid_argument(std::string(to_string(kind)) + " MCP transport needs a URL");
  if (!command.empty() || !args.empty() || !env.empty()) {
    throw std::invalid_argument(std::string(to_string(kind)) + " MCP transport takes no command, args or env");
  }
  detail::parse_url(url);
}

// ------------------------------------------------------------------ session

namespace {

bool acceptable_version(const std::string& version) {
  static const std::regex date_re(R"(\d{4}-\d{2}-\d{2})");
  return std::regex_match(version, date_re) && version <= std::string(kMcpProtocolVersion);
}

}  // namespace

McpSession::McpSession(McpTransportConfig config) : config_(std::move(config)) {}

McpSession::~McpSession() { close(); }

std::shared_ptr<McpSession> McpSession::connect(const McpTransportConfig& config) {
  try {
    config.check();
  } catch (const std::invalid_argument& e) {
    throw ConnectError(e.what());
  }
  std::shared_ptr<McpSession> session(new McpSession(config));
  session->open_transport();
  session->handshake();
  return session;
}

void McpSession::open_transport() {
  auto transport = detail::make_mcp_transport(config_);
  std::uint64_t generation;
  {
    std::lock_guard lock(mutex_);
    generation = ++generation_;
    transport_ = transport;
    transport_down_ = false;
  }
  std::weak_ptr<McpSession> weak = weak_from_this();
  transport->start(
      [weak](const Json& message) {
        if (auto self = weak.lock()) self->on_message(message);
      },
      [weak, generation](const std::string& reason) {
        auto self = weak.lock();
        if (!self) return;
        {
          std::lock_guard lock(self->mutex_);
          if (self->generation_ != generation) return;
        }
        self->on_closed(reason);
      });
}

void McpSession::handshake() {
  Json params = {{"protocolVersion", kMcpProtocolVersion},
                 {"capabilities", Json::object()},
                 {"clientInfo", {{"name", "toolreg"}, {"version", "1.0.0"}}}};
  Json result;
  try {
    result = send_and_wait("initialize", params);
  } catch (const RpcError& e) {
    throw HandshakeError(std::string("initialize rejected: ") + e.what());
  }
  if (!result.is_object()) throw HandshakeError("initialize result is not an object");
  auto version = result.find("protocolVersion");
  if (version == result.end() || !version->is_string()) throw HandshakeError("initialize result has no protocolVersion");
  if (!acceptable_version(version->get<std::string>())) {
    throw HandshakeError("server protocol version " + version->get<std::string>() + " is newer than supported " +
                         kMcpProtocolVersion);
  }
  protocol_version_ = version->get<std::string>();
  Json info = result.value("serverInfo", Json::object());
  server_name_ = info.is_object() ? info.value("name", "") : "";
  server_version_ = info.is_object() ? info.value("version", "") : "";
  notify("notifications/initialized", Json::object());
}

void McpSession::on_message(const Json& message) {
  if (!message.is_object()) return;
  auto id = message.find("id");
  bool response = message.contains("result") || message.contains("error");
  if (id != message.end() && response) {
    if (!id->is_number_integer()) return;
    std::lock_guard lock(mutex_);
    auto it = pending_.find(id->get<std::int64_t>());
    if (it == pending_.end()) return;
    it->second->done = true;
    it->second->message = message;
    pending_.erase(it);
    cv_.notify_all();
    return;
  }
  if (id != message.end() && message.contains("method")) {
    // Requests from the server: answer ping, refuse the rest.
    Json reply = {{"jsonrpc", "2.0"}, {"id", *id}};
    if (message["method"] == "ping") {
      reply["result"] = Json::object();
    } else {
      reply["error"] = {{"code", -32601}, {"message", "method not found"}};
    }
    std::shared_ptr<detail::McpTransport> transport;
    {
      std::lock_guard lock(mutex_);
      transport = transport_;
    }
    try {
      if (transport) transport->send(reply);
    } catch (const std::exception&) {
    }
  }
}

void McpSession::on_closed(const std::string& reason) {
  std::lock_guard lock(mutex_);
  transport_down_ = true;
  for (auto& [id, p] : pending_) {
    p->done = true;
    p->failure = reason;
  }
  pending_.clear();
  cv_.notify_all();
}

Json McpSession::send_and_wait(const std::string& method, const Json& params) {
  std::int64_t id = next_id_.fetch_add(1);
  auto pending = std::make_shared<Pending>();
  std::shared_ptr<detail::McpTransport> transport;
  {
    std::lock_guard lock(mutex_);
    if (closed_) throw TransportClosed("MCP session is closed");
    if (transport_down_ || !transport_) throw TransportClosed("MCP transport is down");
    pending_[id] = pending;
    transport = transport_;
  }
  Json message = {{"jsonrpc", "2.0"}, {"id", id}, {"method", method}, {"params", params}};
  try {
    transport->send(message);
  } catch (...) {
    std::lock_guard lock(mutex_);
    pending_.erase(id);
    throw;
  }

  auto timeout = method == "initialize" ? config_.connect_timeout : config_.request_timeout;
  std::unique_lock lock(mutex_);
  if (!cv_.wait_for(lock, timeout, [&] { return pending->done; })) {
    pending_.erase(id);
    throw TimeoutError(method + " got no response within " + std::to_string(timeout.count()) + " ms");
  }
  if (!pending->failure.empty()) throw TransportClosed(pending->failure);
  const Json& reply = pending->message;
  if (auto err = reply.find("error"); err != reply.end()) {
    int code = err->is_object() ? err->value("code", 0) : 0;
    std::string text = err->is_object() ? err->value("message", "") : err->dump();
    throw RpcError(code, text);
  }
  return reply["result"];
}

Json McpSession::request(const std::string& method, const Json& params) {
  std::uint64_t seen;
  {
    std::lock_guard lock(mutex_);
    seen = generation_;
  }
  try {
    return send_and_wait(method, params);
  } catch (const TransportClosed&) {
    {
      std::lock_guard lock(mutex_);
      if (closed_) throw;
    }
    std::lock_guard reconnect(reconnect_mutex_);
    bool reconnected_by_other;
    {
      std::lock_guard lock(mutex_);
      if (closed_) throw;
      reconnected_by_other = generation_ != seen && !transport_down_;
      if (!reconnected_by_other && reconnect_used_) throw;
      if (!reconnected_by_other) reconnect_used_ = true;
    }
    if (!reconnected_by_other) {
      std::shared_ptr<detail::McpTransport> old;
      {
        std::lock_guard lock(mutex_);
        old = transport_;
      }
      if (old) old->close();
      try {
        open_transport();
        handshake();
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex_);
        transport_down_ = true;
        throw TransportClosed(std::string("MCP reconnect failed: ") + e.what());
      }
      std::lock_guard lock(mutex_);
      reconnect_used_ = false;
    }
  }
  return send_and_wait(method, params);
}

void McpSession::notify(const std::string& method, const Json& params) {
  std::shared_ptr<detail::McpTransport> transport;
  {
    std::lock_guard lock(mutex_);
    if (closed_) throw TransportClosed("MCP session is closed");
    if (transport_down_ || !transport_) throw TransportClosed("MCP transport is down");
    transport = transport_;
  }
  transport->send(Json{{"jsonrpc", "2.0"}, {"method", method}, {"params", params}});
}

std::vector<McpToolDescriptor> McpSession::list_tools() {
  std::vector<McpToolDescriptor> out;
  std::optional<std::string> cursor;
  for (int page = 0; page < 10'000; ++page) {
    Json params = Json::object();
    if (cursor) params["cursor"] = *cursor;
    Json result = request("tools/list", params);
    if (!result.is_object()) throw RpcError(-32603, "tools/list result is not an object");
    for (const auto& t : result.value("tools", Json::array())) {
      if (!t.is_object() || !t.contains("name") || !t["name"].is_string()) continue;
      McpToolDescriptor d;
      d.name = t["name"].get<std::string>();
      d.description = t.contains("description") && t["description"].is_string() ? t["description"].get<std::string>() : "";
      d.input_schema = t.value("inputSchema", Json{{"type", "object"}});
      out.push_back(std::move(d));
    }
    auto next = result.find("nextCursor");
    if (next == result.end() || !next->is_string() || next->get<std::string>().empty()) return out;
    cursor = next->get<std::string>();
  }
  throw RpcError(-32603, "tools/list pagination did not terminate");
}

Json McpSession::call_tool(const std::string& name, const Json& arguments) {
  return request("tools/call", Json{{"name", name}, {"arguments", arguments}});
}

void McpSession::close() {
  std::shared_ptr<detail::McpTransport> transport;
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    closed_ = true;
    transport = std::move(transport_);
    for (auto& [id, p] : pending_) {
      p->done = true;
      p->failure = "MCP session is closed";
    }
    pending_.clear();
    cv_.notify_all();
  }
  if (transport) transport->close();
}

bool McpSession::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

// -------------------------------------------------------------------- tools

ParameterSchema normalize_mcp_schema(const Json& input_schema) {
  if (!input_schema.is_object()) throw InvalidSchema("", "MCP input schema is not an object");
  Json s;
  try {
    s = detail::inline_refs(input_schema, input_schema, 3);
  } catch (const RefResolutionError& e) {
    throw InvalidSchema("", e.what());
  }
  s = detail::merge_all_of(s);
  for (const char* key : {"$schema", "$id", "$defs", "definitions"}) s.erase(key);
  if (!s.contains("type")) s["type"] = "object";
  if (!s.contains("properties")) s["properties"] = Json::object();
  return ParameterSchema::from_json(s);
}

Json transform_mcp_content(const Json& result) {
  Json content = result.is_object() ? result.value("content", Json::array()) : Json::array();
  if (!content.is_array()) content = Json::array({content});
  bool is_error = result.is_object() && result.value("isError", false);
  if (is_error) {
    std::string text;
    for (const auto& item : content) {
      if (item.is_object() && item.value("type", "") == "text") {
        if (!text.empty()) text += "\n";
        text += item.value("text", "");
      }
    }
    throw std::runtime_error(text.empty() ? "MCP tool reported an error" : text);
  }
  auto item_value = [](const Json& item) -> Json {
    if (!item.is_object() || item.value("type", "") != "text") return item;
    std::string text = item.value("text", "");
    try {
      return Json::parse(text);
    } catch (const Json::parse_error&) {
      return text;
    }
  };
  if (content.empty()) {
    if (result.is_object() && result.contains("structuredContent")) return result["structuredContent"];
    return nullptr;
  }
  if (content.size() == 1) return item_value(content[0]);
  Json out = Json::array();
  for (const auto& item : content) out.push_back(item_value(item));
  return out;
}

Tool mcp_tool_from_descriptor(const McpToolDescriptor& desc, const std::shared_ptr<McpSession>& session) {
  std::string local = desc.name;
  for (char& c : local) {
    if (!is_valid_tool_name(std::string_view(&c, 1))) c = '_';
  }
  std::weak_ptr<McpSession> weak = session;
  std::string remote = desc.name;
  SyncHandler handler = [weak, remote](const Json& args) -> Json {
    auto s = weak.lock();
    if (!s) throw TransportClosed("MCP session is gone");
    return transform_mcp_content(s->call_tool(remote, args));
  };
  return make_tool(local, desc.description, normalize_mcp_schema(desc.input_schema), std::move(handler));
}

std::size_t register_from_mcp(ToolRegistry& registry, const McpTransportConfig& config, bool with_namespace) {
  auto session = McpSession::connect(config);
  Toolset set;
  set.name = session->server_name().empty() ? "mcp" : session->server_name();
  for (const auto& d : session->list_tools()) set.tools.push_back(mcp_tool_from_descriptor(d, session));
  std::size_t added;
  if (with_namespace) {
    std::string ns = namespace_from_label(set.name);
    if (!is_valid_namespace(ns)) ns = "mcp";
    added = registry.register_toolset(set, ns);
  } else {
    added = registry.register_toolset(set, false);
  }
  registry.attach(session);
  return added;
}

std::size_t register_from_mcp(ToolRegistry& registry, const std::string& url, bool with_namespace) {
  McpTransportConfig config;
  try {
    config = McpTransportConfig::from_url(url);
  } catch (const std::invalid_argument& e) {
    throw ConnectError(e.what());
  }
  return register_from_mcp(registry, config, with_namespace);
}

}  // namespace toolreg
