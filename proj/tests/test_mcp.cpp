#include <gtest/gtest.h>

#include <thread>

#include "toolreg/executor.hpp"
#include "toolreg/json_schema.hpp"
#include "toolreg/mcp.hpp"
#include "toolreg/testkit.hpp"

using namespace toolreg;
using namespace std::chrono_literals;

namespace {

constexpr McpTransportKind kAllKinds[] = {McpTransportKind::stdio, McpTransportKind::sse,
                                          McpTransportKind::streamable_http};

std::string kind_name(const ::testing::TestParamInfo<McpTransportKind>& info) {
  return std::string(to_string(info.param));
}

/// Server-side counters, fetched the way each transport allows.
testkit::McpServerStats server_stats(const testkit::MockMcpEndpoint& ep, McpSession& session) {
  if (ep.server) return ep.server->stats();
  Json s = session.request("mock/stats", Json::object());
  testkit::McpServerStats out;
  out.requests = s.value("requests", 0);
  out.notifications = s.value("notifications", 0);
  out.list_pages = s.value("list_pages", 0);
  out.violations = s.value("violations", 0);
  return out;
}

/// The shared vector: every operation on mixed operands, including failures.
std::vector<std::pair<std::string, Json>> test_vector() {
  std::vector<std::pair<std::string, Json>> v;
  const char* ops[] = {"add", "subtract", "multiply", "divide"};
  const double operands[][2] = {{2, 3}, {-1.5, 4}, {1e10, 3}, {7, 0}, {0.1, 0.2}};
  for (const auto& ab : operands) {
    for (const char* op : ops) v.push_back({op, {{"a", ab[0]}, {"b", ab[1]}}});
  }
  return v;
}

}  // namespace

class McpTransports : public ::testing::TestWithParam<McpTransportKind> {};

TEST_P(McpTransports, ConnectListCall) {
  auto ep = testkit::start_mock_mcp(GetParam());
  auto session = McpSession::connect(ep.transport);
  EXPECT_EQ(session->server_name(), "mock-mcp");
  EXPECT_EQ(session->server_version(), "1.0.0");
  EXPECT_EQ(session->protocol_version(), kMcpProtocolVersion);
  auto tools = session->list_tools();
  ASSERT_EQ(tools.size(), 4u);
  EXPECT_EQ(tools[0].name, "add");
  Tool add = mcp_tool_from_descriptor(tools[0], session);
  EXPECT_EQ(run_tool(add, {{"a", 2}, {"b", 3}}).value(), 5);
  EXPECT_EQ(server_stats(ep, *session).violations, 0u);
  session->close();
}

TEST_P(McpTransports, ConcurrentCallsCorrelate) {
  auto ep = testkit::start_mock_mcp(GetParam());
  ToolRegistry r;
  register_from_mcp(r, ep.transport);
  std::vector<ToolCall> calls;
  for (int i = 0; i < 20; ++i) calls.push_back({"c" + std::to_string(i), "multiply", {{"a", i}, {"b", 10}}});
  ExecutorConfig c;
  c.pool_size = 20;
  auto res = r.execute_tool_calls(calls, c);
  for (int i = 0; i < 20; ++i) {
    const auto& one = res.at("c" + std::to_string(i));
    ASSERT_TRUE(one.ok()) << one.to_json().dump();
    EXPECT_EQ(one.value(), i * 10);
  }
}

TEST_P(McpTransports, SessionRequestIdsIncrease) {
  auto ep = testkit::start_mock_mcp(GetParam());
  auto session = McpSession::connect(ep.transport);
  std::int64_t before = session->last_request_id();
  EXPECT_GE(before, 1);  // initialize
  session->request("ping", Json::object());
  session->list_tools();
  EXPECT_EQ(session->last_request_id(), before + 2);
  auto stats = server_stats(ep, *session);
  EXPECT_EQ(stats.violations, 0u);
  EXPECT_GE(stats.notifications, 1u);  // notifications/initialized
}

TEST_P(McpTransports, ClosedSessionRaisesTransportClosed) {
  auto ep = testkit::start_mock_mcp(GetParam());
  auto session = McpSession::connect(ep.transport);
  auto tools = session->list_tools();
  Tool add = mcp_tool_from_descriptor(tools[0], session);
  session->close();
  EXPECT_TRUE(session->closed());
  EXPECT_THROW(session->list_tools(), TransportClosed);
  auto res = run_tool(add, {{"a", 1}, {"b", 1}});
  EXPECT_EQ(res.error().kind, ErrorKind::transport);
}

TEST_P(McpTransports, DropAfterInitialize) {
  testkit::MockMcpConfig cfg;
  cfg.drop_after_initialize = true;
  auto ep = testkit::start_mock_mcp(GetParam(), cfg);
  std::shared_ptr<McpSession> session;
  try {
    session = McpSession::connect(ep.transport);
  } catch (const TransportError&) {
    return;  // the drop raced the handshake; also a transport failure
  }
  EXPECT_THROW(session->list_tools(), TransportClosed);
}

TEST_P(McpTransports, IsErrorIsExecution) {
  testkit::MockMcpConfig cfg;
  cfg.error_tools = {"subtract"};
  auto ep = testkit::start_mock_mcp(GetParam(), cfg);
  ToolRegistry r;
  register_from_mcp(r, ep.transport);
  auto res = run_tool(*r.get_tool("subtract"), {{"a", 1}, {"b", 1}});
  ASSERT_FALSE(res.ok());
  EXPECT_EQ(res.error().kind, ErrorKind::execution);
  auto div = run_tool(*r.get_tool("divide"), {{"a", 1}, {"b", 0}});
  EXPECT_EQ(div.error().kind, ErrorKind::execution);
}

TEST_P(McpTransports, Pagination) {
  testkit::MockMcpConfig cfg;
  cfg.tools = {"add", "subtract", "multiply"};
  for (std::size_t page : {1u, 2u}) {
    cfg.page_size = page;
    auto ep = testkit::start_mock_mcp(GetParam(), cfg);
    auto session = McpSession::connect(ep.transport);
    auto tools = session->list_tools();
    ASSERT_EQ(tools.size(), 3u);
    EXPECT_EQ(tools[0].name, "add");
    EXPECT_EQ(tools[1].name, "subtract");
    EXPECT_EQ(tools[2].name, "multiply");
    EXPECT_EQ(server_stats(ep, *session).list_pages, page == 1 ? 3u : 2u);
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, McpTransports, ::testing::ValuesIn(kAllKinds), kind_name);

TEST(McpEquivalence, IdenticalAcrossTransports) {
  std::vector<Json> descriptors;
  std::vector<std::vector<Json>> results;
  for (auto kind : kAllKinds) {
    auto ep = testkit::start_mock_mcp(kind);
    auto session = McpSession::connect(ep.transport);
    Json d = Json::array();
    for (const auto& t : session->list_tools()) d.push_back({t.name, t.description, t.input_schema});
    descriptors.push_back(d);
    std::map<std::string, Tool> tools;
    for (const auto& t : session->list_tools()) tools.emplace(t.name, mcp_tool_from_descriptor(t, session));
    std::vector<Json> out;
    for (const auto& [name, args] : test_vector()) out.push_back(run_tool(tools.at(name), args).to_json());
    results.push_back(out);
  }
  ASSERT_EQ(test_vector().size(), 20u);
  EXPECT_EQ(descriptors[0], descriptors[1]);
  EXPECT_EQ(descriptors[0], descriptors[2]);
  EXPECT_EQ(results[0], results[1]);
  EXPECT_EQ(results[0], results[2]);
}

TEST(McpConnect, Errors) {
  McpTransportConfig refused = McpTransportConfig::from_url("http://127.0.0.1:1/sse");
  refused.connect_timeout = 2s;
  EXPECT_THROW(McpSession::connect(refused), ConnectError);
  McpTransportConfig http = McpTransportConfig::from_url("http://127.0.0.1:1/mcp");
  http.connect_timeout = 2s;
  EXPECT_THROW(McpSession::connect(http), ConnectError);
  EXPECT_THROW(McpSession::connect(McpTransportConfig::stdio("/nonexistent/toolreg-server")), ConnectError);
}

TEST(McpConnect, NewerServerRejected) {
  testkit::MockMcpConfig cfg;
  cfg.protocol_version = "2099-01-01";
  auto ep = testkit::start_mock_mcp(McpTransportKind::sse, cfg);
  EXPECT_THROW(McpSession::connect(ep.transport), HandshakeError);
}

TEST(McpConnect, OlderServerAccepted) {
  testkit::MockMcpConfig cfg;
  cfg.protocol_version = "2024-11-05";
  auto ep = testkit::start_mock_mcp(McpTransportKind::stdio, cfg);
  auto session = McpSession::connect(ep.transport);
  EXPECT_EQ(session->protocol_version(), "2024-11-05");
}

TEST(McpConfig, KindFromUrl) {
  EXPECT_EQ(McpTransportConfig::from_url("http://localhost:8001/sse").kind, McpTransportKind::sse);
  EXPECT_EQ(McpTransportConfig::from_url("http://localhost:8001/mcp").kind, McpTransportKind::streamable_http);
  EXPECT_EQ(McpTransportConfig::from_url("http://localhost:8001").kind, McpTransportKind::streamable_http);
  McpTransportConfig c = McpTransportConfig::stdio("x");
  EXPECT_EQ(c.connect_timeout, 10s);
  EXPECT_NO_THROW(c.check());
  c.url = "http://x";
  EXPECT_THROW(c.check(), std::invalid_argument);
  McpTransportConfig h = McpTransportConfig::from_url("http://x/sse");
  h.command = "y";
  EXPECT_THROW(h.check(), std::invalid_argument);
}

TEST(McpRegister, NamespaceFromServerName) {
  auto ep = testkit::start_mock_mcp(McpTransportKind::stdio);
  ToolRegistry r;
  EXPECT_EQ(register_from_mcp(r, ep.transport, true), 4u);
  EXPECT_TRUE(r.contains("mock_mcp.add"));
  EXPECT_EQ(run_tool(*r.get_tool("mock_mcp.add"), {{"a", 2}, {"b", 3}}).value(), 5);
}

TEST(McpRegister, UnreachableLeavesRegistryUnchanged) {
  ToolRegistry r;
  r.register_tool(make_tool("keep", "", Json{{"type", "object"}}, SyncHandler([](const Json&) { return Json(1); })));
  EXPECT_THROW(register_from_mcp(r, "http://127.0.0.1:1/sse"), ConnectError);
  EXPECT_EQ(r.names(), std::vector<std::string>{"keep"});
}

TEST(McpRegister, DuplicateName) {
  auto ep = testkit::start_mock_mcp(McpTransportKind::sse);
  ToolRegistry r;
  register_from_mcp(r, ep.transport, true);
  EXPECT_THROW(register_from_mcp(r, ep.transport, true), DuplicateName);
  EXPECT_EQ(r.size(), 4u);
}

TEST(McpRegister, SessionLivesAsLongAsRegistry) {
  auto ep = testkit::start_mock_mcp(McpTransportKind::sse);
  std::optional<Tool> add;
  {
    ToolRegistry r;
    register_from_mcp(r, ep.transport);
    EXPECT_EQ(ep.server->open_sessions(), 1u);
    add = r.get_tool("add");
    ToolRegistry other;
    other.merge(r);
    r.close();
    // The merged registry still holds the session.
    EXPECT_EQ(run_tool(*other.get_tool("add"), {{"a", 1}, {"b", 2}}).value(), 3);
  }
  // Every registry is gone; the tool outlives its session once the reader
  // thread drops the reference it holds while delivering a reply.
  auto orphan = run_tool(*add, {{"a", 1}, {"b", 2}});
  for (int i = 0; i < 50 && orphan.ok(); ++i) {
    std::this_thread::sleep_for(20ms);
    orphan = run_tool(*add, {{"a", 1}, {"b", 2}});
  }
  EXPECT_EQ(orphan.error().kind, ErrorKind::transport) << orphan.to_json().dump();
  for (int i = 0; i < 50 && ep.server->open_sessions() > 0; ++i) std::this_thread::sleep_for(20ms);
  EXPECT_EQ(ep.server->open_sessions(), 0u);
}

TEST(McpRegister, ToolsFallBackInIsolatedMode) {
  auto ep = testkit::start_mock_mcp(McpTransportKind::streamable_http);
  ToolRegistry r;
  register_from_mcp(r, ep.transport);
  EXPECT_FALSE(classify_transferable(*r.get_tool("add")));
  std::vector<ToolCall> calls;
  for (int i = 0; i < 8; ++i) calls.push_back({std::to_string(i), "add", {{"a", i}, {"b", i}}});
  auto res = r.execute_tool_calls(calls, ExecutionMode::isolated);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(res.at(std::to_string(i)).value(), 2 * i);
  EXPECT_EQ(r.executor_stats().fallbacks, 8u);
}

TEST(McpSchema, Normalization) {
  ParameterSchema inferred = normalize_mcp_schema({{"properties", {{"x", {{"type", "integer"}}}}}});
  EXPECT_EQ(inferred.json()["type"], "object");
  ParameterSchema refs = normalize_mcp_schema(
      {{"type", "object"},
       {"$defs", {{"P", {{"type", "object"}, {"properties", {{"v", {{"type", "string"}}}}}}}}},
       {"properties", {{"p", {{"$ref", "#/$defs/P"}}}}}});
  EXPECT_EQ(refs.json()["properties"]["p"]["properties"]["v"]["type"], "string");
  EXPECT_TRUE(schema::validate_against_metaschema(refs.json()).valid);
  EXPECT_THROW(normalize_mcp_schema({{"type", "string"}}), InvalidSchema);
}

TEST(McpContent, Transform) {
  auto text = [](const std::string& t) { return Json{{"type", "text"}, {"text", t}}; };
  EXPECT_EQ(transform_mcp_content({{"content", {text("5")}}}), 5);
  EXPECT_EQ(transform_mcp_content({{"content", {text("hello")}}}), "hello");
  EXPECT_EQ(transform_mcp_content({{"content", {text("{\"r\":1}")}}}), (Json{{"r", 1}}));
  EXPECT_EQ(transform_mcp_content({{"content", {text("1"), text("x")}}}), Json::array({1, "x"}));
  try {
    transform_mcp_content({{"isError", true}, {"content", {text("bad"), text("worse")}}});
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("worse"), std::string::npos);
  }
}
