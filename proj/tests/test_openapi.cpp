#include <gtest/gtest.h>

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "support/schema_gen.hpp"
#include "toolreg/json_schema.hpp"
#include "toolreg/openapi.hpp"
#include "toolreg/testkit.hpp"

using namespace toolreg;
using namespace std::chrono_literals;

namespace {

std::string data(const std::string& file) { return std::string(TOOLREG_TEST_DATA) + "/openapi/" + file; }

Json inventory() { return load_openapi_spec(data("inventory.json")); }

const OpenAPIOperation& find_op(const std::vector<OpenAPIOperation>& ops, const std::string& id) {
  for (const auto& op : ops) {
    if (op.operation_id == id) return op;
  }
  throw std::logic_error("no operation " + id);
}

bool is_required(const ParameterSchema& s, const std::string& name) {
  for (const auto& r : s.json().value("required", Json::array())) {
    if (r == name) return true;
  }
  return false;
}

/// Records what an operation tool actually put on the wire.
class EchoServer {
 public:
  EchoServer() {
    auto echo = [](const httplib::Request& req, httplib::Response& res) {
      Json query = Json::object();
      for (const auto& [k, v] : req.params) {
        if (!query.contains(k)) query[k] = Json::array();
        query[k].push_back(v);
      }
      Json headers = Json::object();
      for (const char* h : {"X-Trace", "Authorization", "X-Default", "Content-Type"}) {
        if (req.has_header(h)) headers[h] = req.get_header_value(h);
      }
      Json body = req.body.empty() ? Json(nullptr) : Json::parse(req.body, nullptr, false);
      Json out = {{"method", req.method}, {"path", req.path}, {"query", query}, {"headers", headers}, {"body", body}};
      res.set_content(out.dump(), "application/json");
    };
    server_.Get("/text", [](const httplib::Request&, httplib::Response& res) { res.set_content("plain words", "text/plain"); });
    server_.Get(".*", echo);
    server_.Post(".*", echo);
    server_.Put(".*", echo);
    server_.Delete(".*", echo);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~EchoServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

/// Depth of nested "children" levels carrying properties before the
/// truncated stand-in is reached.
int tree_depth(const Json& node) {
  if (!node.is_object() || !node.contains("properties")) return 0;
  const Json& props = node["properties"];
  if (!props.contains("children")) return 1;
  return 1 + tree_depth(props["children"]["items"]);
}

bool is_unconstrained_object(const Json& s) {
  if (!s.is_object()) return false;
  for (const auto& [k, _] : s.items()) {
    if (k != "type" && k != "description") return false;
  }
  return s.value("type", "object") == "object";
}

}  // namespace

// ----------------------------------------------------------------- loading

TEST(Load, FromMockUrlAndBareBase) {
  auto server = testkit::MockOpenApiServer::start();
  Json direct = load_openapi_spec(server->base_url() + "/openapi.json");
  EXPECT_EQ(direct["openapi"], "3.1.0");
  Json probed = load_openapi_spec(server->base_url());
  EXPECT_EQ(probed["paths"].size(), 4u);
  EXPECT_EQ(probed, direct);
}

TEST(Load, FileJsonAndYaml) {
  EXPECT_EQ(inventory()["info"]["title"], "Inventory API");
  Json yaml = load_openapi_spec(data("calc.yaml"));
  EXPECT_EQ(yaml["openapi"], "3.1.0");
  EXPECT_EQ(yaml["paths"]["/add"]["post"]["operationId"], "add");
  EXPECT_EQ(yaml["components"]["schemas"]["Operands"]["required"], Json::array({"a", "b"}));
}

TEST(Load, Errors) {
  EXPECT_THROW(load_openapi_spec(data("swagger2.json")), UnsupportedVersion);
  EXPECT_THROW(load_openapi_spec(data("no_such_file.json")), FetchError);
  EXPECT_THROW(parse_openapi_text("{\"openapi\": "), ParseError);
  EXPECT_THROW(load_openapi_spec("http://127.0.0.1:1/openapi.json", 2s), FetchError);
  EXPECT_THROW(check_openapi_version({{"openapi", "3.2.0"}}), UnsupportedVersion);
  EXPECT_NO_THROW(check_openapi_version({{"openapi", "3.0.0"}}));
}

TEST(Load, BareBaseFallsBackToYaml) {
  httplib::Server server;
  std::string yaml;
  {
    std::ifstream in(data("calc.yaml"));
    yaml.assign(std::istreambuf_iterator<char>(in), {});
  }
  server.Get("/openapi.yaml", [&](const httplib::Request&, httplib::Response& res) { res.set_content(yaml, "application/yaml"); });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  Json spec = load_openapi_spec("http://127.0.0.1:" + std::to_string(port));
  server.stop();
  t.join();
  EXPECT_EQ(spec["info"]["title"], "Calc Service");
}

TEST(HttpClientConfigTest, Checks) {
  HttpClientConfig c{"ftp://x"};
  EXPECT_THROW(c.check(), std::invalid_argument);
  c.base_url = "http://localhost:8000";
  EXPECT_NO_THROW(c.check());
  EXPECT_EQ(c.timeout, 10s);
  c.timeout = 0ms;
  EXPECT_THROW(c.check(), std::invalid_argument);
  c.timeout = 1500ms;
  c.default_headers = {{"X-A", "1"}};
  c.auth = "tok";
  HttpClientConfig back = HttpClientConfig::from_json(c.to_json());
  EXPECT_EQ(back.base_url, c.base_url);
  EXPECT_EQ(back.timeout, c.timeout);
  EXPECT_EQ(back.default_headers, c.default_headers);
  EXPECT_EQ(back.auth, c.auth);
}

// -------------------------------------------------------------- extraction

TEST(Extract, CalculatorSpec) {
  auto ops = extract_operations(testkit::calculator_openapi_spec());
  ASSERT_EQ(ops.size(), 4u);
  for (const auto& op : ops) {
    EXPECT_EQ(op.method, "POST");
    EXPECT_TRUE(is_required(op.request_schema, "a"));
    EXPECT_TRUE(is_required(op.request_schema, "b"));
    EXPECT_EQ(op.request_schema.json()["properties"]["a"]["type"], "number");
    EXPECT_EQ(op.location_of("a"), ParamLocation::body);
  }
  EXPECT_EQ(find_op(ops, "add").description, "Add two numbers");
}

TEST(Extract, FallbackName) {
  auto ops = extract_operations(inventory());
  const auto& get = find_op(ops, "get_items__id_");
  EXPECT_EQ(get.method, "GET");
  EXPECT_EQ(get.path_template, "/items/{id}");
  EXPECT_EQ(get.description, "Fetch one item");
}

TEST(Extract, PathQueryHeaderParameters) {
  auto ops = extract_operations(inventory());
  const auto& get = find_op(ops, "get_items__id_");
  EXPECT_EQ(get.location_of("id"), ParamLocation::path);
  EXPECT_TRUE(is_required(get.request_schema, "id"));
  EXPECT_EQ(get.request_schema.json()["properties"]["id"]["type"], "integer");
  EXPECT_EQ(get.location_of("fields"), ParamLocation::query);
  EXPECT_FALSE(is_required(get.request_schema, "fields"));

  const auto& del = find_op(ops, "deleteItem");
  EXPECT_EQ(del.location_of("X-Trace"), ParamLocation::header);
  EXPECT_TRUE(is_required(del.request_schema, "X-Trace"));
  EXPECT_NE(del.request_schema.json()["properties"]["X-Trace"]["description"].get<std::string>().find("location=header"),
            std::string::npos);

  const auto& list = find_op(ops, "listItems");
  EXPECT_FALSE(list.location_of("session"));  // cookies are dropped
  // 3.0 nullable becomes a type union.
  EXPECT_EQ(list.request_schema.json()["properties"]["limit"]["type"], Json::array({"integer", "null"}));
}

TEST(Extract, RequiredPathParamsAlwaysRequired) {
  for (const auto& op : extract_operations(inventory())) {
    std::string p = op.path_template;
    for (auto pos = p.find('{'); pos != std::string::npos; pos = p.find('{', pos + 1)) {
      std::string name = p.substr(pos + 1, p.find('}', pos) - pos - 1);
      EXPECT_EQ(op.location_of(name), ParamLocation::path) << op.operation_id;
      EXPECT_TRUE(is_required(op.request_schema, name)) << op.operation_id;
    }
  }
}

TEST(Extract, AllOfMerged) {
  auto ops = extract_operations(inventory());
  const auto& op = find_op(ops, "createItem");
  const Json& s = op.request_schema.json();
  EXPECT_FALSE(s.contains("allOf"));
  for (const char* name : {"sku", "name", "qty"}) EXPECT_TRUE(s["properties"].contains(name)) << name;
  EXPECT_TRUE(is_required(op.request_schema, "sku"));
  EXPECT_TRUE(is_required(op.request_schema, "name"));
  EXPECT_FALSE(is_required(op.request_schema, "qty"));
}

TEST(Extract, RecursiveRefTruncatedAtDepthThree) {
  auto ops = extract_operations(inventory());
  const auto& op = find_op(ops, "plantTree");
  const Json& s = op.request_schema.json();
  EXPECT_EQ(tree_depth(s), 3);
  const Json* node = &s;
  for (int i = 0; i < 3; ++i) node = &(*node)["properties"]["children"]["items"];
  EXPECT_TRUE(is_unconstrained_object(*node)) << node->dump();
  // Depth is configurable.
  ExtractOptions deep;
  deep.max_ref_depth = 5;
  auto deep_ops = extract_operations(inventory(), deep);
  EXPECT_EQ(tree_depth(find_op(deep_ops, "plantTree").request_schema.json()), 5);
  // No $ref survives anywhere.
  EXPECT_EQ(s.dump().find("$ref"), std::string::npos);
}

TEST(Extract, OneOfPreservedWithDiscriminator) {
  auto ops = extract_operations(inventory());
  const auto& op = find_op(ops, "addPet");
  const Json& pet = op.request_schema.json()["properties"]["pet"];
  ASSERT_TRUE(pet.contains("oneOf"));
  ASSERT_EQ(pet["oneOf"].size(), 2u);
  EXPECT_EQ(pet["oneOf"][0]["properties"]["kind"]["enum"], Json::array({"cat"}));
  EXPECT_EQ(pet["oneOf"][1]["properties"]["kind"]["enum"], Json::array({"dog"}));
  EXPECT_EQ(pet["discriminator"]["propertyName"], "kind");
  EXPECT_NO_THROW(validate_arguments(op.request_schema, {{"pet", {{"kind", "cat"}, {"lives", 9}}}}));
  EXPECT_THROW(validate_arguments(op.request_schema, {{"pet", {{"kind", "cow"}}}}), ValidationError);
}

TEST(Extract, NonJsonBodySkippedWithReason) {
  auto report = extract_operations_report(inventory());
  ASSERT_EQ(report.skipped.size(), 1u);
  EXPECT_EQ(report.skipped[0].path, "/upload");
  EXPECT_NE(report.skipped[0].reason.find("multipart/form-data"), std::string::npos);
  for (const auto& op : report.operations) EXPECT_NE(op.operation_id, "upload");
}

TEST(Extract, Errors) {
  EXPECT_THROW(extract_operations(load_openapi_spec(data("collision.json"))), NameCollision);
  EXPECT_THROW(extract_operations(load_openapi_spec(data("dangling.json"))), RefResolutionError);
}

TEST(Extract, Deterministic) {
  Json spec = inventory();
  std::string first;
  for (const auto& op : extract_operations(spec)) first += op.to_json().dump() + "\n";
  for (int i = 0; i < 5; ++i) {
    std::string again;
    for (const auto& op : extract_operations(Json::parse(spec.dump()))) again += op.to_json().dump() + "\n";
    EXPECT_EQ(again, first);
  }
}

TEST(Extract, OperationJsonRoundTrip) {
  for (const auto& op : extract_operations(inventory())) {
    OpenAPIOperation back = OpenAPIOperation::from_json(op.to_json());
    EXPECT_EQ(back.to_json(), op.to_json());
  }
}

TEST(Extract, FuzzedSpecsYieldMetaValidSchemas) {
  test::SchemaGen gen(606);
  std::mt19937_64 rng(606);
  std::size_t tools = 0;
  for (int n = 0; n < 60; ++n) {
    Json spec = {{"openapi", n % 2 ? "3.1.0" : "3.0.3"}, {"info", {{"title", "Fuzz " + std::to_string(n)}, {"version", "1"}}}};
    Json schemas = Json::object();
    for (int k = 0; k < 3; ++k) schemas["S" + std::to_string(k)] = gen.object_schema(2);
    // A self-referencing component to exercise truncation.
    schemas["Rec"] = {{"type", "object"}, {"properties", {{"next", {{"$ref", "#/components/schemas/Rec"}}}}}};
    spec["components"] = {{"schemas", schemas}};
    Json paths = Json::object();
    for (int p = 0, np = 1 + static_cast<int>(rng() % 5); p < np; ++p) {
      std::string path = "/r" + std::to_string(p) + (rng() % 2 ? "/{key}" : "");
      Json item = Json::object();
      const char* methods[] = {"get", "post", "put", "patch", "delete"};
      for (int m = 0, nm = 1 + static_cast<int>(rng() % 3); m < nm; ++m) {
        std::string method = methods[rng() % 5];
        Json op = {{"responses", {{"200", {{"description", "ok"}}}}}};
        Json params = Json::array();
        if (path.find("{key}") != std::string::npos && rng() % 2) {
          params.push_back({{"name", "key"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}});
        }
        if (rng() % 2) params.push_back({{"name", "q"}, {"in", "query"}, {"schema", gen.subschema(1)}});
        if (rng() % 3 == 0) params.push_back({{"name", "X-H"}, {"in", "header"}, {"schema", {{"type", "string"}}}});
        op["parameters"] = params;
        if (method != "get" && method != "delete") {
          Json body;
          switch (rng() % 4) {
            case 0: body = {{"$ref", "#/components/schemas/S" + std::to_string(rng() % 3)}}; break;
            case 1: body = {{"$ref", "#/components/schemas/Rec"}}; break;
            case 2: body = {{"allOf", {{{"$ref", "#/components/schemas/S0"}}, {{"$ref", "#/components/schemas/S1"}}}}}; break;
            default: body = {{"type", "array"}, {"items", gen.subschema(1)}}; break;
          }
          op["requestBody"] = {{"content", {{"application/json", {{"schema", body}}}}}};
        }
        item[method] = op;
      }
      paths[path] = item;
    }
    spec["paths"] = paths;
    auto report = extract_operations_report(spec);
    for (const auto& op : report.operations) {
      ++tools;
      auto outcome = schema::validate_against_metaschema(op.request_schema.json());
      ASSERT_TRUE(outcome.valid) << op.operation_id << " " << outcome.summary();
      Tool t = operation_to_tool(op, HttpClientConfig{"http://127.0.0.1:9"});
      EXPECT_EQ(t.name(), op.operation_id);
    }
  }
  EXPECT_GT(tools, 100u);
}

// -------------------------------------------------------------- invocation

TEST(Invoke, AddAgainstMock) {
  auto server = testkit::MockOpenApiServer::start();
  ToolRegistry r;
  EXPECT_EQ(register_from_openapi(r, HttpClientConfig{server->base_url()}, load_openapi_spec(server->base_url())), 4u);
  auto res = run_tool(*r.get_tool("add"), {{"a", 2}, {"b", 3}});
  ASSERT_TRUE(res.ok()) << res.to_json().dump();
  EXPECT_EQ(res.value(), (Json{{"result", 5}}));
}

TEST(Invoke, DivideByZeroIsExecutionWithStatus) {
  auto server = testkit::MockOpenApiServer::start();
  ToolRegistry r;
  register_from_openapi(r, HttpClientConfig{server->base_url()}, testkit::calculator_openapi_spec());
  auto res = run_tool(*r.get_tool("divide"), {{"a", 1}, {"b", 0}});
  ASSERT_FALSE(res.ok());
  EXPECT_EQ(res.error().kind, ErrorKind::execution);
  EXPECT_NE(res.error().message.find("400"), std::string::npos);
}

TEST(Invoke, StoppedServerIsTransport) {
  auto server = testkit::MockOpenApiServer::start();
  HttpClientConfig client{server->base_url()};
  client.timeout = 2s;
  ToolRegistry r;
  register_from_openapi(r, client, testkit::calculator_openapi_spec());
  ASSERT_TRUE(run_tool(*r.get_tool("add"), {{"a", 1}, {"b", 1}}).ok());
  server->stop();
  auto res = run_tool(*r.get_tool("add"), {{"a", 1}, {"b", 1}});
  ASSERT_FALSE(res.ok());
  EXPECT_EQ(res.error().kind, ErrorKind::transport);
}

TEST(Invoke, MatchesDirectHttpOver100Pairs) {
  auto server = testkit::MockOpenApiServer::start();
  ToolRegistry r;
  register_from_openapi(r, HttpClientConfig{server->base_url()}, testkit::calculator_openapi_spec());
  Tool add = *r.get_tool("add");
  httplib::Client direct("127.0.0.1", server->port());
  std::mt19937_64 rng(100);
  std::uniform_real_distribution<double> v(-1e6, 1e6);
  for (int i = 0; i < 100; ++i) {
    Json args = {{"a", v(rng)}, {"b", i % 4 == 0 ? Json(static_cast<int>(rng() % 100)) : Json(v(rng))}};
    auto raw = direct.Post("/add", args.dump(), "application/json");
    ASSERT_TRUE(raw);
    auto res = run_tool(add, args);
    ASSERT_TRUE(res.ok());
    EXPECT_EQ(res.value(), Json::parse(raw->body)) << args.dump();
  }
}

TEST(Invoke, ParametersTravelInTheirLocations) {
  EchoServer echo;
  HttpClientConfig client{echo.url() + "/v2"};
  client.default_headers = {{"X-Default", "d"}};
  client.auth = "secret";
  auto ops = extract_operations(inventory());

  Json got = run_tool(operation_to_tool(find_op(ops, "get_items__id_"), client), {{"id", 42}, {"fields", "a b"}}).value();
  EXPECT_EQ(got["method"], "GET");
  EXPECT_EQ(got["path"], "/v2/items/42");
  EXPECT_EQ(got["query"]["fields"], Json::array({"a b"}));
  EXPECT_EQ(got["headers"]["Authorization"], "Bearer secret");
  EXPECT_EQ(got["headers"]["X-Default"], "d");
  EXPECT_TRUE(got["body"].is_null());

  got = run_tool(operation_to_tool(find_op(ops, "deleteItem"), client), {{"id", 7}, {"X-Trace", "t-1"}}).value();
  EXPECT_EQ(got["method"], "DELETE");
  EXPECT_EQ(got["headers"]["X-Trace"], "t-1");

  got = run_tool(operation_to_tool(find_op(ops, "listItems"), client), {{"limit", 5}, {"tag", {"x", "y"}}}).value();
  EXPECT_EQ(got["query"]["limit"], Json::array({"5"}));
  EXPECT_EQ(got["query"]["tag"], Json::array({"x", "y"}));

  got = run_tool(operation_to_tool(find_op(ops, "createItem"), client), {{"sku", "s1"}, {"name", "n"}}).value();
  EXPECT_EQ(got["method"], "POST");
  EXPECT_EQ(got["body"], (Json{{"sku", "s1"}, {"name", "n"}}));
  EXPECT_EQ(got["headers"]["Content-Type"], "application/json");
}

TEST(Invoke, NonJsonResponseIsString) {
  EchoServer echo;
  Json spec = {{"openapi", "3.1.0"},
               {"info", {{"title", "T"}, {"version", "1"}}},
               {"paths", {{"/text", {{"get", {{"operationId", "text"}, {"responses", Json::object()}}}}}}}};
  Tool t = operation_to_tool(extract_operations(spec).at(0), HttpClientConfig{echo.url()});
  EXPECT_EQ(run_tool(t, Json::object()).value(), "plain words");
}

TEST(Invoke, BearerRequired) {
  testkit::MockOpenApiConfig cfg;
  cfg.bearer_token = "tok";
  auto server = testkit::MockOpenApiServer::start(cfg);
  auto op = find_op(extract_operations(testkit::calculator_openapi_spec()), "add");
  auto denied = run_tool(operation_to_tool(op, HttpClientConfig{server->base_url()}), {{"a", 1}, {"b", 2}});
  EXPECT_EQ(denied.error().kind, ErrorKind::execution);
  EXPECT_NE(denied.error().message.find("401"), std::string::npos);
  HttpClientConfig with{server->base_url()};
  with.auth = "tok";
  EXPECT_EQ(run_tool(operation_to_tool(op, with), {{"a", 1}, {"b", 2}}).value()["result"], 3);
}

TEST(Invoke, ValidationBeforeRequest) {
  auto server = testkit::MockOpenApiServer::start();
  auto op = find_op(extract_operations(testkit::calculator_openapi_spec()), "add");
  auto res = run_tool(operation_to_tool(op, HttpClientConfig{server->base_url()}), {{"a", 1}});
  EXPECT_EQ(res.error().kind, ErrorKind::validation);
  EXPECT_EQ(server->requests_served(), 0u);
}

// ------------------------------------------------------------ registration

TEST(Register, NamespaceFromTitle) {
  auto server = testkit::MockOpenApiServer::start();
  ToolRegistry r;
  HttpClientConfig client{server->base_url()};
  EXPECT_EQ(register_from_openapi(r, client, testkit::calculator_openapi_spec(), true), 4u);
  for (const char* n : {"calc_service.add", "calc_service.subtract", "calc_service.multiply", "calc_service.divide"}) {
    EXPECT_TRUE(r.contains(n)) << n;
  }
  EXPECT_THROW(register_from_openapi(r, client, testkit::calculator_openapi_spec(), true), DuplicateName);
  EXPECT_EQ(r.size(), 4u);
  EXPECT_EQ(register_from_openapi(r, client, testkit::calculator_openapi_spec(), false), 4u);
  EXPECT_TRUE(r.contains("add"));
}

TEST(Register, ToolsAreTransferable) {
  auto server = testkit::MockOpenApiServer::start();
  ToolRegistry r;
  register_from_openapi(r, HttpClientConfig{server->base_url()}, testkit::calculator_openapi_spec());
  std::vector<ToolCall> calls;
  for (int i = 0; i < 10; ++i) calls.push_back({"c" + std::to_string(i), "multiply", {{"a", i}, {"b", 3}}});
  auto res = r.execute_tool_calls(calls, ExecutionMode::isolated);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(res.at("c" + std::to_string(i)).value()["result"], 3 * i);
  EXPECT_EQ(r.executor_stats().fallbacks, 0u);
}
