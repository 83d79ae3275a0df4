// One registry, three protocols: the hub calculator, an OpenAPI service and
// an MCP server all answer the same addition.
//
// The two mock servers started first stand in for services that would
// normally already be running; the code between the markers is what a user
// writes.

#include <cstdio>

#include "toolreg/hub.hpp"
#include "toolreg/mcp.hpp"
#include "toolreg/openapi.hpp"
#include "toolreg/testkit.hpp"

using namespace toolreg;

int main() {
  auto openapi_server = testkit::MockOpenApiServer::start();
  auto mcp_server = testkit::MockMcpServer::start();
  const std::string openapi_url = openapi_server->base_url();
  const std::string mcp_url = mcp_server->sse_url();

  // example:begin
  ToolRegistry registry;
  registry.register_toolset(hub::base_calculator(), true);
  HttpClientConfig client{openapi_url};
  register_from_openapi(registry, client, load_openapi_spec(openapi_url), true);
  register_from_mcp(registry, mcp_url, true);
  Json args = {{"a", 2}, {"b", 3}};
  auto results = registry.execute_tool_calls({{"native", "base_calculator.add", args},
                                              {"openapi", "calc_service.add", args},
                                              {"mcp", "mock_mcp.add", args}});
  // example:end

  bool agree = true;
  std::optional<double> first;
  for (const auto& [id, result] : results) {
    if (!result.ok()) {
      std::printf("%s error %s\n", id.c_str(), result.error().message.c_str());
      agree = false;
      continue;
    }
    const Json& v = result.value();
    double number = v.is_object() ? v.at("result").get<double>() : v.get<double>();
    std::printf("%s %s -> %g\n", id.c_str(), v.dump().c_str(), number);
    if (first && *first != number) agree = false;
    if (!first) first = number;
  }
  std::printf("%s\n", agree ? "all paths agree" : "paths disagree");
  return agree ? 0 : 1;
}
