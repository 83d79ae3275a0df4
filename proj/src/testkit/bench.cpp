#include "toolreg/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <random>
#include <sstream>

#include "toolreg/hub.hpp"
#include "toolreg/openapi.hpp"
#include "toolreg/testkit.hpp"
#include "toolreg/transfer.hpp"

namespace toolreg::testkit {

std::string_view to_string(BenchToolKind kind) {
  switch (kind) {
    case BenchToolKind::native:
      return "native";
    case BenchToolKind::openapi:
      return "openapi";
    case BenchToolKind::mcp:
      return "mcp";
  }
  return "?";
}

std::optional<BenchToolKind> bench_tool_kind_from_string(std::string_view text) {
  if (text == "native" || text == "hub") return BenchToolKind::native;
  if (text == "openapi") return BenchToolKind::openapi;
  if (text == "mcp") return BenchToolKind::mcp;
  return std::nullopt;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2;
}

Json BenchReport::to_json() const {
  return Json{{"tool_kind", to_string(kind)},
              {"mode", to_string(mode)},
              {"pool", pool},
              {"calls", calls},
              {"iterations", iterations},
              {"wall_ms", wall_ms},
              {"calls_per_s", {{"min", cps_min}, {"median", cps_median}, {"max", cps_max}}},
              {"success_rate", success_rate}};
}

std::string BenchReport::to_text() const {
  std::vector<double> sorted = wall_ms;
  std::sort(sorted.begin(), sorted.end());
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "tool_kind  mode      pool  calls  iters  wall_ms(min/med/max)        calls/s(min/med/max)        success\n"
                "%-10s %-9s %4zu  %5zu  %5zu  %8.1f/%8.1f/%8.1f  %8.1f/%8.1f/%8.1f  %6.1f%%\n",
                std::string(to_string(kind)).c_str(), std::string(to_string(mode)).c_str(), pool, calls, iterations,
                sorted.empty() ? 0.0 : sorted.front(), sorted.empty() ? 0.0 : median(sorted),
                sorted.empty() ? 0.0 : sorted.back(), cps_min, cps_median, cps_max, success_rate * 100);
  return buf;
}

namespace {

Json transport_to_json(const McpTransportConfig& c) {
  return {{"kind", to_string(c.kind)},       {"command", c.command},
          {"args", c.args},                  {"env", c.env},
          {"url", c.url},                    {"headers", c.headers},
          {"connect_timeout_ms", c.connect_timeout.count()},
          {"request_timeout_ms", c.request_timeout.count()}};
}

McpTransportConfig transport_from_json(const Json& j) {
  McpTransportConfig c;
  std::string kind = j.at("kind");
  if (kind == "stdio") {
    c.kind = McpTransportKind::stdio;
  } else if (kind == "sse") {
    c.kind = McpTransportKind::sse;
  } else if (kind == "streamable_http") {
    c.kind = McpTransportKind::streamable_http;
  } else {
    throw Error("unknown MCP transport kind " + kind);
  }
  c.command = j.at("command");
  c.args = j.at("args").get<std::vector<std::string>>();
  c.env = j.at("env").get<std::map<std::string, std::string>>();
  c.url = j.at("url");
  c.headers = j.at("headers").get<std::map<std::string, std::string>>();
  c.connect_timeout = std::chrono::milliseconds(j.at("connect_timeout_ms").get<long long>());
  c.request_timeout = std::chrono::milliseconds(j.at("request_timeout_ms").get<long long>());
  c.check();
  return c;
}

SyncHandler per_call_handler(McpTransportConfig transport, std::string tool) {
  return [transport = std::move(transport), tool = std::move(tool)](const Json& args) {
    auto session = McpSession::connect(transport);
    Json result;
    try {
      result = session->call_tool(tool, args);
    } catch (...) {
      session->close();
      throw;
    }
    session->close();
    return transform_mcp_content(result);
  };
}

void register_bench_factories() {
  static std::once_flag once;
  std::call_once(once, [] {
    register_handler_factory("mcp.per_call", [](const Json& c) -> Handler {
      return per_call_handler(transport_from_json(c.at("transport")), c.at("tool").get<std::string>());
    });
  });
}

/// Registry plus whatever has to outlive it.
struct Setup {
  std::unique_ptr<MockOpenApiServer> openapi;
  MockMcpEndpoint mcp;
  ToolRegistry registry;
};

void prepare(Setup& setup, const BenchConfig& config) {
  switch (config.kind) {
    case BenchToolKind::native:
      setup.registry.register_toolset(hub::base_calculator());
      break;
    case BenchToolKind::openapi: {
      setup.openapi = MockOpenApiServer::start();
      Json spec = load_openapi_spec(setup.openapi->base_url());
      HttpClientConfig client;
      client.base_url = setup.openapi->base_url();
      register_from_openapi(setup.registry, client, spec);
      break;
    }
    case BenchToolKind::mcp: {
      setup.mcp = start_mock_mcp(config.mcp_transport);
      if (!config.mcp_session_per_call) {
        register_from_mcp(setup.registry, setup.mcp.transport);
        break;
      }
      register_bench_factories();
      auto session = McpSession::connect(setup.mcp.transport);
      auto descriptors = session->list_tools();
      session->close();
      Json transport = transport_to_json(setup.mcp.transport);
      for (const auto& d : descriptors) {
        Tool tool = make_tool(d.name, d.description, normalize_mcp_schema(d.input_schema),
                              per_call_handler(setup.mcp.transport, d.name))
                        .with_transfer({"mcp.per_call", {{"transport", transport}, {"tool", d.name}}});
        setup.registry.register_tool(tool);
      }
      break;
    }
  }
}

std::vector<ToolCall> make_calls(std::size_t n, std::mt19937_64& rng) {
  static const char* names[] = {"add", "subtract", "multiply", "divide"};
  std::uniform_int_distribution<int> value(-1000, 1000);
  std::uniform_int_distribution<int> nonzero(1, 1000);
  std::vector<ToolCall> calls;
  calls.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    calls.push_back({"call_" + std::to_string(i), names[i % 4], {{"a", value(rng)}, {"b", nonzero(rng)}}});
  }
  return calls;
}

}  // namespace

BenchReport run_bench(const BenchConfig& config) {
  if (config.calls == 0 || config.iterations == 0) throw std::invalid_argument("calls and iterations must be positive");
  ExecutorConfig exec;
  exec.mode = config.mode;
  exec.pool_size = config.pool_size;
  exec.per_call_timeout = config.per_call_timeout;
  exec.check();

  Setup setup;
  setup.registry.set_executor_config(exec);
  prepare(setup, config);

  std::mt19937_64 rng(config.seed);
  setup.registry.execute_tool_calls(make_calls(config.calls, rng));  // warm-up: pools, workers, connections

  BenchReport report;
  report.kind = config.kind;
  report.mode = config.mode;
  report.pool = config.pool_size;
  report.calls = config.calls;
  report.iterations = config.iterations;
  std::vector<double> cps;
  std::size_t ok = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    auto calls = make_calls(config.calls, rng);
    auto start = std::chrono::steady_clock::now();
    BatchResults results = setup.registry.execute_tool_calls(calls);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    for (const auto& [id, result] : results) ok += result.ok();
    report.wall_ms.push_back(ms);
    cps.push_back(config.calls / (ms / 1000.0));
  }
  report.cps_min = *std::min_element(cps.begin(), cps.end());
  report.cps_max = *std::max_element(cps.begin(), cps.end());
  report.cps_median = median(cps);
  report.success_rate = static_cast<double>(ok) / static_cast<double>(config.calls * config.iterations);
  setup.registry.close();
  return report;
}

}  // namespace toolreg::testkit
