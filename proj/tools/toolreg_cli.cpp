// toolreg: list, describe and call tools from hub, OpenAPI and MCP sources,
// and run the desk-scale benchmark.
//
// Exit codes: 0 success, 2 source or setup failure, 3 tool error.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <regex>

#include <CLI11.hpp>

#include "toolreg/bench.hpp"
#include "toolreg/hub.hpp"
#include "toolreg/mcp.hpp"
#include "toolreg/openapi.hpp"
#include "toolreg/testkit.hpp"

using namespace toolreg;

namespace {

constexpr int kSourceError = 2;
constexpr int kToolError = 3;

struct SourceSpec {
  std::string kind;  // hub, openapi, mcp
  std::string locator;
  std::optional<std::string> ns;
};

/// `kind:locator[:namespace]`. A trailing `:segment` counts as a namespace
/// unless it is all digits or holds a '/', so URLs with ports parse as
/// locators.
SourceSpec parse_source(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("source needs kind:locator, got " + text);
  SourceSpec spec{text.substr(0, colon), text.substr(colon + 1), std::nullopt};
  if (spec.kind != "hub" && spec.kind != "openapi" && spec.kind != "mcp") {
    throw std::invalid_argument("unknown source kind " + spec.kind + " (hub, openapi, mcp)");
  }
  static const std::regex ns_re("[A-Za-z0-9_-]*[A-Za-z_-][A-Za-z0-9_-]*");
  auto last = spec.locator.rfind(':');
  if (last != std::string::npos) {
    std::string tail = spec.locator.substr(last + 1);
    if (std::regex_match(tail, ns_re)) {
      spec.ns = tail;
      spec.locator.erase(last);
    }
  }
  if (spec.locator.empty()) throw std::invalid_argument("source " + text + " has no locator");
  return spec;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

bool is_url(const std::string& s) { return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0; }

struct Sources {
  ToolRegistry registry;
  std::map<std::string, std::string> kind_of;  // tool name -> source kind
  std::vector<std::shared_ptr<void>> mocks;
};

std::variant<bool, std::string> ns_arg(const SourceSpec& s) {
  if (s.ns) return *s.ns;
  return false;
}

void add_openapi(Sources& out, const SourceSpec& s, const std::string& base_override) {
  std::string source = s.locator;
  if (source == "mock") {
    std::shared_ptr<testkit::MockOpenApiServer> server = testkit::MockOpenApiServer::start();
    source = server->base_url();
    out.mocks.push_back(server);
  }
  Json spec = load_openapi_spec(source);
  HttpClientConfig client;
  if (!base_override.empty()) {
    client.base_url = base_override;
  } else if (is_url(source)) {
    static const std::regex doc_re(R"(/[^/]*\.(json|ya?ml)$)");
    client.base_url = std::regex_replace(source, doc_re, "");
  } else if (spec.contains("servers") && !spec["servers"].empty() && spec["servers"][0].contains("url") &&
             is_url(spec["servers"][0]["url"].get<std::string>())) {
    client.base_url = spec["servers"][0]["url"];
  } else {
    throw std::invalid_argument("no base URL for " + source + "; pass --base-url");
  }
  out.registry.register_toolset(openapi_toolset(client, spec), ns_arg(s));
}

void add_mcp(Sources& out, const SourceSpec& s) {
  McpTransportConfig config;
  if (s.locator == "mock" || s.locator == "mock-sse" || s.locator == "mock-http") {
    auto kind = s.locator == "mock-http" ? McpTransportKind::streamable_http : McpTransportKind::sse;
    auto endpoint = testkit::start_mock_mcp(kind);
    out.mocks.push_back(endpoint.server);
    config = endpoint.transport;
  } else if (s.locator == "mock-stdio") {
    config = testkit::mock_mcp_stdio_config();
  } else if (is_url(s.locator)) {
    config = McpTransportConfig::from_url(s.locator);
  } else {
    auto words = split_words(s.locator);
    std::string command = words.front();
    words.erase(words.begin());
    config = McpTransportConfig::stdio(command, words);
  }
  auto session = McpSession::connect(config);
  Toolset set{session->server_name(), {}};
  for (const auto& d : session->list_tools()) set.tools.push_back(mcp_tool_from_descriptor(d, session));
  out.registry.register_toolset(set, ns_arg(s));
  out.registry.attach(session);
}

void load_sources(Sources& out, const std::vector<std::string>& specs, const std::string& base_override) {
  if (specs.empty()) throw std::invalid_argument("no --source given");
  for (const auto& text : specs) {
    SourceSpec s = parse_source(text);
    if (s.kind == "hub") {
      if (s.locator != "calculator") throw std::invalid_argument("hub has only \"calculator\", not " + s.locator);
      out.registry.register_toolset(hub::base_calculator(), ns_arg(s));
    } else if (s.kind == "openapi") {
      add_openapi(out, s, base_override);
    } else {
      add_mcp(out, s);
    }
    for (const auto& name : out.registry.names()) out.kind_of.emplace(name, s.kind);
  }
}

int report_source_error(const std::exception& e) {
  std::cerr << "toolreg: source error: " << e.what() << "\n";
  return kSourceError;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);
  CLI::App app{"Tool registry: list, describe, call and benchmark tools"};
  app.require_subcommand(1);
  app.fallthrough();

  std::vector<std::string> sources;
  std::string mode_text = "shared";
  std::size_t pool = default_pool_size();
  double timeout_s = 30;
  std::string base_url;
  app.add_option("-s,--source", sources, "kind:locator[:namespace], repeatable");
  app.add_option("--mode", mode_text, "shared or isolated (bench also takes both)")->capture_default_str();
  app.add_option("--pool", pool, "Pool size")->capture_default_str();
  app.add_option("--timeout", timeout_s, "Per-call timeout in seconds")->capture_default_str();
  app.add_option("--base-url", base_url, "Base URL for OpenAPI documents read from files");

  auto* list = app.add_subcommand("list", "Print name, source kind and description of every tool");

  std::string format_text = "chat";
  std::vector<std::string> describe_names;
  auto* describe = app.add_subcommand("describe", "Print tool definitions in a provider format");
  describe->add_option("--format", format_text, "chat or response")->capture_default_str();
  describe->add_option("names", describe_names, "Tools to describe (default all)");

  std::string call_name, call_args = "{}";
  auto* call = app.add_subcommand("call", "Run one tool; prints the value or the error");
  call->add_option("tool", call_name, "Tool name")->required();
  call->add_option("args", call_args, "Arguments as a JSON object")->capture_default_str();

  std::string bench_kind = "native", report_path, transport_text = "sse";
  std::size_t calls = 100, iterations = 10;
  bool per_call = false;
  auto* bench = app.add_subcommand("bench", "Run the concurrent batch benchmark");
  bench->add_option("--kind", bench_kind, "native, openapi or mcp")->capture_default_str();
  bench->add_option("--calls", calls, "Calls per batch")->capture_default_str();
  bench->add_option("--iterations", iterations, "Timed batches")->capture_default_str();
  bench->add_option("--transport", transport_text, "MCP transport: stdio, sse, streamable_http")->capture_default_str();
  bench->add_flag("--session-per-call", per_call, "Open a new MCP session for every call");
  bench->add_option("--report", report_path, "Write the JSON report here");

  CLI11_PARSE(app, argc, argv);

  std::chrono::milliseconds timeout(static_cast<long long>(timeout_s * 1000));
  if (timeout.count() <= 0) {
    std::cerr << "toolreg: --timeout must be positive\n";
    return kSourceError;
  }

  if (*bench) {
    auto kind = testkit::bench_tool_kind_from_string(bench_kind);
    if (!kind) {
      std::cerr << "toolreg: unknown bench kind " << bench_kind << "\n";
      return kSourceError;
    }
    std::vector<ExecutionMode> modes;
    if (mode_text == "both") {
      modes = {ExecutionMode::shared, ExecutionMode::isolated};
    } else if (auto m = execution_mode_from_string(mode_text)) {
      modes = {*m};
    } else {
      std::cerr << "toolreg: unknown mode " << mode_text << "\n";
      return kSourceError;
    }
    testkit::BenchConfig config;
    config.kind = *kind;
    config.calls = calls;
    config.iterations = iterations;
    config.pool_size = pool;
    config.per_call_timeout = timeout;
    config.mcp_session_per_call = per_call;
    if (transport_text == "stdio") {
      config.mcp_transport = McpTransportKind::stdio;
    } else if (transport_text == "sse") {
      config.mcp_transport = McpTransportKind::sse;
    } else if (transport_text == "streamable_http" || transport_text == "http") {
      config.mcp_transport = McpTransportKind::streamable_http;
    } else {
      std::cerr << "toolreg: unknown transport " << transport_text << "\n";
      return kSourceError;
    }

    std::vector<testkit::BenchReport> reports;
    try {
      for (auto m : modes) {
        config.mode = m;
        reports.push_back(testkit::run_bench(config));
        std::cout << reports.back().to_text();
      }
    } catch (const std::exception& e) {
      std::cerr << "toolreg: bench setup failed: " << e.what() << "\n";
      return kSourceError;
    }
    if (reports.size() == 2) {
      std::printf("shared/isolated median calls/s ratio: %.2fx\n", reports[0].cps_median / reports[1].cps_median);
    }
    if (!report_path.empty()) {
      Json out = reports.size() == 1 ? reports[0].to_json() : Json::array();
      if (reports.size() > 1) {
        for (const auto& r : reports) out.push_back(r.to_json());
      }
      std::ofstream(report_path) << out.dump(2) << "\n";
    }
    return 0;
  }

  auto mode = execution_mode_from_string(mode_text);
  if (!mode) {
    std::cerr << "toolreg: unknown mode " << mode_text << "\n";
    return kSourceError;
  }
  ExecutorConfig exec;
  exec.mode = *mode;
  exec.pool_size = pool;
  exec.per_call_timeout = timeout;

  Sources loaded;
  try {
    exec.check();
    loaded.registry.set_executor_config(exec);
    load_sources(loaded, sources, base_url);
  } catch (const std::exception& e) {
    return report_source_error(e);
  }

  if (*list) {
    std::size_t width = 4;
    for (const auto& n : loaded.registry.names()) width = std::max(width, n.size());
    std::printf("%-*s  %-7s  %s\n", static_cast<int>(width), "NAME", "SOURCE", "DESCRIPTION");
    for (const auto& n : loaded.registry.names()) {
      std::printf("%-*s  %-7s  %s\n", static_cast<int>(width), n.c_str(), loaded.kind_of[n].c_str(),
                  loaded.registry.get_tool(n)->description().c_str());
    }
    return 0;
  }

  if (*describe) {
    auto format = api_format_from_string(format_text);
    if (!format) {
      std::cerr << "toolreg: unknown format " << format_text << "\n";
      return kSourceError;
    }
    Json out = Json::array();
    std::vector<std::string> names = describe_names.empty() ? loaded.registry.names() : describe_names;
    for (const auto& n : names) {
      auto tool = loaded.registry.get_tool(n);
      if (!tool) {
        std::cerr << "toolreg: no tool named " << n << "\n";
        return kToolError;
      }
      out.push_back(format_tool_definition(*tool, *format, loaded.registry.separator()));
    }
    std::cout << out.dump(2) << "\n";
    return 0;
  }

  Json args = Json::parse(call_args, nullptr, false);
  if (args.is_discarded()) {
    std::cerr << "toolreg: arguments are not valid JSON\n";
    return kSourceError;
  }
  BatchResults results = loaded.registry.execute_tool_calls({ToolCall{"cli", call_name, args}});
  const ToolCallResult& result = results.at("cli");
  if (result.ok()) {
    std::cout << result.value().dump() << "\n";
    return 0;
  }
  std::cout << result.to_json().dump() << "\n";
  return kToolError;
}
