// Standalone mock servers: the OpenAPI calculator and the MCP calculator
// (stdio or HTTP). HTTP servers run until SIGINT or SIGTERM.

#include <csignal>
#include <cstdio>
#include <sstream>

#include <CLI11.hpp>

#include "toolreg/testkit.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace toolreg::testkit;
  std::signal(SIGPIPE, SIG_IGN);

  CLI::App app{"Mock tool servers for tests and benchmarks"};
  app.require_subcommand(1);

  MockOpenApiConfig oa;
  long oa_latency = 0, oa_jitter = 0;
  std::vector<std::string> faults;
  std::string bearer;
  auto* openapi = app.add_subcommand("openapi", "Serve the calculator over HTTP with an OpenAPI document");
  openapi->add_option("--host", oa.host, "Bind address")->capture_default_str();
  openapi->add_option("--port", oa.port, "Port, 0 for any")->capture_default_str();
  openapi->add_option("--latency-ms", oa_latency, "Fixed delay per request");
  openapi->add_option("--jitter-ms", oa_jitter, "Uniform extra delay bound");
  openapi->add_option("--fault", faults, "ROUTE=STATUS, e.g. /divide=500");
  openapi->add_option("--bearer", bearer, "Require this bearer token");
  openapi->add_option("--seed", oa.seed, "Jitter seed");

  MockMcpConfig mc;
  long mc_latency = 0, mc_jitter = 0;
  std::string tools = "add,subtract,multiply,divide", error_tools;
  bool stdio = false;
  auto* mcp = app.add_subcommand("mcp", "Serve the calculator as an MCP server");
  mcp->add_flag("--stdio", stdio, "Speak newline-delimited JSON-RPC on stdin/stdout");
  mcp->add_option("--host", mc.host, "Bind address")->capture_default_str();
  mcp->add_option("--port", mc.port, "Port, 0 for any")->capture_default_str();
  mcp->add_option("--name", mc.server_name, "Server name")->capture_default_str();
  mcp->add_option("--server-version", mc.server_version, "Server version");
  mcp->add_option("--tools", tools, "Comma-separated tool subset")->capture_default_str();
  mcp->add_option("--page-size", mc.page_size, "tools/list page size, 0 for one page");
  mcp->add_option("--error-tools", error_tools, "Comma-separated tools answering isError");
  mcp->add_flag("--drop-after-initialize", mc.drop_after_initialize, "Hang up after the handshake");
  mcp->add_option("--latency-ms", mc_latency, "Fixed delay per tools/call");
  mcp->add_option("--jitter-ms", mc_jitter, "Uniform extra delay bound");
  mcp->add_option("--protocol-version", mc.protocol_version, "Version answered to initialize");
  mcp->add_option("--seed", mc.seed, "Jitter seed");

  CLI11_PARSE(app, argc, argv);

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);

  try {
    if (*openapi) {
      oa.latency = {std::chrono::milliseconds(oa_latency), std::chrono::milliseconds(oa_jitter)};
      for (const auto& f : faults) {
        auto eq = f.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--fault", "expected ROUTE=STATUS");
        oa.fault_status[f.substr(0, eq)] = std::stoi(f.substr(eq + 1));
      }
      if (!bearer.empty()) oa.bearer_token = bearer;
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      auto server = MockOpenApiServer::start(oa);
      std::printf("%s\n", server->base_url().c_str());
      std::fflush(stdout);
      return wait_for_signal();
    }

    mc.latency = {std::chrono::milliseconds(mc_latency), std::chrono::milliseconds(mc_jitter)};
    mc.tools = split_commas(tools);
    for (auto& t : split_commas(error_tools)) mc.error_tools.insert(t);
    if (stdio) return run_mcp_stdio_server(mc);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    auto server = MockMcpServer::start(mc);
    std::printf("%s\n%s\n", server->sse_url().c_str(), server->streamable_url().c_str());
    std::fflush(stdout);
    return wait_for_signal();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "toolreg-mock: %s\n", e.what());
    return 2;
  }
}
