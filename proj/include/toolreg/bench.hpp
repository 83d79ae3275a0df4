#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "toolreg/executor.hpp"
#include "toolreg/mcp.hpp"

namespace toolreg::testkit {

enum class BenchToolKind { native, openapi, mcp };

std::string_view to_string(BenchToolKind kind);
std::optional<BenchToolKind> bench_tool_kind_from_string(std::string_view text);

struct BenchConfig {
  BenchToolKind kind = BenchToolKind::native;
  std::size_t calls = 100;
  std::size_t iterations = 10;
  ExecutionMode mode = ExecutionMode::shared;
  std::size_t pool_size = default_pool_size();
  std::chrono::milliseconds per_call_timeout{30'000};
  McpTransportKind mcp_transport = McpTransportKind::sse;
  /// Open a fresh MCP session for every call. Such tools can be rebuilt in
  /// isolated workers; session-sharing ones fall back to shared mode.
  bool mcp_session_per_call = false;
  std::uint64_t seed = 7;
};

struct BenchReport {
  BenchToolKind kind = BenchToolKind::native;
  ExecutionMode mode = ExecutionMode::shared;
  std::size_t pool = 0;
  std::size_t calls = 0;
  std::size_t iterations = 0;
  std::vector<double> wall_ms;
  double cps_min = 0;
  double cps_median = 0;
  double cps_max = 0;
  double success_rate = 0;

  /// {tool_kind, mode, pool, calls, iterations, wall_ms, calls_per_s{min,median,max}, success_rate}
  Json to_json() const;
  std::string to_text() const;
};

/// Starts the mocks the kind needs, runs one untimed warm-up batch, then
/// `iterations` timed batches of `calls` calls each. Throws on setup failure.
BenchReport run_bench(const BenchConfig& config);

/// Median of a non-empty list.
double median(std::vector<double> values);

}  // namespace toolreg::testkit
