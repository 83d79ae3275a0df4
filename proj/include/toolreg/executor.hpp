#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toolreg/tool.hpp"

namespace toolreg {

/// shared: in-process thread pool, handlers run in the caller's address
/// space. isolated: pool of forked worker processes; arguments and results
/// cross a JSON serialization boundary and a crashing handler only takes its
/// worker down.
enum class ExecutionMode { shared, isolated };

std::string_view to_string(ExecutionMode mode);
std::optional<ExecutionMode> execution_mode_from_string(std::string_view text);

/// Retries applied only to ErrorKind::transport results. Delay before retry
/// n (0-based) is base_delay * factor^n.
struct RetryPolicy {
  int max_retries = 0;
  std::chrono::milliseconds base_delay{50};
  double factor = 2.0;
};

std::size_t default_pool_size();

struct ExecutorConfig {
  ExecutionMode mode = ExecutionMode::shared;
  std::size_t pool_size = default_pool_size();
  std::chrono::milliseconds per_call_timeout{30'000};
  bool fallback_on_nontransferable = true;
  RetryPolicy retry;

  /// Throws std::invalid_argument when pool_size or the timeout is zero.
  void check() const;
};

struct ExecutorStats {
  std::uint64_t started = 0;
  std::uint64_t succeeded = 0;
  std::uint64_t failed = 0;
  std::uint64_t timed_out = 0;
  std::uint64_t fallbacks = 0;
};

using ToolLookup = std::function<std::optional<Tool>(std::string_view name)>;
using BatchResults = std::map<std::string, ToolCallResult>;

namespace detail {
class ThreadPool;
class IsolatedPool;
}  // namespace detail

class Executor {
 public:
  explicit Executor(ExecutorConfig defaults = {});
  ~Executor();
  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  /// Runs every call and returns exactly one result per call id. Never
  /// throws for per-call problems; throws std::invalid_argument when call
  /// ids are empty or repeated.
  BatchResults execute_batch(const ToolLookup& lookup, const std::vector<ToolCall>& calls);
  BatchResults execute_batch(const ToolLookup& lookup, const std::vector<ToolCall>& calls,
                             const ExecutorConfig& config);

  const ExecutorConfig& defaults() const { return defaults_; }
  ExecutorStats stats() const;

  /// Stops all pools. Idempotent; in-flight calls get up to their timeout.
  void shutdown();

 private:
  std::shared_ptr<detail::ThreadPool> shared_pool(std::size_t size);
  std::shared_ptr<detail::IsolatedPool> isolated_pool(std::size_t size);

  ExecutorConfig defaults_;
  std::mutex pools_mutex_;
  bool shut_down_ = false;
  std::map<std::size_t, std::shared_ptr<detail::ThreadPool>> shared_pools_;
  std::map<std::size_t, std::shared_ptr<detail::IsolatedPool>> isolated_pools_;

  std::atomic<std::uint64_t> started_{0};
  std::atomic<std::uint64_t> succeeded_{0};
  std::atomic<std::uint64_t> failed_{0};
  std::atomic<std::uint64_t> timed_out_{0};
  std::atomic<std::uint64_t> fallbacks_{0};
};

/// Same contract as run_tool; the single entry point pool workers use.
ToolCallResult run_sync_bridge(const Tool& tool, const Json& arguments, std::string id = "");

/// True when the tool carries a TransferSpec whose factory is registered and
/// whose config survives a JSON round trip.
bool classify_transferable(const Tool& tool);

}  // namespace toolreg
