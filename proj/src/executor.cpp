#include "toolreg/executor.hpp"

#include <condition_variable>
#include <set>
#include <stdexcept>
#include <thread>

#include "pools.hpp"
#include "toolreg/transfer.hpp"

namespace toolreg {

std::string_view to_string(ExecutionMode mode) {
  return mode == ExecutionMode::shared ? "shared" : "isolated";
}

std::optional<ExecutionMode> execution_mode_from_string(std::string_view text) {
  if (text == "shared" || text == "thread") return ExecutionMode::shared;
  if (text == "isolated" || text == "process") return ExecutionMode::isolated;
  return std::nullopt;
}

std::size_t default_pool_size() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

void ExecutorConfig::check() const {
  if (pool_size == 0) throw std::invalid_argument("pool_size must be at least 1");
  if (per_call_timeout.count() <= 0) throw std::invalid_argument("per_call_timeout must be positive");
  if (retry.max_retries < 0) throw std::invalid_argument("max_retries must not be negative");
}

ToolCallResult run_sync_bridge(const Tool& tool, const Json& arguments, std::string id) {
  return run_tool(tool, arguments, std::move(id));
}

bool classify_transferable(const Tool& tool) {
  const auto& spec = tool.transfer();
  if (!spec || !has_handler_factory(spec->factory)) return false;
  try {
    return json_equal(Json::parse(spec->config.dump()), spec->config);
  } catch (const std::exception&) {
    return false;
  }
}

namespace {

using Clock = std::chrono::steady_clock;

struct Slot {
  std::string id;
  std::optional<ToolCallResult> result;
  std::optional<Clock::time_point> started;
  bool enforces_own_timeout = false;
};

struct Batch {
  std::mutex mutex;
  std::condition_variable cv;
  std::vector<Slot> slots;
  std::size_t remaining = 0;
  std::chrono::milliseconds timeout{0};

  void start(std::size_t i) {
    {
      std::lock_guard lock(mutex);
      slots[i].started = Clock::now();
    }
    cv.notify_all();
  }

  // First result wins; a late completion after a timeout is dropped.
  void finish(std::size_t i, ToolCallResult result) {
    {
      std::lock_guard lock(mutex);
      if (slots[i].result) return;
      slots[i].result = std::move(result);
      --remaining;
    }
    cv.notify_all();
  }

  void wait() {
    std::unique_lock lock(mutex);
    while (remaining > 0) {
      auto now = Clock::now();
      std::optional<Clock::time_point> next;
      for (auto& slot : slots) {
        if (slot.result || !slot.started || slot.enforces_own_timeout) continue;
        auto deadline = *slot.started + timeout;
        if (now >= deadline) {
          slot.result = ToolCallResult::failure(slot.id, ErrorKind::timeout,
                                                "call exceeded timeout of " + std::to_string(timeout.count()) + " ms");
          --remaining;
        } else if (!next || deadline < *next) {
          next = deadline;
        }
      }
      if (remaining == 0) break;
      if (next) {
        cv.wait_until(lock, *next);
      } else {
        cv.wait(lock);
      }
    }
  }
};

Json retry_json(const RetryPolicy& retry) {
  return Json{{"max_retries", retry.max_retries},
              {"base_delay_ms", retry.base_delay.count()},
              {"factor", retry.factor}};
}

}  // namespace

Executor::Executor(ExecutorConfig defaults) : defaults_(std::move(defaults)) { defaults_.check(); }

Executor::~Executor() { shutdown(); }

std::shared_ptr<detail::ThreadPool> Executor::shared_pool(std::size_t size) {
  std::lock_guard lock(pools_mutex_);
  if (shut_down_) throw std::logic_error("executor is shut down");
  auto& pool = shared_pools_[size];
  if (!pool) pool = std::make_shared<detail::ThreadPool>(size);
  return pool;
}

std::shared_ptr<detail::IsolatedPool> Executor::isolated_pool(std::size_t size) {
  std::lock_guard lock(pools_mutex_);
  if (shut_down_) throw std::logic_error("executor is shut down");
  auto& pool = isolated_pools_[size];
  if (!pool) pool = std::make_shared<detail::IsolatedPool>(size);
  return pool;
}

BatchResults Executor::execute_batch(const ToolLookup& lookup, const std::vector<ToolCall>& calls) {
  return execute_batch(lookup, calls, defaults_);
}

BatchResults Executor::execute_batch(const ToolLookup& lookup, const std::vector<ToolCall>& calls,
                                     const ExecutorConfig& config) {
  config.check();
  std::set<std::string_view> ids;
  for (const auto& call : calls) {
    if (call.id.empty()) throw std::invalid_argument("tool call id must not be empty");
    if (!ids.insert(call.id).second) throw std::invalid_argument("duplicate tool call id \"" + call.id + "\"");
  }

  auto batch = std::make_shared<Batch>();
  batch->timeout = config.per_call_timeout;
  batch->slots.resize(calls.size());
  batch->remaining = calls.size();

  // Normalisation: resolve names and choose a route for every call.
  enum class Route { shared, isolated, done };
  std::vector<Route> routes(calls.size(), Route::shared);
  std::vector<std::optional<Tool>> tools(calls.size());
  for (std::size_t i = 0; i < calls.size(); ++i) {
    batch->slots[i].id = calls[i].id;
    tools[i] = lookup(calls[i].name);
    if (!tools[i]) {
      batch->slots[i].result =
          ToolCallResult::failure(calls[i].id, ErrorKind::not_found, "no tool named \"" + calls[i].name + "\"");
      --batch->remaining;
      routes[i] = Route::done;
      continue;
    }
    if (config.mode == ExecutionMode::isolated) {
      if (classify_transferable(*tools[i])) {
        routes[i] = Route::isolated;
      } else if (config.fallback_on_nontransferable) {
        ++fallbacks_;
      } else {
        batch->slots[i].result = ToolCallResult::failure(
            calls[i].id, ErrorKind::execution, "tool \"" + calls[i].name + "\" cannot be sent to an isolated worker");
        --batch->remaining;
        routes[i] = Route::done;
      }
    }
  }

  // Execution.
  std::shared_ptr<detail::ThreadPool> threads;
  std::shared_ptr<detail::IsolatedPool> workers;
  for (std::size_t i = 0; i < calls.size(); ++i) {
    if (routes[i] == Route::done) continue;
    ++started_;
    if (routes[i] == Route::shared) {
      if (!threads) threads = shared_pool(config.pool_size);
      threads->submit([batch, i, tool = *tools[i], args = calls[i].arguments, id = calls[i].id,
                       retry = config.retry] {
        batch->start(i);
        batch->finish(i, detail::run_with_retry(tool, args, id, retry));
      });
    } else {
      if (!workers) workers = isolated_pool(config.pool_size);
      batch->slots[i].enforces_own_timeout = true;
      const Tool& tool = *tools[i];
      Json request = Json::object();
      request["id"] = calls[i].id;
      request["tool"] = Json{{"name", tool.name()},
                             {"description", tool.description()},
                             {"parameters", tool.parameters().json()}};
      request["transfer"] = Json{{"factory", tool.transfer()->factory}, {"config", tool.transfer()->config}};
      request["arguments"] = calls[i].arguments;
      request["retry"] = retry_json(config.retry);
      workers->submit(detail::IsolatedJob{std::move(request), config.per_call_timeout,
                                          [batch, i] { batch->start(i); },
                                          [batch, i](ToolCallResult r) { batch->finish(i, std::move(r)); }});
    }
  }

  // Result transformation.
  batch->wait();
  BatchResults results;
  std::lock_guard lock(batch->mutex);
  for (auto& slot : batch->slots) {
    const ToolCallResult& r = *slot.result;
    if (r.ok()) {
      ++succeeded_;
    } else {
      ++failed_;
      if (r.error().kind == ErrorKind::timeout) ++timed_out_;
    }
    results.emplace(slot.id, r);
  }
  return results;
}

ExecutorStats Executor::stats() const {
  return ExecutorStats{started_.load(), succeeded_.load(), failed_.load(), timed_out_.load(), fallbacks_.load()};
}

void Executor::shutdown() {
  std::map<std::size_t, std::shared_ptr<detail::ThreadPool>> threads;
  std::map<std::size_t, std::shared_ptr<detail::IsolatedPool>> workers;
  {
    std::lock_guard lock(pools_mutex_);
    if (shut_down_) return;
    shut_down_ = true;
    threads.swap(shared_pools_);
    workers.swap(isolated_pools_);
  }
  for (auto& [_, pool] : threads) pool->shutdown(defaults_.per_call_timeout);
  for (auto& [_, pool] : workers) pool->shutdown(defaults_.per_call_timeout);
}

}  // namespace toolreg
