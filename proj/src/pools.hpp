#pragma once

#include <sys/types.h>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "toolreg/executor.hpp"

namespace toolreg::detail {

// Fixed-size thread pool. Tasks that outlive shutdown's grace period are
// left running on detached threads.
class ThreadPool {
 public:
  explicit ThreadPool(std::size_t threads);
  ~ThreadPool();

  void submit(std::function<void()> task);
  void shutdown(std::chrono::milliseconds grace);

 private:
  struct State {
    std::mutex mutex;
    std::condition_variable cv;
    std::condition_variable exited_cv;
    std::deque<std::function<void()>> queue;
    bool stopping = false;
    std::size_t running_threads = 0;
  };
  static void worker(std::shared_ptr<State> state);

  std::shared_ptr<State> state_;
  std::vector<std::thread> threads_;
  bool shut_down_ = false;
};

// One call sent to an isolated worker process.
struct IsolatedJob {
  Json request;  // {"id","tool":{...},"transfer":{...},"arguments","retry":{...}}
  std::chrono::milliseconds timeout;
  std::function<void()> on_start;
  std::function<void(ToolCallResult)> on_done;
};

// Pool of forked worker processes, one dispatcher thread per worker. A
// worker that crashes or exceeds the call timeout is killed and replaced
// before its dispatcher takes the next job.
class IsolatedPool {
 public:
  explicit IsolatedPool(std::size_t workers);
  ~IsolatedPool();

  void submit(IsolatedJob job);
  void shutdown(std::chrono::milliseconds grace);

 private:
  struct Worker {
    pid_t pid = -1;
    int fd = -1;
    std::uint64_t factories = 0;  // handler_factory_generation() at fork
    std::string buffer;
  };
  struct State {
    std::mutex mutex;
    std::condition_variable cv;
    std::deque<IsolatedJob> queue;
    bool stopping = false;
  };

  static void dispatch(std::shared_ptr<State> state);
  static ToolCallResult run_job(Worker& worker, const IsolatedJob& job);
  static bool spawn(Worker& worker);
  static std::string reap(Worker& worker, bool kill_first);

  std::shared_ptr<State> state_;
  std::vector<std::thread> threads_;
  bool shut_down_ = false;
};

// run_sync_bridge plus the transport-error retry policy.
ToolCallResult run_with_retry(const Tool& tool, const Json& arguments, const std::string& id,
                              const RetryPolicy& retry);

// Entry point of a forked worker; never returns.
[[noreturn]] void isolated_worker_main(int fd);

}  // namespace toolreg::detail
