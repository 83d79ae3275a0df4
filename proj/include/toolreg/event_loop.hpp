#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace toolreg {

/// Single-threaded event loop driving asynchronous tool handlers. Tasks and
/// timers run on the loop's own thread, in order of readiness.
class EventLoop {
 public:
  using Task = std::function<void()>;
  using Clock = std::chrono::steady_clock;

  EventLoop();
  ~EventLoop();
  EventLoop(const EventLoop&) = delete;
  EventLoop& operator=(const EventLoop&) = delete;

  void post(Task task);
  void post_after(Clock::duration delay, Task task);

  /// True when called from this loop's thread.
  bool in_loop_thread() const;

  /// Loop running on the calling thread, or nullptr.
  static EventLoop* current();

  /// Process-wide default loop, started on first use. A forked child gets a
  /// fresh one.
  static EventLoop& shared();

 private:
  struct Timer {
    Clock::time_point due;
    std::uint64_t seq;
    Task task;
    bool operator>(const Timer& other) const {
      return due != other.due ? due > other.due : seq > other.seq;
    }
  };

  void run();

  std::mutex mutex_;
  std::condition_variable cv_;
  std::priority_queue<Timer, std::vector<Timer>, std::greater<>> timers_;
  std::uint64_t next_seq_ = 0;
  bool stopping_ = false;
  std::thread thread_;
};

}  // namespace toolreg
