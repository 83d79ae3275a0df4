#include "toolreg/event_loop.hpp"

#include <unistd.h>

#include <memory>

#include "fork_guard.hpp"

namespace toolreg {

namespace {

thread_local EventLoop* tls_current = nullptr;

struct SharedLoop {
  detail::ForkSafeMutex mutex;
  pid_t owner = 0;
  EventLoop* loop = nullptr;
};

SharedLoop& shared_loop_state() {
  static SharedLoop* state = new SharedLoop;
  return *state;
}

}  // namespace

EventLoop::EventLoop() : thread_([this] { run(); }) {}

EventLoop::~EventLoop() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) {
    if (thread_.get_id() == std::this_thread::get_id()) {
      thread_.detach();
    } else {
      thread_.join();
    }
  }
}

void EventLoop::post(Task task) { post_after(Clock::duration::zero(), std::move(task)); }

void EventLoop::post_after(Clock::duration delay, Task task) {
  {
    std::lock_guard lock(mutex_);
    timers_.push(Timer{Clock::now() + delay, next_seq_++, std::move(task)});
  }
  cv_.notify_one();
}

bool EventLoop::in_loop_thread() const { return thread_.get_id() == std::this_thread::get_id(); }

EventLoop* EventLoop::current() { return tls_current; }

EventLoop& EventLoop::shared() {
  auto& state = shared_loop_state();
  std::lock_guard lock(state.mutex);
  pid_t pid = ::getpid();
  if (state.loop == nullptr || state.owner != pid) {
    // The parent's loop thread does not exist in a forked child; its object
    // is abandoned rather than destroyed.
    state.loop = new EventLoop;
    state.owner = pid;
  }
  return *state.loop;
}

void EventLoop::run() {
  tls_current = this;
  std::unique_lock lock(mutex_);
  while (true) {
    if (stopping_) break;
    if (timers_.empty()) {
      cv_.wait(lock);
      continue;
    }
    auto due = timers_.top().due;
    if (Clock::now() < due) {
      cv_.wait_until(lock, due);
      continue;
    }
    Task task = std::move(const_cast<Timer&>(timers_.top()).task);
    timers_.pop();
    lock.unlock();
    try {
      task();
    } catch (...) {
      // Handlers report failures through their Completion; a throwing task
      // must not take the loop down.
    }
    lock.lock();
  }
  tls_current = nullptr;
}

}  // namespace toolreg
