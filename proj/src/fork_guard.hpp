#pragma once

#include <mutex>
#include <vector>

namespace toolreg::detail {

// Process-global mutexes that code running in a forked isolated worker may
// touch. The worker pool locks all of them around fork() so the child never
// inherits one held by a thread that does not exist on its side.
class ForkSafeMutex {
 public:
  ForkSafeMutex();
  ForkSafeMutex(const ForkSafeMutex&) = delete;
  ForkSafeMutex& operator=(const ForkSafeMutex&) = delete;

  void lock() { m_.lock(); }
  void unlock() { m_.unlock(); }
  bool try_lock() { return m_.try_lock(); }

 private:
  std::mutex m_;
};

// RAII: holds every ForkSafeMutex for the duration of a fork() call.
class ForkLockGuard {
 public:
  ForkLockGuard();
  ~ForkLockGuard();
  ForkLockGuard(const ForkLockGuard&) = delete;
  ForkLockGuard& operator=(const ForkLockGuard&) = delete;

 private:
  std::vector<ForkSafeMutex*> held_;
};

}  // namespace toolreg::detail
