#include "fork_guard.hpp"

namespace toolreg::detail {

namespace {

struct MutexList {
  std::mutex guard;
  std::vector<ForkSafeMutex*> items;
};

MutexList& mutex_list() {
  static MutexList* list = new MutexList;  // leaked: must outlive static destructors
  return *list;
}

}  // namespace

ForkSafeMutex::ForkSafeMutex() {
  auto& list = mutex_list();
  std::lock_guard lock(list.guard);
  list.items.push_back(this);
}

ForkLockGuard::ForkLockGuard() {
  auto& list = mutex_list();
  list.guard.lock();
  held_ = list.items;
  for (auto* m : held_) m->lock();
}

ForkLockGuard::~ForkLockGuard() {
  for (auto it = held_.rbegin(); it != held_.rend(); ++it) (*it)->unlock();
  mutex_list().guard.unlock();
}

}  // namespace toolreg::detail
