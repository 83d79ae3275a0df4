#include "pools.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <map>

#include "fork_guard.hpp"
#include "toolreg/transfer.hpp"

namespace toolreg::detail {

// ---------------------------------------------------------------- ThreadPool

ThreadPool::ThreadPool(std::size_t threads) : state_(std::make_shared<State>()) {
  state_->running_threads = threads;
  threads_.reserve(threads);
  for (std::size_t i = 0; i < threads; ++i) threads_.emplace_back(worker, state_);
}

ThreadPool::~ThreadPool() { shutdown(std::chrono::seconds(30)); }

void ThreadPool::submit(std::function<void()> task) {
  {
    std::lock_guard lock(state_->mutex);
    if (state_->stopping) throw std::logic_error("thread pool is shut down");
    state_->queue.push_back(std::move(task));
  }
  state_->cv.notify_one();
}

void ThreadPool::worker(std::shared_ptr<State> state) {
  while (true) {
    std::function<void()> task;
    {
      std::unique_lock lock(state->mutex);
      state->cv.wait(lock, [&] { return state->stopping || !state->queue.empty(); });
      if (state->queue.empty()) break;
      task = std::move(state->queue.front());
      state->queue.pop_front();
    }
    task();
  }
  std::lock_guard lock(state->mutex);
  --state->running_threads;
  state->exited_cv.notify_all();
}

void ThreadPool::shutdown(std::chrono::milliseconds grace) {
  if (shut_down_) return;
  shut_down_ = true;
  {
    std::unique_lock lock(state_->mutex);
    state_->stopping = true;
    state_->cv.notify_all();
    state_->exited_cv.wait_for(lock, grace, [&] { return state_->running_threads == 0; });
  }
  for (auto& t : threads_) {
    bool done;
    {
      std::lock_guard lock(state_->mutex);
      done = state_->running_threads == 0;
    }
    if (done) {
      t.join();
    } else {
      t.detach();
    }
  }
}

// -------------------------------------------------------------- IsolatedPool

namespace {

bool send_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

enum class ReadStatus { line, closed, timeout };

ReadStatus read_line(int fd, std::string& buffer, std::string& line,
                     std::optional<std::chrono::steady_clock::time_point> deadline) {
  while (true) {
    auto nl = buffer.find('\n');
    if (nl != std::string::npos) {
      line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      return ReadStatus::line;
    }
    int wait_ms = -1;
    if (deadline) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return ReadStatus::timeout;
      wait_ms = static_cast<int>(std::min<long long>(left.count() + 1, 1 << 30));
    }
    pollfd p{fd, POLLIN, 0};
    int rc = ::poll(&p, 1, wait_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      return ReadStatus::closed;
    }
    if (rc == 0) continue;
    char chunk[65536];
    ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return ReadStatus::closed;
    }
    if (n == 0) return ReadStatus::closed;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

void close_other_fds(int keep) {
  // Descriptors inherited from the parent (other workers' sockets, listening
  // sockets) would keep those alive past their owner's close().
  if (keep > 3) ::close_range(3, static_cast<unsigned>(keep - 1), 0);
  ::close_range(static_cast<unsigned>(keep + 1), ~0U, 0);
}

}  // namespace

ToolCallResult run_with_retry(const Tool& tool, const Json& arguments, const std::string& id,
                              const RetryPolicy& retry) {
  ToolCallResult result = run_sync_bridge(tool, arguments, id);
  auto delay = std::chrono::duration<double, std::milli>(retry.base_delay);
  for (int attempt = 0; attempt < retry.max_retries && !result.ok() && result.error().kind == ErrorKind::transport;
       ++attempt) {
    std::this_thread::sleep_for(delay);
    delay *= retry.factor;
    result = run_sync_bridge(tool, arguments, id);
  }
  return result;
}

IsolatedPool::IsolatedPool(std::size_t workers) : state_(std::make_shared<State>()) {
  threads_.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back(dispatch, state_);
}

IsolatedPool::~IsolatedPool() { shutdown(std::chrono::seconds(30)); }

void IsolatedPool::submit(IsolatedJob job) {
  {
    std::lock_guard lock(state_->mutex);
    if (state_->stopping) throw std::logic_error("isolated pool is shut down");
    state_->queue.push_back(std::move(job));
  }
  state_->cv.notify_one();
}

void IsolatedPool::shutdown(std::chrono::milliseconds grace) {
  if (shut_down_) return;
  shut_down_ = true;
  {
    std::lock_guard lock(state_->mutex);
    state_->stopping = true;
  }
  state_->cv.notify_all();
  (void)grace;  // each in-flight job is already bounded by its own timeout
  for (auto& t : threads_) t.join();
}

bool IsolatedPool::spawn(Worker& worker) {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) return false;
  std::uint64_t factories = handler_factory_generation();
  pid_t pid;
  {
    ForkLockGuard guard;
    pid = ::fork();
  }
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    return false;
  }
  if (pid == 0) {
    close_other_fds(sv[1]);
    isolated_worker_main(sv[1]);
  }
  ::close(sv[1]);
  worker.pid = pid;
  worker.fd = sv[0];
  worker.factories = factories;
  worker.buffer.clear();
  return true;
}

std::string IsolatedPool::reap(Worker& worker, bool kill_first) {
  if (worker.pid <= 0) return "worker not running";
  if (kill_first) ::kill(worker.pid, SIGKILL);
  ::close(worker.fd);
  int status = 0;
  std::string what = "isolated worker exited";
  if (::waitpid(worker.pid, &status, 0) == worker.pid) {
    if (WIFSIGNALED(status)) {
      what = "isolated worker terminated by signal " + std::to_string(WTERMSIG(status));
    } else if (WIFEXITED(status)) {
      what = "isolated worker exited with status " + std::to_string(WEXITSTATUS(status));
    }
  }
  worker = Worker{};
  return what;
}

ToolCallResult IsolatedPool::run_job(Worker& worker, const IsolatedJob& job) {
  const std::string id = job.request.value("id", "");
  if (worker.pid > 0 && worker.factories != handler_factory_generation()) reap(worker, true);
  if (worker.pid <= 0 && !spawn(worker)) {
    return ToolCallResult::failure(id, ErrorKind::execution, std::string("cannot start isolated worker: ") +
                                                                 std::strerror(errno));
  }
  if (job.on_start) job.on_start();
  auto deadline = std::chrono::steady_clock::now() + job.timeout;
  if (!send_all(worker.fd, job.request.dump() + "\n")) {
    return ToolCallResult::failure(id, ErrorKind::execution, reap(worker, true) + " before accepting the call");
  }
  std::string line;
  switch (read_line(worker.fd, worker.buffer, line, deadline)) {
    case ReadStatus::line:
      try {
        return ToolCallResult::from_json(Json::parse(line)).with_id(id);
      } catch (const std::exception& e) {
        reap(worker, true);
        return ToolCallResult::failure(id, ErrorKind::execution, std::string("malformed worker reply: ") + e.what());
      }
    case ReadStatus::timeout:
      reap(worker, true);
      return ToolCallResult::failure(id, ErrorKind::timeout,
                                     "call exceeded timeout of " + std::to_string(job.timeout.count()) + " ms");
    case ReadStatus::closed:
      break;
  }
  return ToolCallResult::failure(id, ErrorKind::execution, reap(worker, false) + " while running the call");
}

void IsolatedPool::dispatch(std::shared_ptr<State> state) {
  Worker worker;
  while (true) {
    IsolatedJob job;
    {
      std::unique_lock lock(state->mutex);
      state->cv.wait(lock, [&] { return state->stopping || !state->queue.empty(); });
      if (state->queue.empty()) break;
      job = std::move(state->queue.front());
      state->queue.pop_front();
    }
    ToolCallResult result = run_job(worker, job);
    job.on_done(std::move(result));
  }
  if (worker.pid > 0) {
    // Closing the socket makes the worker's read loop exit.
    ::shutdown(worker.fd, SHUT_RDWR);
    for (int i = 0; i < 100; ++i) {
      int status;
      if (::waitpid(worker.pid, &status, WNOHANG) == worker.pid) {
        ::close(worker.fd);
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    reap(worker, true);
  }
}

// ------------------------------------------------------------- worker side

void isolated_worker_main(int fd) {
  std::map<std::string, Tool> tools;
  std::string buffer;
  std::string line;
  while (read_line(fd, buffer, line, std::nullopt) == ReadStatus::line) {
    Json reply;
    std::string id;
    try {
      Json request = Json::parse(line);
      id = request.value("id", "");
      const Json& spec = request.at("tool");
      TransferSpec transfer{request.at("transfer").at("factory").get<std::string>(), request.at("transfer").at("config")};
      std::string key = transfer.factory + "\n" + transfer.config.dump() + "\n" + spec.at("name").get<std::string>();
      auto it = tools.find(key);
      if (it == tools.end()) {
        Tool tool = make_tool(spec.at("name").get<std::string>(), spec.at("description").get<std::string>(),
                              ParameterSchema::from_json(spec.at("parameters")), make_handler(transfer));
        it = tools.emplace(key, std::move(tool)).first;
      }
      RetryPolicy retry;
      if (auto r = request.find("retry"); r != request.end()) {
        retry.max_retries = r->value("max_retries", 0);
        retry.base_delay = std::chrono::milliseconds(r->value("base_delay_ms", 50));
        retry.factor = r->value("factor", 2.0);
      }
      reply = run_with_retry(it->second, request.at("arguments"), id, retry).to_json();
    } catch (const std::exception& e) {
      reply = ToolCallResult::failure(id, ErrorKind::execution, std::string("worker could not run the call: ") + e.what())
                  .to_json();
    }
    if (!send_all(fd, reply.dump() + "\n")) break;
  }
  ::_exit(0);
}

}  // namespace toolreg::detail
