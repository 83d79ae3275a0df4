#pragma once

#include <httplib.h>

#include <mutex>
#include <random>
#include <string>
#include <thread>

#include "toolreg/errors.hpp"
#include "toolreg/testkit.hpp"

namespace toolreg::testkit::detail {

/// Thread budget and keep-alive settings shared by the mock servers. Every
/// open keep-alive connection or event stream occupies one thread.
inline void tune_server(httplib::Server& server) {
  server.new_task_queue = [] { return new httplib::ThreadPool(192); };
  server.set_keep_alive_max_count(100'000);
  server.set_keep_alive_timeout(1);
  server.set_tcp_nodelay(true);
  server.set_read_timeout(30, 0);
  server.set_write_timeout(30, 0);
  // httplib defaults to SO_REUSEPORT, which lets a second server share a busy port.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
}

/// Binds and returns the port. Throws BindError.
inline int bind_server(httplib::Server& server, const std::string& host, int port) {
  if (port == 0) {
    int bound = server.bind_to_any_port(host);
    if (bound <= 0) throw BindError("cannot bind " + host + " to a free port");
    return bound;
  }
  if (!server.bind_to_port(host, port)) throw BindError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

class Jitter {
 public:
  Jitter(Latency latency, std::uint64_t seed) : latency_(latency), rng_(seed) {}

  void sleep() {
    auto delay = latency_.fixed;
    if (latency_.jitter.count() > 0) {
      std::lock_guard lock(mutex_);
      delay += std::chrono::milliseconds(std::uniform_int_distribution<long>(0, latency_.jitter.count())(rng_));
    }
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
  }

 private:
  Latency latency_;
  std::mutex mutex_;
  std::mt19937_64 rng_;
};

}  // namespace toolreg::testkit::detail
