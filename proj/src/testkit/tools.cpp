#include <csignal>
#include <mutex>
#include <thread>

#include "toolreg/testkit.hpp"
#include "toolreg/transfer.hpp"

namespace toolreg::testkit {

namespace {

const Json kOpenObject = {{"type", "object"}, {"properties", Json::object()}, {"additionalProperties", true}};

SyncHandler latency_handler(std::chrono::milliseconds delay) {
  return [delay](const Json& args) {
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    return args;
  };
}

AsyncHandler async_latency_handler(std::chrono::milliseconds delay) {
  return [delay](const Json& args, EventLoop& loop, Completion done) {
    loop.post_after(delay, [done, args] { done.succeed(args); });
  };
}

SyncHandler crash_handler() {
  return [](const Json&) -> Json {
    std::raise(SIGKILL);
    return nullptr;
  };
}

std::chrono::milliseconds delay_from(const Json& config) {
  if (!config.is_object() || !config.contains("delay_ms") || !config["delay_ms"].is_number_integer() ||
      config["delay_ms"].get<long long>() < 0) {
    throw Error("latency factory needs a non-negative integer delay_ms");
  }
  return std::chrono::milliseconds(config["delay_ms"].get<long long>());
}

void check_delay(std::chrono::milliseconds delay) {
  if (delay.count() < 0) throw std::invalid_argument("latency tool delay must be non-negative");
}

}  // namespace

void register_testkit_factories() {
  static std::once_flag once;
  std::call_once(once, [] {
    register_handler_factory("testkit.latency", [](const Json& c) -> Handler { return latency_handler(delay_from(c)); });
    register_handler_factory("testkit.async_latency",
                             [](const Json& c) -> Handler { return async_latency_handler(delay_from(c)); });
    register_handler_factory("testkit.crash", [](const Json&) -> Handler { return crash_handler(); });
  });
}

Tool make_latency_tool(std::chrono::milliseconds delay, const std::string& name) {
  check_delay(delay);
  register_testkit_factories();
  return make_tool(name, "Sleeps " + std::to_string(delay.count()) + " ms, then echoes its arguments", kOpenObject,
                   latency_handler(delay))
      .with_transfer({"testkit.latency", {{"delay_ms", delay.count()}}});
}

Tool make_async_latency_tool(std::chrono::milliseconds delay, const std::string& name) {
  check_delay(delay);
  register_testkit_factories();
  return make_tool(name, "Waits " + std::to_string(delay.count()) + " ms on the event loop, then echoes its arguments",
                   kOpenObject, async_latency_handler(delay))
      .with_transfer({"testkit.async_latency", {{"delay_ms", delay.count()}}});
}

Tool make_crash_tool(const std::string& name) {
  register_testkit_factories();
  return make_tool(name, "Kills the process running it", kOpenObject, crash_handler())
      .with_transfer({"testkit.crash", Json::object()});
}

Tool make_counter_tool(std::shared_ptr<std::atomic<std::int64_t>> counter, const std::string& name) {
  return make_tool(name, "Increments a shared counter", kOpenObject,
                   SyncHandler([counter](const Json&) { return Json(++*counter); }));
}

}  // namespace toolreg::testkit
