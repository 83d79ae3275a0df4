#include <httplib.h>

#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "testkit/server_util.hpp"
#include "toolreg/hub.hpp"
#include "toolreg/testkit.hpp"

namespace toolreg::testkit {

namespace {

Json build_spec() {
  Json operands = {{"type", "object"},
                   {"properties",
                    {{"a", {{"type", "number"}, {"description", "Left operand"}}},
                     {"b", {{"type", "number"}, {"description", "Right operand"}}}}},
                   {"required", {"a", "b"}}};
  Json result = {{"type", "object"}, {"properties", {{"result", {{"type", "number"}}}}}, {"required", {"result"}}};
  Json error = {{"type", "object"}, {"properties", {{"error", {{"type", "string"}}}}}};

  auto op = [](const std::string& id, const std::string& summary) {
    return Json{
        {"post",
         {{"operationId", id},
          {"summary", summary},
          {"requestBody",
           {{"required", true},
            {"content", {{"application/json", {{"schema", {{"$ref", "#/components/schemas/Operands"}}}}}}}}},
          {"responses",
           {{"200",
             {{"description", "Computed value"},
              {"content", {{"application/json", {{"schema", {{"$ref", "#/components/schemas/Result"}}}}}}}}},
            {"400",
             {{"description", "Rejected input"},
              {"content", {{"application/json", {{"schema", {{"$ref", "#/components/schemas/Error"}}}}}}}}}}}}}};
  };

  return Json{{"openapi", "3.1.0"},
              {"info", {{"title", "Calc Service"}, {"version", "1.0.0"}}},
              {"paths",
               {{"/add", op("add", "Add two numbers")},
                {"/subtract", op("subtract", "Subtract b from a")},
                {"/multiply", op("multiply", "Multiply two numbers")},
                {"/divide", op("divide", "Divide a by b")}}},
              {"components", {{"schemas", {{"Operands", operands}, {"Result", result}, {"Error", error}}}}}};
}

}  // namespace

const Json& calculator_openapi_spec() {
  static const Json spec = build_spec();
  return spec;
}

struct MockOpenApiServer::Impl {
  MockOpenApiConfig config;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::mutex mutex;
  std::map<std::string, int> faults;
  std::atomic<std::uint64_t> served{0};
  detail::Jitter jitter;
  std::map<std::string, Tool> tools;
  std::once_flag stopped;

  explicit Impl(MockOpenApiConfig c) : config(std::move(c)), faults(config.fault_status), jitter(config.latency, config.seed) {
    for (const Tool& tool : hub::calculator_tools()) tools.emplace(tool.name(), tool);
  }

  void arithmetic(const std::string& route, const httplib::Request& req, httplib::Response& res) {
    ++served;
    jitter.sleep();
    auto reply = [&](int status, const Json& body) { res.set_content(body.dump(), "application/json"); res.status = status; };

    if (config.bearer_token && req.get_header_value("Authorization") != "Bearer " + *config.bearer_token) {
      reply(401, {{"error", "missing or wrong bearer token"}});
      return;
    }
    {
      std::lock_guard lock(mutex);
      if (auto it = faults.find(route); it != faults.end()) {
        reply(it->second, {{"error", "injected fault"}});
        return;
      }
    }
    Json args = Json::parse(req.body, nullptr, false);
    if (args.is_discarded() || !args.is_object()) {
      reply(400, {{"error", "body must be a JSON object"}});
      return;
    }
    ToolCallResult out = run_tool(tools.at(route.substr(1)), args);
    if (out.ok()) {
      reply(200, {{"result", out.value()}});
    } else {
      reply(400, {{"error", out.error().message}});
    }
  }
};

MockOpenApiServer::MockOpenApiServer(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

MockOpenApiServer::~MockOpenApiServer() { stop(); }

std::unique_ptr<MockOpenApiServer> MockOpenApiServer::start(MockOpenApiConfig config) {
  auto impl = std::make_unique<Impl>(std::move(config));
  Impl* self = impl.get();
  detail::tune_server(self->server);

  self->server.Get("/openapi.json", [self](const httplib::Request&, httplib::Response& res) {
    ++self->served;
    res.set_content(calculator_openapi_spec().dump(), "application/json");
  });
  for (const char* route : {"/add", "/subtract", "/multiply", "/divide"}) {
    std::string r = route;
    self->server.Post(route, [self, r](const httplib::Request& req, httplib::Response& res) { self->arithmetic(r, req, res); });
  }

  self->port = detail::bind_server(self->server, self->config.host, self->config.port);
  self->thread = std::thread([self] { self->server.listen_after_bind(); });
  self->server.wait_until_ready();
  return std::unique_ptr<MockOpenApiServer>(new MockOpenApiServer(std::move(impl)));
}

std::string MockOpenApiServer::base_url() const {
  return "http://" + impl_->config.host + ":" + std::to_string(impl_->port);
}

int MockOpenApiServer::port() const { return impl_->port; }

void MockOpenApiServer::set_fault(const std::string& route, std::optional<int> status) {
  std::lock_guard lock(impl_->mutex);
  if (status) {
    impl_->faults[route] = *status;
  } else {
    impl_->faults.erase(route);
  }
}

std::uint64_t MockOpenApiServer::requests_served() const { return impl_->served.load(); }

void MockOpenApiServer::stop() {
  std::call_once(impl_->stopped, [this] {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
  });
}

}  // namespace toolreg::testkit
