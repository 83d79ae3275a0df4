#include "toolreg/transfer.hpp"

#include <map>

#include "fork_guard.hpp"

namespace toolreg {

namespace {

struct FactoryTable {
  detail::ForkSafeMutex mutex;
  std::map<std::string, HandlerFactory, std::less<>> factories;
  std::uint64_t generation = 0;
};

FactoryTable& table() {
  static FactoryTable* t = new FactoryTable;
  return *t;
}

}  // namespace

void register_handler_factory(const std::string& name, HandlerFactory factory) {
  auto& t = table();
  std::lock_guard lock(t.mutex);
  t.factories[name] = std::move(factory);
  ++t.generation;
}

std::uint64_t handler_factory_generation() {
  auto& t = table();
  std::lock_guard lock(t.mutex);
  return t.generation;
}

bool has_handler_factory(std::string_view name) {
  auto& t = table();
  std::lock_guard lock(t.mutex);
  return t.factories.find(name) != t.factories.end();
}

Handler make_handler(const TransferSpec& spec) {
  HandlerFactory factory;
  {
    auto& t = table();
    std::lock_guard lock(t.mutex);
    auto it = t.factories.find(spec.factory);
    if (it == t.factories.end()) throw Error("unknown handler factory \"" + spec.factory + "\"");
    factory = it->second;
  }
  return factory(spec.config);
}

}  // namespace toolreg
