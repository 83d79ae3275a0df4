#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "toolreg/tool.hpp"

namespace toolreg {

/// Rebuilds a handler from a TransferSpec config inside an isolated worker.
using HandlerFactory = std::function<Handler(const Json& config)>;

/// Registers (or replaces) a named factory. Factories must be registered
/// before the isolated pool forks its workers to be visible there.
void register_handler_factory(const std::string& name, HandlerFactory factory);
bool has_handler_factory(std::string_view name);

/// Throws toolreg::Error when the factory is unknown or rejects the config.
Handler make_handler(const TransferSpec& spec);

/// Bumped by every register_handler_factory call. Isolated workers forked
/// under an older value are replaced before their next job.
std::uint64_t handler_factory_generation();

}  // namespace toolreg
