#pragma once

#include <vector>

#include "toolreg/registry.hpp"

namespace toolreg::hub {

/// add, subtract, multiply, divide, pow, sqrt, mod, average. Pure functions
/// over doubles; every tool can be rebuilt inside an isolated worker.
std::vector<Tool> calculator_tools();

/// The same tools as a toolset named "BaseCalculator".
Toolset base_calculator();

/// Registers the handler factory the calculator tools transfer through.
/// calculator_tools() calls it; isolated workers forked later inherit it.
void register_calculator_factory();

}  // namespace toolreg::hub
