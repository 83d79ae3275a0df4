#include "toolreg/hub.hpp"

#include <cmath>
#include <mutex>
#include <stdexcept>

#include "toolreg/transfer.hpp"

namespace toolreg::hub {

namespace {

constexpr const char* kFactory = "hub.calculator";

double num(const Json& args, const char* key) { return args.at(key).get<double>(); }

Json finite(double x, const char* op) {
  if (!std::isfinite(x)) throw std::domain_error(std::string(op) + " result is not a finite number");
  return json_number(x);
}

SyncHandler handler_for(const std::string& op) {
  if (op == "add") return [](const Json& a) { return finite(num(a, "a") + num(a, "b"), "add"); };
  if (op == "subtract") return [](const Json& a) { return finite(num(a, "a") - num(a, "b"), "subtract"); };
  if (op == "multiply") return [](const Json& a) { return finite(num(a, "a") * num(a, "b"), "multiply"); };
  if (op == "divide") {
    return [](const Json& a) {
      double b = num(a, "b");
      if (b == 0) throw std::domain_error("division by zero");
      return finite(num(a, "a") / b, "divide");
    };
  }
  if (op == "pow") return [](const Json& a) { return finite(std::pow(num(a, "a"), num(a, "b")), "pow"); };
  if (op == "sqrt") {
    return [](const Json& a) {
      double x = num(a, "x");
      if (x < 0) throw std::domain_error("square root of a negative number");
      return finite(std::sqrt(x), "sqrt");
    };
  }
  if (op == "mod") {
    return [](const Json& a) {
      double b = num(a, "b");
      if (b == 0) throw std::domain_error("modulo by zero");
      return finite(std::fmod(num(a, "a"), b), "mod");
    };
  }
  if (op == "average") {
    return [](const Json& a) {
      const Json& values = a.at("values");
      if (values.empty()) throw std::domain_error("average of an empty list");
      double sum = 0;
      for (const auto& v : values) sum += v.get<double>();
      return finite(sum / static_cast<double>(values.size()), "average");
    };
  }
  throw std::invalid_argument("unknown calculator operation \"" + op + "\"");
}

Json two_numbers() {
  return Json{{"type", "object"},
              {"properties",
               {{"a", {{"type", "number"}, {"description", "first operand"}}},
                {"b", {{"type", "number"}, {"description", "second operand"}}}}},
              {"required", {"a", "b"}},
              {"additionalProperties", false}};
}

Tool calculator_tool(const std::string& op, const std::string& description, const Json& schema) {
  return make_tool(op, description, schema, handler_for(op)).with_transfer(TransferSpec{kFactory, Json{{"op", op}}});
}

}  // namespace

void register_calculator_factory() {
  static std::once_flag once;
  std::call_once(once, [] {
    register_handler_factory(kFactory, [](const Json& config) -> Handler {
      return handler_for(config.at("op").get<std::string>());
    });
  });
}

std::vector<Tool> calculator_tools() {
  register_calculator_factory();
  Json sqrt_schema = {{"type", "object"},
                      {"properties", {{"x", {{"type", "number"}, {"description", "non-negative operand"}}}}},
                      {"required", {"x"}},
                      {"additionalProperties", false}};
  Json average_schema = {
      {"type", "object"},
      {"properties",
       {{"values", {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 1}, {"description", "numbers to average"}}}}},
      {"required", {"values"}},
      {"additionalProperties", false}};
  return {
      calculator_tool("add", "Add two numbers.", two_numbers()),
      calculator_tool("subtract", "Subtract b from a.", two_numbers()),
      calculator_tool("multiply", "Multiply two numbers.", two_numbers()),
      calculator_tool("divide", "Divide a by b; b must not be zero.", two_numbers()),
      calculator_tool("pow", "Raise a to the power b.", two_numbers()),
      calculator_tool("sqrt", "Square root of x; x must not be negative.", sqrt_schema),
      calculator_tool("mod", "Remainder of a divided by b, with the sign of a.", two_numbers()),
      calculator_tool("average", "Arithmetic mean of a non-empty list of numbers.", average_schema),
  };
}

Toolset base_calculator() { return Toolset{"BaseCalculator", calculator_tools()}; }

}  // namespace toolreg::hub
