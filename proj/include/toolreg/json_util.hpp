#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace toolreg {

/// Insertion-ordered JSON: schemas and wire messages keep the key order they
/// were built with, which makes golden fixtures byte-stable.
using Json = nlohmann::ordered_json;

/// Structural equality: object key order is ignored, and integer/float
/// numbers compare by value (1 == 1.0).
bool json_equal(const Json& a, const Json& b);

/// Compact JSON with object keys sorted recursively.
std::string canonical_dump(const Json& value);

/// Name of the JSON Schema primitive type describing `value`
/// ("null", "boolean", "integer", "number", "string", "array", "object").
/// Integral floats report "integer".
std::string json_type_name(const Json& value);

/// True when `value` is a number with no fractional part.
bool is_integral_number(const Json& value);

/// Wraps a double as JSON, using the integer representation when the value
/// is integral and exactly representable. Throws std::domain_error for
/// NaN and infinities, which JSON cannot carry.
Json json_number(double value);

/// True when every number inside `value` is finite and every string is
/// valid UTF-8, i.e. the value serializes losslessly.
bool is_json_representable(const Json& value, std::string* why = nullptr);

/// Lower-case, snake_case identifier derived from a free-form label:
/// "BaseCalculator" -> "base_calculator", "Calc Service" -> "calc_service",
/// "mock-mcp" -> "mock_mcp".
std::string namespace_from_label(std::string_view label);

}  // namespace toolreg
