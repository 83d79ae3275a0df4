#include "toolreg/json_util.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace toolreg {

namespace {

nlohmann::json to_sorted(const Json& value) {
  switch (value.type()) {
    case Json::value_t::object: {
      nlohmann::json out = nlohmann::json::object();
      for (const auto& [k, v] : value.items()) out[k] = to_sorted(v);
      return out;
    }
    case Json::value_t::array: {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& v : value) out.push_back(to_sorted(v));
      return out;
    }
    default:
      return nlohmann::json::parse(value.dump());
  }
}

}  // namespace

bool json_equal(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) {
    if (a.is_number_float() || b.is_number_float()) {
      return a.get<double>() == b.get<double>();
    }
    if (a.is_number_unsigned() && b.is_number_unsigned()) {
      return a.get<std::uint64_t>() == b.get<std::uint64_t>();
    }
    return a == b;
  }
  if (a.type() != b.type()) return false;
  if (a.is_object()) {
    if (a.size() != b.size()) return false;
    for (const auto& [k, v] : a.items()) {
      auto it = b.find(k);
      if (it == b.end() || !json_equal(v, *it)) return false;
    }
    return true;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!json_equal(a[i], b[i])) return false;
    }
    return true;
  }
  return a == b;
}

std::string canonical_dump(const Json& value) { return to_sorted(value).dump(); }

bool is_integral_number(const Json& value) {
  if (value.is_number_integer()) return true;
  if (!value.is_number_float()) return false;
  double d = value.get<double>();
  return std::isfinite(d) && std::floor(d) == d;
}

std::string json_type_name(const Json& value) {
  switch (value.type()) {
    case Json::value_t::null: return "null";
    case Json::value_t::boolean: return "boolean";
    case Json::value_t::number_integer:
    case Json::value_t::number_unsigned: return "integer";
    case Json::value_t::number_float: return is_integral_number(value) ? "integer" : "number";
    case Json::value_t::string: return "string";
    case Json::value_t::array: return "array";
    case Json::value_t::object: return "object";
    default: return "unknown";
  }
}

Json json_number(double value) {
  if (!std::isfinite(value)) {
    throw std::domain_error("result is not a finite number");
  }
  constexpr double kExact = 9007199254740992.0;  // 2^53
  if (std::floor(value) == value && std::fabs(value) <= kExact) {
    if (value == 0.0) return Json(0);
    return Json(static_cast<std::int64_t>(value));
  }
  return Json(value);
}

bool is_json_representable(const Json& value, std::string* why) {
  switch (value.type()) {
    case Json::value_t::number_float:
      if (!std::isfinite(value.get<double>())) {
        if (why) *why = "non-finite number cannot be represented in JSON";
        return false;
      }
      return true;
    case Json::value_t::string:
      try {
        (void)value.dump();
      } catch (const Json::type_error& e) {
        if (why) *why = e.what();
        return false;
      }
      return true;
    case Json::value_t::array:
      for (const auto& v : value) {
        if (!is_json_representable(v, why)) return false;
      }
      return true;
    case Json::value_t::object:
      for (const auto& [k, v] : value.items()) {
        if (!is_json_representable(Json(k), why) || !is_json_representable(v, why)) return false;
      }
      return true;
    case Json::value_t::binary:
    case Json::value_t::discarded:
      if (why) *why = "value has no JSON representation";
      return false;
    default:
      return true;
  }
}

std::string namespace_from_label(std::string_view label) {
  std::string out;
  for (std::size_t i = 0; i < label.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(label[i]);
    if (std::isupper(c)) {
      bool prev_lower = i > 0 && (std::islower(static_cast<unsigned char>(label[i - 1])) ||
                                  std::isdigit(static_cast<unsigned char>(label[i - 1])));
      bool next_lower = i + 1 < label.size() && std::islower(static_cast<unsigned char>(label[i + 1]));
      bool prev_upper = i > 0 && std::isupper(static_cast<unsigned char>(label[i - 1]));
      if (!out.empty() && out.back() != '_' && (prev_lower || (prev_upper && next_lower))) {
        out.push_back('_');
      }
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isalnum(c)) {
      out.push_back(static_cast<char>(c));
    } else if (!out.empty() && out.back() != '_') {
      out.push_back('_');
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  if (out.empty()) out = "tools";
  return out;
}

}  // namespace toolreg
