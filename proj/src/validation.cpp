// Argument validation against a ParameterSchema. Independent of the general
// schema evaluator in json_schema.cpp so the two can check each other.
//
// Supported assertion keywords: type, enum, const, properties,
// patternProperties, additionalProperties, required, minProperties,
// maxProperties, items, prefixItems, minItems, maxItems, uniqueItems, allOf,
// anyOf, oneOf, not, minimum, maximum, exclusiveMinimum, exclusiveMaximum,
// multipleOf, minLength, maxLength, pattern. Everything else is treated as an
// annotation.

#include <cmath>
#include <optional>
#include <regex>
#include <set>
#include <unordered_map>

#include "fork_guard.hpp"
#include "toolreg/tool.hpp"

namespace toolreg {

namespace {

struct Failure {
  std::string path;
  std::string expected;
  std::string found;
};

using Check = std::optional<Failure>;

std::string child_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

std::string index_path(const std::string& parent, std::size_t i) {
  return parent + "[" + std::to_string(i) + "]";
}

std::string describe(const Json& value) {
  std::string text = value.dump();
  if (text.size() > 60) text = text.substr(0, 57) + "...";
  return text;
}

bool has_type(const Json& value, std::string_view type) {
  if (type == "number") return value.is_number();
  if (type == "integer") {
    if (value.is_number_integer()) return true;
    if (!value.is_number_float()) return false;
    double d = value.get<double>();
    return std::isfinite(d) && std::trunc(d) == d;
  }
  if (type == "string") return value.is_string();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  if (type == "array") return value.is_array();
  if (type == "object") return value.is_object();
  return false;
}

std::string found_type(const Json& value) {
  if (value.is_number_float() && !has_type(value, "integer")) return "number";
  return json_type_name(value);
}

class PatternCache {
 public:
  const std::regex* get(const std::string& pattern) {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(pattern);
    if (it == cache_.end()) {
      std::optional<std::regex> re;
      try {
        re.emplace(pattern, std::regex::ECMAScript);
      } catch (const std::regex_error&) {
      }
      it = cache_.emplace(pattern, std::move(re)).first;
    }
    return it->second ? &*it->second : nullptr;
  }

 private:
  detail::ForkSafeMutex mutex_;
  std::unordered_map<std::string, std::optional<std::regex>> cache_;
};

PatternCache& patterns() {
  static PatternCache* cache = new PatternCache;
  return *cache;
}

std::size_t code_points(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::optional<double> number_keyword(const Json& schema, const char* key) {
  auto it = schema.find(key);
  if (it == schema.end() || !it->is_number()) return std::nullopt;
  return it->get<double>();
}

Check check(const Json& schema, const Json& value, const std::string& path);

Check check_type(const Json& schema, const Json& value, const std::string& path) {
  auto t = schema.find("type");
  if (t == schema.end()) return std::nullopt;
  if (t->is_string()) {
    if (!has_type(value, t->get_ref<const std::string&>())) return Failure{path, t->get<std::string>(), found_type(value)};
  } else if (t->is_array()) {
    for (const auto& alt : *t) {
      if (alt.is_string() && has_type(value, alt.get_ref<const std::string&>())) return std::nullopt;
    }
    std::string expected;
    for (const auto& alt : *t) expected += (expected.empty() ? "" : " or ") + alt.get<std::string>();
    return Failure{path, expected, found_type(value)};
  }
  return std::nullopt;
}

Check check_values(const Json& schema, const Json& value, const std::string& path) {
  if (auto e = schema.find("enum"); e != schema.end() && e->is_array()) {
    bool hit = false;
    for (const auto& candidate : *e) hit = hit || json_equal(candidate, value);
    if (!hit) return Failure{path, "one of " + describe(*e), describe(value)};
  }
  if (auto c = schema.find("const"); c != schema.end() && !json_equal(*c, value)) {
    return Failure{path, describe(*c), describe(value)};
  }
  if (value.is_number()) {
    double x = value.get<double>();
    if (auto m = number_keyword(schema, "minimum"); m && x < *m) return Failure{path, ">= " + describe(schema["minimum"]), describe(value)};
    if (auto m = number_keyword(schema, "maximum"); m && x > *m) return Failure{path, "<= " + describe(schema["maximum"]), describe(value)};
    if (auto m = number_keyword(schema, "exclusiveMinimum"); m && x <= *m) {
      return Failure{path, "> " + describe(schema["exclusiveMinimum"]), describe(value)};
    }
    if (auto m = number_keyword(schema, "exclusiveMaximum"); m && x >= *m) {
      return Failure{path, "< " + describe(schema["exclusiveMaximum"]), describe(value)};
    }
    if (auto m = number_keyword(schema, "multipleOf"); m && *m > 0) {
      const Json& divisor = schema["multipleOf"];
      bool ok;
      if (value.is_number_integer() && divisor.is_number_integer()) {
        ok = value.get<std::int64_t>() % divisor.get<std::int64_t>() == 0;
      } else {
        double q = x / *m;
        ok = std::isfinite(q) && std::fabs(q - std::round(q)) <= 1e-9 * std::max(1.0, std::fabs(q));
      }
      if (!ok) return Failure{path, "multiple of " + describe(divisor), describe(value)};
    }
  }
  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    std::size_t len = code_points(s);
    if (auto m = number_keyword(schema, "minLength"); m && len < *m) return Failure{path, "length >= " + describe(schema["minLength"]), describe(value)};
    if (auto m = number_keyword(schema, "maxLength"); m && len > *m) return Failure{path, "length <= " + describe(schema["maxLength"]), describe(value)};
    if (auto p = schema.find("pattern"); p != schema.end() && p->is_string()) {
      const std::regex* re = patterns().get(p->get<std::string>());
      if (!re || !std::regex_search(s, *re)) return Failure{path, "string matching " + p->get<std::string>(), describe(value)};
    }
  }
  return std::nullopt;
}

Check check_array(const Json& schema, const Json& value, const std::string& path) {
  if (!value.is_array()) return std::nullopt;
  if (auto m = number_keyword(schema, "minItems"); m && value.size() < *m) {
    return Failure{path, "at least " + describe(schema["minItems"]) + " items", std::to_string(value.size()) + " items"};
  }
  if (auto m = number_keyword(schema, "maxItems"); m && value.size() > *m) {
    return Failure{path, "at most " + describe(schema["maxItems"]) + " items", std::to_string(value.size()) + " items"};
  }
  if (auto u = schema.find("uniqueItems"); u != schema.end() && *u == true) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (json_equal(value[i], value[j])) return Failure{index_path(path, i), "unique item", "duplicate of item " + std::to_string(j)};
      }
    }
  }
  std::size_t start = 0;
  if (auto p = schema.find("prefixItems"); p != schema.end() && p->is_array()) {
    for (; start < p->size() && start < value.size(); ++start) {
      if (auto f = check((*p)[start], value[start], index_path(path, start))) return f;
    }
    start = p->size();
  }
  if (auto items = schema.find("items"); items != schema.end()) {
    for (std::size_t i = start; i < value.size(); ++i) {
      if (auto f = check(*items, value[i], index_path(path, i))) return f;
    }
  }
  return std::nullopt;
}

Check check_object(const Json& schema, const Json& value, const std::string& path) {
  if (!value.is_object()) return std::nullopt;
  if (auto r = schema.find("required"); r != schema.end() && r->is_array()) {
    for (const auto& name : *r) {
      if (name.is_string() && !value.contains(name.get<std::string>())) {
        return Failure{child_path(path, name.get<std::string>()), "required property", "missing"};
      }
    }
  }
  if (auto m = number_keyword(schema, "minProperties"); m && value.size() < *m) {
    return Failure{path, "at least " + describe(schema["minProperties"]) + " properties", std::to_string(value.size())};
  }
  if (auto m = number_keyword(schema, "maxProperties"); m && value.size() > *m) {
    return Failure{path, "at most " + describe(schema["maxProperties"]) + " properties", std::to_string(value.size())};
  }

  std::set<std::string> covered;
  const auto props = schema.find("properties");
  if (props != schema.end() && props->is_object()) {
    for (const auto& [name, sub] : props->items()) {
      auto v = value.find(name);
      if (v == value.end()) continue;
      covered.insert(name);
      if (auto f = check(sub, *v, child_path(path, name))) return f;
    }
  }
  if (auto pp = schema.find("patternProperties"); pp != schema.end() && pp->is_object()) {
    for (const auto& [pattern, sub] : pp->items()) {
      const std::regex* re = patterns().get(pattern);
      for (const auto& [name, v] : value.items()) {
        if (!re) return Failure{child_path(path, name), "name matching " + pattern, "unsupported pattern"};
        if (!std::regex_search(name, *re)) continue;
        covered.insert(name);
        if (auto f = check(sub, v, child_path(path, name))) return f;
      }
    }
  }
  if (auto extra = schema.find("additionalProperties"); extra != schema.end()) {
    for (const auto& [name, v] : value.items()) {
      if (covered.count(name)) continue;
      if (extra->is_boolean()) {
        if (!extra->get<bool>()) return Failure{child_path(path, name), "no additional properties", "unexpected property"};
      } else if (auto f = check(*extra, v, child_path(path, name))) {
        return f;
      }
    }
  }
  return std::nullopt;
}

Check check_combinators(const Json& schema, const Json& value, const std::string& path) {
  if (auto all = schema.find("allOf"); all != schema.end() && all->is_array()) {
    for (const auto& sub : *all) {
      if (auto f = check(sub, value, path)) return f;
    }
  }
  if (auto any = schema.find("anyOf"); any != schema.end() && any->is_array()) {
    bool hit = false;
    for (const auto& sub : *any) {
      if (!check(sub, value, path)) {
        hit = true;
        break;
      }
    }
    if (!hit) return Failure{path, "a match for one of " + std::to_string(any->size()) + " anyOf alternatives", "no match"};
  }
  if (auto one = schema.find("oneOf"); one != schema.end() && one->is_array()) {
    std::size_t hits = 0;
    for (const auto& sub : *one) hits += !check(sub, value, path);
    if (hits != 1) {
      return Failure{path, "exactly one matching oneOf alternative", std::to_string(hits) + " matches"};
    }
  }
  if (auto n = schema.find("not"); n != schema.end()) {
    if (!check(*n, value, path)) return Failure{path, "a value not matching the negated schema", describe(value)};
  }
  return std::nullopt;
}

Check check(const Json& schema, const Json& value, const std::string& path) {
  if (schema.is_boolean()) {
    if (schema.get<bool>()) return std::nullopt;
    return Failure{path, "nothing (false schema)", describe(value)};
  }
  if (!schema.is_object()) return std::nullopt;
  if (auto f = check_type(schema, value, path)) return f;
  if (auto f = check_values(schema, value, path)) return f;
  if (auto f = check_object(schema, value, path)) return f;
  if (auto f = check_array(schema, value, path)) return f;
  return check_combinators(schema, value, path);
}

}  // namespace

Json validate_arguments(const ParameterSchema& schema, const Json& arguments) {
  if (!arguments.is_object()) throw ValidationError("", "object", found_type(arguments));
  if (auto failure = check(schema.json(), arguments, "")) {
    throw ValidationError(std::move(failure->path), std::move(failure->expected), std::move(failure->found));
  }
  return arguments;
}

}  // namespace toolreg
