#include "schema_refs.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "toolreg/errors.hpp"

namespace toolreg::detail {

namespace {

bool is_schema_map(const std::string& key) {
  return key == "properties" || key == "patternProperties" || key == "$defs" || key == "definitions" ||
         key == "dependentSchemas";
}

bool is_literal(const std::string& key) {
  return key == "enum" || key == "const" || key == "default" || key == "example" || key == "examples";
}

std::string pointer_unescape_percent(const std::string& ref) {
  std::string out;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i] == '%' && i + 2 < ref.size() && std::isxdigit(static_cast<unsigned char>(ref[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(ref[i + 2]))) {
      out += static_cast<char>(std::stoi(ref.substr(i + 1, 2), nullptr, 16));
      i += 2;
    } else {
      out += ref[i];
    }
  }
  return out;
}

class Inliner {
 public:
  Inliner(const Json& document, int max_depth) : document_(document), max_depth_(max_depth) {}

  Json schema(const Json& node) {
    if (!node.is_object()) return walk_value(node);
    auto ref = node.find("$ref");
    if (ref == node.end() || !ref->is_string()) return walk_object(node);

    const std::string target = ref->get<std::string>();
    int& active = active_[target];
    if (active >= max_depth_) {
      Json truncated = {{"type", "object"}};
      if (auto d = node.find("description"); d != node.end()) truncated["description"] = *d;
      return truncated;
    }
    ++active;
    Json resolved = schema(lookup(target));
    --active_[target];

    Json siblings = node;
    siblings.erase("$ref");
    if (siblings.empty()) return resolved;
    Json walked = walk_object(siblings);
    if (!resolved.is_object()) return walked;
    for (auto& [k, v] : walked.items()) resolved[k] = v;
    return resolved;
  }

 private:
  const Json& lookup(const std::string& ref) {
    if (ref.empty() || ref[0] != '#') throw RefResolutionError("unsupported external reference \"" + ref + "\"");
    try {
      return document_.at(Json::json_pointer(pointer_unescape_percent(ref.substr(1))));
    } catch (const Json::exception&) {
      throw RefResolutionError("dangling reference \"" + ref + "\"");
    }
  }

  Json walk_value(const Json& value) {
    if (value.is_array()) {
      Json out = Json::array();
      for (const auto& item : value) out.push_back(schema(item));
      return out;
    }
    return value;
  }

  Json walk_object(const Json& node) {
    Json out = Json::object();
    for (const auto& [key, value] : node.items()) {
      if (is_literal(key)) {
        out[key] = value;
      } else if (is_schema_map(key) && value.is_object()) {
        Json map = Json::object();
        for (const auto& [name, sub] : value.items()) map[name] = schema(sub);
        out[key] = std::move(map);
      } else if (value.is_object()) {
        out[key] = schema(value);
      } else {
        out[key] = walk_value(value);
      }
    }
    return out;
  }

  const Json& document_;
  int max_depth_;
  std::map<std::string, int> active_;
};

Json merge_pair(Json into, const Json& member);

Json merge_property(const Json& a, const Json& b) {
  if (json_equal(a, b)) return a;
  return merge_all_of(Json{{"allOf", {a, b}}});
}

Json merge_pair(Json into, const Json& member) {
  if (!member.is_object()) return into;
  for (const auto& [key, value] : member.items()) {
    if (key == "properties" && value.is_object()) {
      Json& props = into["properties"];
      if (!props.is_object()) props = Json::object();
      for (const auto& [name, sub] : value.items()) {
        props[name] = props.contains(name) ? merge_property(props[name], sub) : sub;
      }
    } else if (key == "required" && value.is_array()) {
      Json& req = into["required"];
      if (!req.is_array()) req = Json::array();
      for (const auto& name : value) {
        if (std::find(req.begin(), req.end(), name) == req.end()) req.push_back(name);
      }
    } else if (!into.contains(key)) {
      into[key] = value;
    }
  }
  return into;
}

}  // namespace

Json inline_refs(const Json& node, const Json& document, int max_depth) {
  return Inliner(document, max_depth).schema(node);
}

Json merge_all_of(const Json& schema) {
  if (schema.is_array()) {
    Json out = Json::array();
    for (const auto& item : schema) out.push_back(merge_all_of(item));
    return out;
  }
  if (!schema.is_object()) return schema;
  Json out = Json::object();
  for (const auto& [key, value] : schema.items()) {
    if (is_literal(key)) {
      out[key] = value;
    } else if (is_schema_map(key) && value.is_object()) {
      Json map = Json::object();
      for (const auto& [name, sub] : value.items()) map[name] = merge_all_of(sub);
      out[key] = std::move(map);
    } else {
      out[key] = merge_all_of(value);
    }
  }
  auto all = out.find("allOf");
  if (all == out.end() || !all->is_array()) return out;
  Json members = *all;
  for (const auto& m : members) {
    if (!m.is_object() || m.contains("oneOf") || m.contains("anyOf") || m.contains("not")) return out;
  }
  out.erase("allOf");
  for (const auto& m : members) out = merge_pair(std::move(out), m);
  return out;
}

Json upgrade_openapi30_schema(const Json& schema) {
  if (schema.is_array()) {
    Json out = Json::array();
    for (const auto& item : schema) out.push_back(upgrade_openapi30_schema(item));
    return out;
  }
  if (!schema.is_object()) return schema;
  Json out = Json::object();
  for (const auto& [key, value] : schema.items()) {
    if (is_literal(key)) {
      out[key] = value;
    } else if (is_schema_map(key) && value.is_object()) {
      Json map = Json::object();
      for (const auto& [name, sub] : value.items()) map[name] = upgrade_openapi30_schema(sub);
      out[key] = std::move(map);
    } else {
      out[key] = upgrade_openapi30_schema(value);
    }
  }
  for (const char* bound : {"Minimum", "Maximum"}) {
    std::string ex = std::string("exclusive") + bound;
    std::string plain = bound == std::string("Minimum") ? "minimum" : "maximum";
    auto it = out.find(ex);
    if (it == out.end() || !it->is_boolean()) continue;
    bool exclusive = it->get<bool>();
    out.erase(ex);
    if (exclusive && out.contains(plain)) {
      out[ex] = out[plain];
      out.erase(plain);
    }
  }
  if (auto n = out.find("nullable"); n != out.end()) {
    bool nullable = n->is_boolean() && n->get<bool>();
    out.erase("nullable");
    if (nullable) {
      auto t = out.find("type");
      if (auto e = out.find("enum"); e != out.end() && e->is_array() &&
                                     std::find(e->begin(), e->end(), nullptr) == e->end()) {
        e->push_back(nullptr);
      }
      if (t != out.end() && t->is_string()) {
        *t = Json::array({*t, "null"});
      } else if (t != out.end() && t->is_array()) {
        if (std::find(t->begin(), t->end(), "null") == t->end()) t->push_back("null");
      } else if (t == out.end()) {
        Json copy = out;
        out = Json{{"anyOf", {copy, {{"type", "null"}}}}};
      }
    }
  }
  return out;
}

}  // namespace toolreg::detail
