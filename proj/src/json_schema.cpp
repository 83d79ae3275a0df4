#include "toolreg/json_schema.hpp"

#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <unordered_map>

#include "fork_guard.hpp"

namespace toolreg::schema {

namespace {

constexpr std::string_view kDefaultBase = "urn:toolreg:schema";
constexpr int kMaxDepth = 256;

std::string escape_pointer_token(std::string_view token) {
  std::string out;
  for (char c : token) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out.push_back(c);
  }
  return out;
}

std::string percent_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out.push_back(static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::vector<std::string> split_pointer(std::string_view pointer) {
  std::vector<std::string> tokens;
  if (pointer.empty()) return tokens;
  std::size_t pos = 1;
  while (pos <= pointer.size()) {
    std::size_t next = pointer.find('/', pos);
    if (next == std::string_view::npos) next = pointer.size();
    std::string token = percent_decode(pointer.substr(pos, next - pos));
    std::string unescaped;
    for (std::size_t i = 0; i < token.size(); ++i) {
      if (token[i] == '~' && i + 1 < token.size()) {
        unescaped.push_back(token[i + 1] == '1' ? '/' : '~');
        ++i;
      } else {
        unescaped.push_back(token[i]);
      }
    }
    tokens.push_back(std::move(unescaped));
    pos = next + 1;
  }
  return tokens;
}

std::pair<std::string, std::string> split_fragment(std::string_view uri) {
  auto hash = uri.find('#');
  if (hash == std::string_view::npos) return {std::string(uri), ""};
  return {std::string(uri.substr(0, hash)), std::string(uri.substr(hash + 1))};
}

std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

// Keywords whose values are schemas, arrays of schemas, or maps of schemas.
const std::set<std::string_view>& single_schema_keywords() {
  static const std::set<std::string_view> k = {
      "items", "contains", "additionalProperties", "propertyNames", "if", "then", "else", "not",
      "unevaluatedItems", "unevaluatedProperties"};
  return k;
}
const std::set<std::string_view>& array_schema_keywords() {
  static const std::set<std::string_view> k = {"prefixItems", "allOf", "anyOf", "oneOf"};
  return k;
}
const std::set<std::string_view>& map_schema_keywords() {
  static const std::set<std::string_view> k = {"$defs", "definitions", "properties", "patternProperties",
                                               "dependentSchemas"};
  return k;
}

class RegexCache {
 public:
  const std::regex* get(const std::string& pattern) {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(pattern);
    if (it != cache_.end()) return it->second ? &*it->second : nullptr;
    std::optional<std::regex> compiled;
    try {
      compiled.emplace(pattern, std::regex::ECMAScript);
    } catch (const std::regex_error&) {
    }
    auto [pos, _] = cache_.emplace(pattern, std::move(compiled));
    return pos->second ? &*pos->second : nullptr;
  }

 private:
  toolreg::detail::ForkSafeMutex mutex_;
  std::unordered_map<std::string, std::optional<std::regex>> cache_;
};

RegexCache& regex_cache() {
  static RegexCache* cache = new RegexCache;
  return *cache;
}

}  // namespace

std::string Outcome::summary() const {
  if (valid || errors.empty()) return "";
  const auto& e = errors.front();
  return (e.instance_path.empty() ? std::string("/") : e.instance_path) + ": " + e.message;
}

std::string resolve_uri(std::string_view base, std::string_view reference) {
  if (reference.empty()) return std::string(base);
  auto scheme_end = reference.find(':');
  auto first_delim = reference.find_first_of("/?#");
  if (scheme_end != std::string_view::npos && (first_delim == std::string_view::npos || scheme_end < first_delim)) {
    return std::string(reference);
  }
  auto [base_abs, base_frag] = split_fragment(base);
  if (reference.front() == '#') return base_abs + std::string(reference);

  auto base_scheme_end = base_abs.find(':');
  std::string scheme = base_scheme_end == std::string::npos ? "" : base_abs.substr(0, base_scheme_end + 1);
  std::string rest = base_abs.substr(scheme.size());
  std::string authority;
  std::string path = rest;
  if (rest.rfind("//", 0) == 0) {
    auto slash = rest.find('/', 2);
    authority = slash == std::string::npos ? rest : rest.substr(0, slash);
    path = slash == std::string::npos ? "" : rest.substr(slash);
  }
  if (reference.rfind("//", 0) == 0) return scheme + std::string(reference);
  if (reference.front() == '/') return scheme + authority + std::string(reference);
  if (reference.front() == '?') {
    auto q = path.find('?');
    return scheme + authority + path.substr(0, q) + std::string(reference);
  }
  auto q = path.find('?');
  if (q != std::string::npos) path = path.substr(0, q);
  auto last_slash = path.rfind('/');
  std::string dir = last_slash == std::string::npos ? "" : path.substr(0, last_slash + 1);
  if (dir.empty() && !authority.empty()) dir = "/";
  std::string merged = dir + std::string(reference);
  // Collapse "./" and "../" segments.
  std::vector<std::string> segments;
  std::size_t pos = 0;
  std::string tail;
  auto tail_pos = merged.find_first_of("?#");
  if (tail_pos != std::string::npos) {
    tail = merged.substr(tail_pos);
    merged = merged.substr(0, tail_pos);
  }
  bool absolute = !merged.empty() && merged.front() == '/';
  while (pos <= merged.size()) {
    auto next = merged.find('/', pos);
    if (next == std::string::npos) next = merged.size();
    std::string seg = merged.substr(pos, next - pos);
    if (seg == "..") {
      if (!segments.empty()) segments.pop_back();
    } else if (seg != "." && !(seg.empty() && next != merged.size())) {
      segments.push_back(seg);
    }
    pos = next + 1;
  }
  std::string joined = absolute ? "/" : "";
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i) joined += "/";
    joined += segments[i];
  }
  return scheme + authority + joined + tail;
}

// Index of schema resources (by absolute URI) and anchors across one or more
// documents.
class SchemaStore {
 public:
  struct Located {
    const Json* node = nullptr;
    std::string base;
    bool dynamic_anchor = false;
  };

  explicit SchemaStore(const SchemaStore* parent = nullptr) : parent_(parent) {}

  const Json& add(Json document, std::string_view default_base) {
    documents_.push_back(std::move(document));
    const Json& doc = documents_.back();
    std::string base(default_base);
    index(doc, base, true);
    return doc;
  }

  std::optional<Located> lookup(const std::string& uri) const {
    auto [abs, fragment] = split_fragment(uri);
    if (fragment.empty() || fragment.front() == '/') {
      auto it = resources_.find(abs);
      if (it == resources_.end()) return parent_ ? parent_->lookup(uri) : std::nullopt;
      Located loc{it->second, abs, false};
      for (const auto& token : split_pointer(fragment)) {
        const Json& node = *loc.node;
        if (node.is_object()) {
          auto child = node.find(token);
          if (child == node.end()) return std::nullopt;
          loc.node = &*child;
        } else if (node.is_array()) {
          std::size_t idx = 0;
          try {
            idx = std::stoul(token);
          } catch (...) {
            return std::nullopt;
          }
          if (idx >= node.size()) return std::nullopt;
          loc.node = &node[idx];
        } else {
          return std::nullopt;
        }
        auto b = node_base_.find(loc.node);
        if (b != node_base_.end()) loc.base = b->second;
      }
      return loc;
    }
    auto it = anchors_.find(abs + "#" + fragment);
    if (it == anchors_.end()) return parent_ ? parent_->lookup(uri) : std::nullopt;
    return it->second;
  }

  std::optional<std::string> base_of(const Json* node) const {
    auto it = node_base_.find(node);
    if (it != node_base_.end()) return it->second;
    return parent_ ? parent_->base_of(node) : std::nullopt;
  }

 private:
  void index(const Json& node, std::string base, bool is_root) {
    if (!node.is_object()) {
      if (is_root) resources_.emplace(base, &node);
      return;
    }
    auto id = node.find("$id");
    if (id != node.end() && id->is_string()) {
      base = split_fragment(resolve_uri(base, id->get<std::string>())).first;
      node_base_[&node] = base;
      resources_.emplace(base, &node);
    } else if (is_root) {
      node_base_[&node] = base;
      resources_.emplace(base, &node);
    }
    if (auto a = node.find("$anchor"); a != node.end() && a->is_string()) {
      anchors_.emplace(base + "#" + a->get<std::string>(), Located{&node, base, false});
    }
    if (auto a = node.find("$dynamicAnchor"); a != node.end() && a->is_string()) {
      anchors_[base + "#" + a->get<std::string>()] = Located{&node, base, true};
    }
    for (const auto& [key, value] : node.items()) {
      if (single_schema_keywords().count(key)) {
        index(value, base, false);
      } else if (array_schema_keywords().count(key) && value.is_array()) {
        for (const auto& sub : value) index(sub, base, false);
      } else if (map_schema_keywords().count(key) && value.is_object()) {
        for (const auto& [_, sub] : value.items()) index(sub, base, false);
      } else if (key == "items" && value.is_array()) {
        for (const auto& sub : value) index(sub, base, false);
      }
    }
  }

  const SchemaStore* parent_;
  std::deque<Json> documents_;
  std::map<std::string, const Json*> resources_;
  std::map<std::string, Located> anchors_;
  std::unordered_map<const Json*, std::string> node_base_;
};

namespace {

const SchemaStore& metaschema_store() {
  static const SchemaStore* store = [] {
    auto* s = new SchemaStore;
    for (auto doc : detail::metaschema_documents()) {
      s->add(Json::parse(doc), kDefaultBase);
    }
    return s;
  }();
  return *store;
}

struct Annotations {
  bool valid = true;
  std::set<std::string> props;
  std::set<std::size_t> items;
  bool all_items = false;

  void merge(const Annotations& other) {
    props.insert(other.props.begin(), other.props.end());
    items.insert(other.items.begin(), other.items.end());
    all_items = all_items || other.all_items;
  }
};

class Evaluator {
 public:
  Evaluator(const SchemaStore& store, std::vector<SchemaError>* errors) : store_(store), errors_(errors) {}

  Annotations eval(const Json& schema, const std::string& base, const Json& inst, const std::string& ipath,
                   const std::string& kpath) {
    Annotations out;
    if (schema.is_boolean()) {
      if (!schema.get<bool>()) fail(out, ipath, kpath, "false schema never validates");
      return out;
    }
    if (!schema.is_object()) {
      fail(out, ipath, kpath, "schema must be an object or boolean");
      return out;
    }
    if (++depth_ > kMaxDepth) {
      --depth_;
      fail(out, ipath, kpath, "schema recursion too deep");
      return out;
    }

    std::string here = base;
    bool pushed = false;
    if (auto b = store_.base_of(&schema)) {
      here = *b;
      if (scope_.empty() || scope_.back() != here) {
        scope_.push_back(here);
        pushed = true;
      }
    }

    eval_core(schema, here, inst, ipath, kpath, out);
    eval_validation(schema, inst, ipath, kpath, out);
    eval_applicators(schema, here, inst, ipath, kpath, out);
    eval_unevaluated(schema, here, inst, ipath, kpath, out);

    if (pushed) scope_.pop_back();
    --depth_;
    if (!out.valid) {
      out.props.clear();
      out.items.clear();
      out.all_items = false;
    }
    return out;
  }

 private:
  void fail(Annotations& a, const std::string& ipath, const std::string& kpath, std::string message) {
    a.valid = false;
    if (errors_ && errors_->size() < 32) errors_->push_back({ipath, kpath, std::move(message)});
  }

  // Evaluates a subschema without recording its errors (for anyOf, not, ...).
  Annotations probe(const Json& schema, const std::string& base, const Json& inst, const std::string& ipath,
                    const std::string& kpath) {
    auto* saved = errors_;
    errors_ = nullptr;
    Annotations a = eval(schema, base, inst, ipath, kpath);
    errors_ = saved;
    return a;
  }

  void follow(const Json& target, const std::string& target_base, const Json& inst, const std::string& ipath,
              const std::string& kpath, Annotations& out) {
    bool pushed = false;
    if (scope_.empty() || scope_.back() != target_base) {
      scope_.push_back(target_base);
      pushed = true;
    }
    Annotations r = eval(target, target_base, inst, ipath, kpath);
    if (pushed) scope_.pop_back();
    if (!r.valid) out.valid = false;
    out.merge(r);
  }

  void eval_core(const Json& s, const std::string& base, const Json& inst, const std::string& ipath,
                 const std::string& kpath, Annotations& out) {
    if (auto r = s.find("$ref"); r != s.end() && r->is_string()) {
      std::string uri = resolve_uri(base, r->get<std::string>());
      auto target = store_.lookup(uri);
      if (!target) {
        fail(out, ipath, kpath + "/$ref", "unresolvable reference " + uri);
      } else {
        follow(*target->node, target->base, inst, ipath, kpath + "/$ref", out);
      }
    }
    if (auto r = s.find("$dynamicRef"); r != s.end() && r->is_string()) {
      std::string uri = resolve_uri(base, r->get<std::string>());
      auto target = store_.lookup(uri);
      if (!target) {
        fail(out, ipath, kpath + "/$dynamicRef", "unresolvable reference " + uri);
        return;
      }
      auto [_, fragment] = split_fragment(uri);
      if (target->dynamic_anchor && !fragment.empty() && fragment.front() != '/') {
        for (const auto& scope_base : scope_) {
          auto candidate = store_.lookup(scope_base + "#" + fragment);
          if (candidate && candidate->dynamic_anchor) {
            target = candidate;
            break;
          }
        }
      }
      follow(*target->node, target->base, inst, ipath, kpath + "/$dynamicRef", out);
    }
  }

  bool type_matches(const std::string& type, const Json& inst) const {
    if (type == "null") return inst.is_null();
    if (type == "boolean") return inst.is_boolean();
    if (type == "object") return inst.is_object();
    if (type == "array") return inst.is_array();
    if (type == "string") return inst.is_string();
    if (type == "number") return inst.is_number();
    if (type == "integer") return is_integral_number(inst);
    return false;
  }

  void eval_validation(const Json& s, const Json& inst, const std::string& ipath, const std::string& kpath,
                       Annotations& out) {
    if (auto t = s.find("type"); t != s.end()) {
      bool ok = false;
      if (t->is_string()) {
        ok = type_matches(t->get<std::string>(), inst);
      } else if (t->is_array()) {
        for (const auto& ty : *t) {
          if (ty.is_string() && type_matches(ty.get<std::string>(), inst)) ok = true;
        }
      }
      if (!ok) fail(out, ipath, kpath + "/type", "expected type " + t->dump() + ", found " + json_type_name(inst));
    }
    if (auto e = s.find("enum"); e != s.end() && e->is_array()) {
      bool ok = false;
      for (const auto& v : *e) {
        if (json_equal(v, inst)) ok = true;
      }
      if (!ok) fail(out, ipath, kpath + "/enum", "value not in enumeration");
    }
    if (auto c = s.find("const"); c != s.end()) {
      if (!json_equal(*c, inst)) fail(out, ipath, kpath + "/const", "value does not equal const");
    }
    if (inst.is_number()) {
      double x = inst.get<double>();
      auto num = [&](const char* kw) -> std::optional<double> {
        auto it = s.find(kw);
        if (it == s.end() || !it->is_number()) return std::nullopt;
        return it->get<double>();
      };
      if (auto m = num("multipleOf"); m && *m > 0) {
        bool ok;
        if (inst.is_number_integer() && s["multipleOf"].is_number_integer()) {
          ok = inst.get<std::int64_t>() % s["multipleOf"].get<std::int64_t>() == 0;
        } else {
          double q = x / *m;
          ok = std::isfinite(q) && std::fabs(q - std::round(q)) <= 1e-9 * std::max(1.0, std::fabs(q));
        }
        if (!ok) fail(out, ipath, kpath + "/multipleOf", "not a multiple of " + s["multipleOf"].dump());
      }
      if (auto m = num("maximum"); m && x > *m) fail(out, ipath, kpath + "/maximum", "above maximum");
      if (auto m = num("exclusiveMaximum"); m && x >= *m) {
        fail(out, ipath, kpath + "/exclusiveMaximum", "not below exclusiveMaximum");
      }
      if (auto m = num("minimum"); m && x < *m) fail(out, ipath, kpath + "/minimum", "below minimum");
      if (auto m = num("exclusiveMinimum"); m && x <= *m) {
        fail(out, ipath, kpath + "/exclusiveMinimum", "not above exclusiveMinimum");
      }
    }
    if (inst.is_string()) {
      const auto& str = inst.get_ref<const std::string&>();
      auto len = utf8_length(str);
      if (auto m = s.find("maxLength"); m != s.end() && m->is_number() && len > m->get<double>()) {
        fail(out, ipath, kpath + "/maxLength", "string too long");
      }
      if (auto m = s.find("minLength"); m != s.end() && m->is_number() && len < m->get<double>()) {
        fail(out, ipath, kpath + "/minLength", "string too short");
      }
      if (auto p = s.find("pattern"); p != s.end() && p->is_string()) {
        const std::regex* re = regex_cache().get(p->get<std::string>());
        if (!re) {
          fail(out, ipath, kpath + "/pattern", "unsupported regular expression");
        } else if (!std::regex_search(str, *re)) {
          fail(out, ipath, kpath + "/pattern", "does not match pattern " + p->get<std::string>());
        }
      }
    }
    if (inst.is_array()) {
      if (auto m = s.find("maxItems"); m != s.end() && m->is_number() && inst.size() > m->get<double>()) {
        fail(out, ipath, kpath + "/maxItems", "too many items");
      }
      if (auto m = s.find("minItems"); m != s.end() && m->is_number() && inst.size() < m->get<double>()) {
        fail(out, ipath, kpath + "/minItems", "too few items");
      }
      if (auto u = s.find("uniqueItems"); u != s.end() && u->is_boolean() && u->get<bool>()) {
        for (std::size_t i = 0; i < inst.size(); ++i) {
          for (std::size_t j = i + 1; j < inst.size(); ++j) {
            if (json_equal(inst[i], inst[j])) {
              fail(out, ipath, kpath + "/uniqueItems", "items are not unique");
              i = inst.size();
              break;
            }
          }
        }
      }
    }
    if (inst.is_object()) {
      if (auto m = s.find("maxProperties"); m != s.end() && m->is_number() && inst.size() > m->get<double>()) {
        fail(out, ipath, kpath + "/maxProperties", "too many properties");
      }
      if (auto m = s.find("minProperties"); m != s.end() && m->is_number() && inst.size() < m->get<double>()) {
        fail(out, ipath, kpath + "/minProperties", "too few properties");
      }
      if (auto r = s.find("required"); r != s.end() && r->is_array()) {
        for (const auto& name : *r) {
          if (name.is_string() && !inst.contains(name.get<std::string>())) {
            fail(out, ipath, kpath + "/required", "missing required property " + name.get<std::string>());
          }
        }
      }
      if (auto d = s.find("dependentRequired"); d != s.end() && d->is_object()) {
        for (const auto& [prop, needs] : d->items()) {
          if (!inst.contains(prop) || !needs.is_array()) continue;
          for (const auto& n : needs) {
            if (n.is_string() && !inst.contains(n.get<std::string>())) {
              fail(out, ipath, kpath + "/dependentRequired", "property " + prop + " requires " + n.get<std::string>());
            }
          }
        }
      }
    }
  }

  void eval_applicators(const Json& s, const std::string& base, const Json& inst, const std::string& ipath,
                        const std::string& kpath, Annotations& out) {
    auto sub = [&](const Json& schema, const Json& value, const std::string& ip, const std::string& kp) {
      return eval(schema, base, value, ip, kp);
    };

    if (auto a = s.find("allOf"); a != s.end() && a->is_array()) {
      for (std::size_t i = 0; i < a->size(); ++i) {
        Annotations r = sub((*a)[i], inst, ipath, kpath + "/allOf/" + std::to_string(i));
        if (!r.valid) out.valid = false;
        out.merge(r);
      }
    }
    if (auto a = s.find("anyOf"); a != s.end() && a->is_array()) {
      bool any = false;
      for (std::size_t i = 0; i < a->size(); ++i) {
        Annotations r = probe((*a)[i], base, inst, ipath, kpath + "/anyOf/" + std::to_string(i));
        if (r.valid) {
          any = true;
          out.merge(r);
        }
      }
      if (!any) fail(out, ipath, kpath + "/anyOf", "value matches none of the anyOf alternatives");
    }
    if (auto a = s.find("oneOf"); a != s.end() && a->is_array()) {
      int matches = 0;
      Annotations matched;
      for (std::size_t i = 0; i < a->size(); ++i) {
        Annotations r = probe((*a)[i], base, inst, ipath, kpath + "/oneOf/" + std::to_string(i));
        if (r.valid) {
          ++matches;
          matched = std::move(r);
        }
      }
      if (matches != 1) {
        fail(out, ipath, kpath + "/oneOf",
             "value matches " + std::to_string(matches) + " oneOf alternatives, expected exactly 1");
      } else {
        out.merge(matched);
      }
    }
    if (auto n = s.find("not"); n != s.end()) {
      if (probe(*n, base, inst, ipath, kpath + "/not").valid) {
        fail(out, ipath, kpath + "/not", "value matches schema under not");
      }
    }
    if (auto i = s.find("if"); i != s.end()) {
      Annotations cond = probe(*i, base, inst, ipath, kpath + "/if");
      if (cond.valid) {
        out.merge(cond);
        if (auto t = s.find("then"); t != s.end()) {
          Annotations r = sub(*t, inst, ipath, kpath + "/then");
          if (!r.valid) out.valid = false;
          out.merge(r);
        }
      } else if (auto e = s.find("else"); e != s.end()) {
        Annotations r = sub(*e, inst, ipath, kpath + "/else");
        if (!r.valid) out.valid = false;
        out.merge(r);
      }
    }

    if (inst.is_array()) {
      std::size_t prefix = 0;
      if (auto p = s.find("prefixItems"); p != s.end() && p->is_array()) {
        prefix = std::min(p->size(), inst.size());
        for (std::size_t i = 0; i < prefix; ++i) {
          Annotations r = sub((*p)[i], inst[i], ipath + "/" + std::to_string(i), kpath + "/prefixItems/" + std::to_string(i));
          if (!r.valid) out.valid = false;
          out.items.insert(i);
        }
      }
      if (auto it = s.find("items"); it != s.end() && !it->is_array()) {
        for (std::size_t i = prefix; i < inst.size(); ++i) {
          Annotations r = sub(*it, inst[i], ipath + "/" + std::to_string(i), kpath + "/items");
          if (!r.valid) out.valid = false;
        }
        out.all_items = true;
      }
      if (auto c = s.find("contains"); c != s.end()) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < inst.size(); ++i) {
          if (probe(*c, base, inst[i], ipath + "/" + std::to_string(i), kpath + "/contains").valid) {
            ++count;
            out.items.insert(i);
          }
        }
        double min_c = 1;
        if (auto m = s.find("minContains"); m != s.end() && m->is_number()) min_c = m->get<double>();
        if (count < min_c) fail(out, ipath, kpath + "/contains", "too few items match contains");
        if (auto m = s.find("maxContains"); m != s.end() && m->is_number() && count > m->get<double>()) {
          fail(out, ipath, kpath + "/maxContains", "too many items match contains");
        }
      }
    }

    if (inst.is_object()) {
      std::set<std::string> matched;
      if (auto p = s.find("properties"); p != s.end() && p->is_object()) {
        for (const auto& [name, schema] : p->items()) {
          auto v = inst.find(name);
          if (v == inst.end()) continue;
          Annotations r = sub(schema, *v, ipath + "/" + escape_pointer_token(name),
                              kpath + "/properties/" + escape_pointer_token(name));
          if (!r.valid) out.valid = false;
          matched.insert(name);
        }
      }
      if (auto p = s.find("patternProperties"); p != s.end() && p->is_object()) {
        for (const auto& [pattern, schema] : p->items()) {
          const std::regex* re = regex_cache().get(pattern);
          if (!re) {
            fail(out, ipath, kpath + "/patternProperties", "unsupported regular expression");
            continue;
          }
          for (const auto& [name, value] : inst.items()) {
            if (!std::regex_search(name, *re)) continue;
            Annotations r = sub(schema, value, ipath + "/" + escape_pointer_token(name),
                                kpath + "/patternProperties/" + escape_pointer_token(pattern));
            if (!r.valid) out.valid = false;
            matched.insert(name);
          }
        }
      }
      if (auto a = s.find("additionalProperties"); a != s.end()) {
        for (const auto& [name, value] : inst.items()) {
          if (matched.count(name)) continue;
          Annotations r = sub(*a, value, ipath + "/" + escape_pointer_token(name), kpath + "/additionalProperties");
          if (!r.valid) {
            out.valid = false;
            if (a->is_boolean()) fail(out, ipath, kpath + "/additionalProperties", "unexpected property " + name);
          }
          matched.insert(name);
        }
      }
      out.props.insert(matched.begin(), matched.end());
      if (auto d = s.find("dependentSchemas"); d != s.end() && d->is_object()) {
        for (const auto& [prop, schema] : d->items()) {
          if (!inst.contains(prop)) continue;
          Annotations r = sub(schema, inst, ipath, kpath + "/dependentSchemas/" + escape_pointer_token(prop));
          if (!r.valid) out.valid = false;
          out.merge(r);
        }
      }
      if (auto pn = s.find("propertyNames"); pn != s.end()) {
        for (const auto& [name, _] : inst.items()) {
          Annotations r = sub(*pn, Json(name), ipath + "/" + escape_pointer_token(name), kpath + "/propertyNames");
          if (!r.valid) out.valid = false;
        }
      }
    }
  }

  void eval_unevaluated(const Json& s, const std::string& base, const Json& inst, const std::string& ipath,
                        const std::string& kpath, Annotations& out) {
    if (auto u = s.find("unevaluatedItems"); u != s.end() && inst.is_array() && !out.all_items) {
      for (std::size_t i = 0; i < inst.size(); ++i) {
        if (out.items.count(i)) continue;
        Annotations r = eval(*u, base, inst[i], ipath + "/" + std::to_string(i), kpath + "/unevaluatedItems");
        if (!r.valid) out.valid = false;
      }
      out.all_items = true;
    }
    if (auto u = s.find("unevaluatedProperties"); u != s.end() && inst.is_object()) {
      for (const auto& [name, value] : inst.items()) {
        if (out.props.count(name)) continue;
        Annotations r = eval(*u, base, value, ipath + "/" + escape_pointer_token(name), kpath + "/unevaluatedProperties");
        if (!r.valid) {
          out.valid = false;
          if (u->is_boolean()) fail(out, ipath, kpath + "/unevaluatedProperties", "unevaluated property " + name);
        }
      }
      for (const auto& [name, _] : inst.items()) out.props.insert(name);
    }
  }

  const SchemaStore& store_;
  std::vector<SchemaError>* errors_;
  std::vector<std::string> scope_;
  int depth_ = 0;
};

}  // namespace

Validator::Validator(Json schema) : store_(std::make_unique<SchemaStore>(&metaschema_store())) {
  root_ = &store_->add(std::move(schema), kDefaultBase);
  root_base_ = store_->base_of(root_).value_or(std::string(kDefaultBase));
}

Validator::~Validator() = default;
Validator::Validator(Validator&&) noexcept = default;
Validator& Validator::operator=(Validator&&) noexcept = default;

Outcome Validator::validate(const Json& instance) const {
  Outcome outcome;
  Evaluator evaluator(*store_, &outcome.errors);
  outcome.valid = evaluator.eval(*root_, root_base_, instance, "", "").valid;
  if (outcome.valid) outcome.errors.clear();
  return outcome;
}

Outcome validate_against_metaschema(const Json& schema) {
  const SchemaStore& store = metaschema_store();
  auto meta = store.lookup("https://json-schema.org/draft/2020-12/schema");
  Outcome outcome;
  Evaluator evaluator(store, &outcome.errors);
  outcome.valid = evaluator.eval(*meta->node, meta->base, schema, "", "").valid;
  if (outcome.valid) outcome.errors.clear();
  return outcome;
}

}  // namespace toolreg::schema
