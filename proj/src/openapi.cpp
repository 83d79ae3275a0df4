#include "toolreg/openapi.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>

#include "http_util.hpp"
#include "schema_refs.hpp"
#include "toolreg/transfer.hpp"

namespace toolreg {

// ---------------------------------------------------------------- configs

void HttpClientConfig::check() const {
  detail::parse_url(base_url);
  if (timeout.count() <= 0) throw std::invalid_argument("HTTP timeout must be positive");
}

Json HttpClientConfig::to_json() const {
  Json headers = Json::object();
  for (const auto& [k, v] : default_headers) headers[k] = v;
  Json out = {{"base_url", base_url}, {"default_headers", headers}, {"timeout_ms", timeout.count()}};
  out["auth"] = auth ? Json(*auth) : Json(nullptr);
  return out;
}

HttpClientConfig HttpClientConfig::from_json(const Json& json) {
  HttpClientConfig c;
  c.base_url = json.at("base_url").get<std::string>();
  Json headers = json.value("default_headers", Json::object());
  for (const auto& [k, v] : headers.items()) c.default_headers[k] = v.get<std::string>();
  c.timeout = std::chrono::milliseconds(json.value("timeout_ms", 10'000));
  if (auto a = json.find("auth"); a != json.end() && a->is_string()) c.auth = a->get<std::string>();
  return c;
}

std::string_view to_string(ParamLocation location) {
  switch (location) {
    case ParamLocation::path: return "path";
    case ParamLocation::query: return "query";
    case ParamLocation::header: return "header";
    case ParamLocation::body: return "body";
  }
  return "body";
}

namespace {

ParamLocation location_from_string(const std::string& s) {
  if (s == "path") return ParamLocation::path;
  if (s == "query") return ParamLocation::query;
  if (s == "header") return ParamLocation::header;
  if (s == "body") return ParamLocation::body;
  throw std::invalid_argument("unknown parameter location \"" + s + "\"");
}

}  // namespace

std::optional<ParamLocation> OpenAPIOperation::location_of(std::string_view name) const {
  for (const auto& [n, loc] : param_locations) {
    if (n == name) return loc;
  }
  return std::nullopt;
}

Json OpenAPIOperation::to_json() const {
  Json locations = Json::object();
  for (const auto& [n, loc] : param_locations) locations[n] = std::string(to_string(loc));
  return Json{{"operation_id", operation_id},
              {"method", method},
              {"path_template", path_template},
              {"param_locations", locations},
              {"request_schema", request_schema.json()},
              {"description", description},
              {"whole_body", whole_body}};
}

OpenAPIOperation OpenAPIOperation::from_json(const Json& json) {
  OpenAPIOperation op;
  op.operation_id = json.at("operation_id").get<std::string>();
  op.method = json.at("method").get<std::string>();
  op.path_template = json.at("path_template").get<std::string>();
  for (const auto& [n, loc] : json.at("param_locations").items()) {
    op.param_locations.emplace_back(n, location_from_string(loc.get<std::string>()));
  }
  op.request_schema = ParameterSchema::from_json(json.at("request_schema"));
  op.description = json.value("description", "");
  op.whole_body = json.value("whole_body", false);
  return op;
}

// ---------------------------------------------------------------- loading

namespace {

Json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      Json out = Json::array();
      for (const auto& item : node) out.push_back(yaml_to_json(item));
      return out;
    }
    case YAML::NodeType::Map: {
      Json out = Json::object();
      for (const auto& kv : node) out[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return out;
    }
    case YAML::NodeType::Scalar:
      break;
  }
  const std::string& text = node.Scalar();
  if (node.Tag() != "?") return text;  // quoted or explicitly tagged
  if (text == "~" || text == "null" || text == "Null" || text == "NULL" || text.empty()) return nullptr;
  if (text == "true" || text == "True" || text == "TRUE") return true;
  if (text == "false" || text == "False" || text == "FALSE") return false;
  static const std::regex int_re(R"([-+]?[0-9]+)");
  static const std::regex float_re(R"([-+]?(\.[0-9]+|[0-9]+(\.[0-9]*)?)([eE][-+]?[0-9]+)?)");
  if (std::regex_match(text, int_re)) {
    try {
      return std::stoll(text);
    } catch (const std::out_of_range&) {
      return std::stod(text);
    }
  }
  if (std::regex_match(text, float_re)) return std::stod(text);
  return text;
}

bool looks_like_json(const std::string& text) {
  auto first = text.find_first_not_of(" \t\r\n");
  return first != std::string::npos && (text[first] == '{' || text[first] == '[');
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool names_document(const std::string& path) {
  std::string p = lower(path);
  for (const char* ext : {".json", ".yaml", ".yml"}) {
    std::string e(ext);
    if (p.size() >= e.size() && p.compare(p.size() - e.size(), e.size(), e) == 0) return true;
  }
  return false;
}

struct Fetched {
  bool ok = false;
  std::string body;
  std::string problem;
};

Fetched fetch(const detail::Url& url, std::chrono::milliseconds timeout) {
  detail::ClientOptions options;
  options.connect_timeout = timeout;
  options.read_timeout = timeout;
  detail::ClientPool pool(url.origin(), options);
  auto client = pool.acquire();
  client->set_keep_alive(false);
  auto res = client->Get(url.target);
  if (!res) return {false, "", url.origin() + url.target + ": " + detail::describe(res.error())};
  if (res->status < 200 || res->status >= 300) {
    return {false, "", url.origin() + url.target + ": HTTP " + std::to_string(res->status)};
  }
  return {true, res->body, ""};
}

}  // namespace

Json parse_openapi_text(const std::string& text) {
  Json doc;
  if (looks_like_json(text)) {
    try {
      doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what());
    }
  } else {
    try {
      doc = yaml_to_json(YAML::Load(text));
    } catch (const YAML::Exception& e) {
      throw ParseError(std::string("invalid YAML: ") + e.what());
    }
  }
  if (!doc.is_object()) throw ParseError("OpenAPI document is not an object");
  return doc;
}

void check_openapi_version(const Json& spec) {
  static const std::regex version_re(R"(3\.[01]\.[0-9]+([-+].*)?)");
  auto it = spec.find("openapi");
  if (it == spec.end()) {
    if (auto sw = spec.find("swagger"); sw != spec.end()) {
      throw UnsupportedVersion("Swagger " + (sw->is_string() ? sw->get<std::string>() : sw->dump()) +
                               " documents are not supported");
    }
    throw UnsupportedVersion("document has no \"openapi\" version field");
  }
  std::string version = it->is_string() ? it->get<std::string>() : it->dump();
  if (!it->is_string() || !std::regex_match(version, version_re)) {
    throw UnsupportedVersion("unsupported OpenAPI version \"" + version + "\"");
  }
}

Json load_openapi_spec(const std::string& source, std::chrono::milliseconds timeout) {
  std::string text;
  if (source.rfind("http://", 0) == 0 || source.rfind("https://", 0) == 0) {
    detail::Url url;
    try {
      url = detail::parse_url(source);
    } catch (const std::invalid_argument& e) {
      throw FetchError(e.what());
    }
    std::vector<detail::Url> candidates;
    if (names_document(url.path())) {
      candidates.push_back(url);
    } else {
      std::string base = url.path();
      while (!base.empty() && base.back() == '/') base.pop_back();
      for (const char* doc : {"/openapi.json", "/openapi.yaml"}) {
        detail::Url u = url;
        u.target = base + doc;
        candidates.push_back(u);
      }
    }
    std::string problems;
    bool found = false;
    for (const auto& candidate : candidates) {
      Fetched f = fetch(candidate, timeout);
      if (f.ok) {
        text = std::move(f.body);
        found = true;
        break;
      }
      problems += (problems.empty() ? "" : "; ") + f.problem;
    }
    if (!found) throw FetchError("cannot fetch OpenAPI document: " + problems);
  } else {
    std::ifstream in(source, std::ios::binary);
    if (!in) throw FetchError("cannot read OpenAPI document \"" + source + "\"");
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  Json doc = parse_openapi_text(text);
  check_openapi_version(doc);
  return doc;
}

// ---------------------------------------------------------------- extraction

namespace {

const char* const kMethods[] = {"get", "post", "put", "patch", "delete"};

std::string sanitize_name(const std::string& raw) {
  std::string out;
  for (char c : raw) {
    bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    out += ok ? c : '_';
  }
  return out;
}

std::string fallback_name(const std::string& method, const std::string& path) {
  std::string p = path;
  if (!p.empty() && p[0] == '/') p.erase(0, 1);
  for (char& c : p) {
    if (c == '/' || c == '{' || c == '}') c = '_';
  }
  return sanitize_name(method + "_" + p);
}

std::vector<std::string> path_placeholders(const std::string& path) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = path.find('{', pos)) != std::string::npos) {
    auto end = path.find('}', pos);
    if (end == std::string::npos) break;
    out.push_back(path.substr(pos + 1, end - pos - 1));
    pos = end + 1;
  }
  return out;
}

struct Skip {
  std::string reason;
};

class Extractor {
 public:
  Extractor(const Json& spec, const ExtractOptions& options)
      : spec_(spec), depth_(options.max_ref_depth), v30_(spec.value("openapi", "").rfind("3.0", 0) == 0) {}

  Json schema(const Json& raw) {
    Json s = detail::inline_refs(raw, spec_, depth_);
    if (v30_) s = detail::upgrade_openapi30_schema(s);
    return detail::merge_all_of(s);
  }

  const Json& deref(const Json& node) {
    const Json* cur = &node;
    for (int hops = 0; cur->is_object() && cur->contains("$ref"); ++hops) {
      if (hops > 16) throw RefResolutionError("reference cycle at " + (*cur)["$ref"].dump());
      const std::string ref = (*cur)["$ref"].get<std::string>();
      if (ref.empty() || ref[0] != '#') throw RefResolutionError("unsupported external reference \"" + ref + "\"");
      try {
        cur = &spec_.at(Json::json_pointer(ref.substr(1)));
      } catch (const Json::exception&) {
        throw RefResolutionError("dangling reference \"" + ref + "\"");
      }
    }
    return *cur;
  }

  OpenAPIOperation operation(const std::string& path, const std::string& method, const Json& path_item,
                             const Json& op) {
    OpenAPIOperation out;
    out.method = method;
    std::transform(out.method.begin(), out.method.end(), out.method.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    out.path_template = path;
    if (auto id = op.find("operationId"); id != op.end() && id->is_string() && !id->get<std::string>().empty()) {
      out.operation_id = sanitize_name(id->get<std::string>());
    } else {
      out.operation_id = fallback_name(method, path);
    }
    std::string summary = op.value("summary", "");
    std::string description = op.value("description", "");
    out.description = summary.empty() ? description
                      : description.empty() || description == summary ? summary
                                                                       : summary + "\n\n" + description;

    // Path-level parameters, overridden by operation-level ones with the
    // same (name, in).
    std::vector<Json> params;
    auto add_params = [&](const Json& list) {
      if (!list.is_array()) return;
      for (const auto& raw : list) {
        const Json& p = deref(raw);
        if (!p.is_object()) throw Skip{"malformed parameter"};
        auto same = std::find_if(params.begin(), params.end(), [&](const Json& q) {
          return q.value("name", "") == p.value("name", "") && q.value("in", "") == p.value("in", "");
        });
        if (same != params.end()) {
          *same = p;
        } else {
          params.push_back(p);
        }
      }
    };
    add_params(path_item.value("parameters", Json::array()));
    add_params(op.value("parameters", Json::array()));

    Json properties = Json::object();
    Json required = Json::array();
    auto add_property = [&](const std::string& name, Json schema, bool is_required, ParamLocation loc) {
      if (properties.contains(name)) throw Skip{"input \"" + name + "\" is declared twice"};
      properties[name] = std::move(schema);
      if (is_required) required.push_back(name);
      out.param_locations.emplace_back(name, loc);
    };

    for (const auto& p : params) {
      std::string name = p.value("name", "");
      std::string in = p.value("in", "");
      if (name.empty()) throw Skip{"parameter without a name"};
      ParamLocation loc;
      if (in == "path") {
        loc = ParamLocation::path;
      } else if (in == "query") {
        loc = ParamLocation::query;
      } else if (in == "header") {
        loc = ParamLocation::header;
      } else if (in == "cookie") {
        if (p.value("required", false)) throw Skip{"required cookie parameter \"" + name + "\" is not supported"};
        continue;
      } else {
        throw Skip{"parameter \"" + name + "\" has unknown location \"" + in + "\""};
      }
      Json s = Json::object();
      if (auto sc = p.find("schema"); sc != p.end()) {
        s = schema(*sc);
      } else if (auto content = p.find("content"); content != p.end() && content->is_object() && !content->empty()) {
        const Json& media = content->begin().value();
        s = media.contains("schema") ? schema(media["schema"]) : Json::object();
      }
      if (!s.is_object()) s = Json::object();
      std::string doc = p.value("description", "");
      if (loc == ParamLocation::header) doc = doc.empty() ? "location=header" : "location=header. " + doc;
      if (!doc.empty() && !s.contains("description")) s["description"] = doc;
      add_property(name, std::move(s), loc == ParamLocation::path || p.value("required", false), loc);
    }

    for (const auto& placeholder : path_placeholders(path)) {
      auto loc = out.location_of(placeholder);
      if (!loc) {
        add_property(placeholder, Json{{"type", "string"}}, true, ParamLocation::path);
      } else if (*loc != ParamLocation::path) {
        throw Skip{"path placeholder \"" + placeholder + "\" is declared in another location"};
      }
    }

    if (auto body_ref = op.find("requestBody"); body_ref != op.end()) {
      const Json& body = deref(*body_ref);
      const Json content = body.value("content", Json::object());
      const Json* media = nullptr;
      for (const auto& [type, m] : content.items()) {
        if (detail::is_json_content_type(type)) {
          media = &m;
          break;
        }
      }
      if (!media) {
        std::string types;
        for (const auto& [type, _] : content.items()) types += (types.empty() ? "" : ", ") + type;
        throw Skip{"request body media type not supported (" + (types.empty() ? "none" : types) + ")"};
      }
      bool body_required = body.value("required", false);
      Json s = media->contains("schema") ? schema((*media)["schema"]) : Json::object();
      bool object_body = s.is_object() && s.contains("properties") &&
                         (!s.contains("type") || s["type"] == "object") && !s.contains("oneOf") &&
                         !s.contains("anyOf");
      if (object_body) {
        std::set<std::string> body_required_names;
        if (body_required && s.contains("required")) {
          for (const auto& r : s["required"]) body_required_names.insert(r.get<std::string>());
        }
        for (const auto& [name, sub] : s["properties"].items()) {
          add_property(name, sub, body_required_names.count(name) > 0, ParamLocation::body);
        }
      } else {
        out.whole_body = true;
        add_property("body", s, body_required, ParamLocation::body);
      }
    }

    Json root = Json::object();
    root["type"] = "object";
    root["properties"] = std::move(properties);
    root["required"] = std::move(required);
    root["additionalProperties"] = false;
    try {
      out.request_schema = ParameterSchema::from_json(root);
    } catch (const InvalidSchema& e) {
      throw Skip{std::string("input schema is not valid JSON Schema: ") + e.what()};
    }
    return out;
  }

 private:
  const Json& spec_;
  int depth_;
  bool v30_;
};

}  // namespace

ExtractionReport extract_operations_report(const Json& spec, const ExtractOptions& options) {
  check_openapi_version(spec);
  ExtractionReport report;
  Extractor extractor(spec, options);
  std::map<std::string, std::string> owners;
  const Json paths = spec.value("paths", Json::object());
  for (const auto& [path, raw_item] : paths.items()) {
    const Json& item = extractor.deref(raw_item);
    if (!item.is_object()) continue;
    for (const auto& [method, op] : item.items()) {
      std::string m = lower(method);
      if (m == "parameters" || m == "summary" || m == "description" || m == "servers" || m.rfind("x-", 0) == 0 ||
          m == "$ref") {
        continue;
      }
      if (std::find(std::begin(kMethods), std::end(kMethods), m) == std::end(kMethods)) {
        report.skipped.push_back({m, path, "HTTP method not supported"});
        continue;
      }
      if (!op.is_object()) continue;
      try {
        OpenAPIOperation operation = extractor.operation(path, m, item, op);
        std::string where = m + " " + path;
        auto [it, inserted] = owners.emplace(operation.operation_id, where);
        if (!inserted) {
          throw NameCollision("operations \"" + it->second + "\" and \"" + where + "\" are both named \"" +
                              operation.operation_id + "\"");
        }
        report.operations.push_back(std::move(operation));
      } catch (const Skip& s) {
        report.skipped.push_back({m, path, s.reason});
      }
    }
  }
  return report;
}

std::vector<OpenAPIOperation> extract_operations(const Json& spec, const ExtractOptions& options) {
  return extract_operations_report(spec, options).operations;
}

// ---------------------------------------------------------------- invocation

namespace {

constexpr const char* kFactory = "openapi.operation";

std::string percent_encode(const std::string& s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

std::string scalar_text(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

struct Endpoint {
  detail::Url base;
  std::string base_path;
};

SyncHandler make_http_handler(OpenAPIOperation op, HttpClientConfig client, std::shared_ptr<detail::ClientPool> pool) {
  Endpoint endpoint{detail::parse_url(client.base_url), ""};
  endpoint.base_path = endpoint.base.path();
  while (!endpoint.base_path.empty() && endpoint.base_path.back() == '/') endpoint.base_path.pop_back();

  return [op = std::move(op), client = std::move(client), pool = std::move(pool), endpoint](const Json& args) -> Json {
    std::string path = op.path_template;
    std::string query;
    httplib::Headers headers;
    Json body = Json::object();
    bool has_body = false;
    for (const auto& [name, loc] : op.param_locations) {
      auto it = args.find(name);
      if (it == args.end()) continue;
      switch (loc) {
        case ParamLocation::path: {
          std::string key = "{" + name + "}";
          std::string value = percent_encode(scalar_text(*it));
          for (auto pos = path.find(key); pos != std::string::npos; pos = path.find(key, pos + value.size())) {
            path.replace(pos, key.size(), value);
          }
          break;
        }
        case ParamLocation::query: {
          auto append = [&](const Json& v) {
            query += (query.empty() ? "?" : "&") + percent_encode(name) + "=" + percent_encode(scalar_text(v));
          };
          if (it->is_array()) {
            for (const auto& v : *it) append(v);
          } else {
            append(*it);
          }
          break;
        }
        case ParamLocation::header:
          headers.emplace(name, scalar_text(*it));
          break;
        case ParamLocation::body:
          has_body = true;
          if (op.whole_body) {
            body = *it;
          } else {
            body[name] = *it;
          }
          break;
      }
    }
    bool declares_body = std::any_of(op.param_locations.begin(), op.param_locations.end(),
                                     [](const auto& p) { return p.second == ParamLocation::body; });
    for (const auto& [k, v] : client.default_headers) {
      if (!headers.count(k)) headers.emplace(k, v);
    }
    if (client.auth) headers.emplace("Authorization", "Bearer " + *client.auth);
    headers.emplace("Accept", "application/json");

    std::string target = endpoint.base_path + path + query;
    std::string payload = body.dump();
    auto lease = pool->acquire();
    httplib::Result res{nullptr, httplib::Error::Unknown};
    const std::string& m = op.method;
    bool send_body = declares_body && (has_body || m == "POST" || m == "PUT" || m == "PATCH");
    if (m == "GET") {
      res = lease->Get(target, headers);
    } else if (m == "DELETE") {
      res = send_body ? lease->Delete(target, headers, payload, "application/json") : lease->Delete(target, headers);
    } else if (m == "POST") {
      res = send_body ? lease->Post(target, headers, payload, "application/json") : lease->Post(target, headers);
    } else if (m == "PUT") {
      res = send_body ? lease->Put(target, headers, payload, "application/json") : lease->Put(target, headers, "", "");
    } else if (m == "PATCH") {
      res = send_body ? lease->Patch(target, headers, payload, "application/json")
                      : lease->Patch(target, headers, "", "");
    } else {
      throw std::runtime_error("unsupported HTTP method " + m);
    }
    if (!res) {
      lease.discard();
      throw TransportError(m + " " + endpoint.base.origin() + target + " failed: " + detail::describe(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
      throw std::runtime_error("HTTP " + std::to_string(res->status) + " from " + m + " " + target + ": " +
                               detail::excerpt(res->body));
    }
    if (res->body.empty()) return nullptr;
    std::string content_type = res->get_header_value("Content-Type");
    if (content_type.empty() || detail::is_json_content_type(content_type)) {
      try {
        return Json::parse(res->body);
      } catch (const Json::parse_error&) {
        if (!content_type.empty()) throw std::runtime_error("response declared JSON but did not parse: " + detail::excerpt(res->body));
      }
    }
    return res->body;
  };
}

std::shared_ptr<detail::ClientPool> make_pool(const HttpClientConfig& client) {
  client.check();
  detail::ClientOptions options;
  options.connect_timeout = client.timeout;
  options.read_timeout = client.timeout;
  return std::make_shared<detail::ClientPool>(detail::parse_url(client.base_url).origin(), options);
}

void register_factory() {
  static std::once_flag once;
  std::call_once(once, [] {
    register_handler_factory(kFactory, [](const Json& config) -> Handler {
      HttpClientConfig client = HttpClientConfig::from_json(config.at("client"));
      return make_http_handler(OpenAPIOperation::from_json(config.at("operation")), client, make_pool(client));
    });
  });
}

Tool build_tool(const OpenAPIOperation& op, const HttpClientConfig& client, std::shared_ptr<detail::ClientPool> pool) {
  register_factory();
  Tool tool = make_tool(op.operation_id, op.description, op.request_schema, make_http_handler(op, client, std::move(pool)));
  return tool.with_transfer(TransferSpec{kFactory, Json{{"client", client.to_json()}, {"operation", op.to_json()}}});
}

}  // namespace

Tool operation_to_tool(const OpenAPIOperation& op, const HttpClientConfig& client) {
  return build_tool(op, client, make_pool(client));
}

Toolset openapi_toolset(const HttpClientConfig& client, const Json& spec) {
  auto pool = make_pool(client);
  Toolset set;
  set.name = spec.value("info", Json::object()).value("title", "openapi");
  for (const auto& op : extract_operations(spec)) set.tools.push_back(build_tool(op, client, pool));
  return set;
}

std::size_t register_from_openapi(ToolRegistry& registry, const HttpClientConfig& client, const Json& spec,
                                  bool with_namespace) {
  Toolset set = openapi_toolset(client, spec);
  if (!with_namespace) return registry.register_toolset(set, false);
  std::string ns = namespace_from_label(set.name);
  if (!is_valid_namespace(ns)) ns = "openapi";
  return registry.register_toolset(set, ns);
}

}  // namespace toolreg
