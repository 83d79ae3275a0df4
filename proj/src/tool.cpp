#include "toolreg/tool.hpp"

#include <algorithm>
#include <condition_variable>
#include <mutex>
#include <set>

#include "fork_guard.hpp"
#include "toolreg/json_schema.hpp"

namespace toolreg {

namespace detail {

struct CompletionState {
  std::mutex mutex;
  std::condition_variable cv;
  bool done = false;
  Json value;
  std::exception_ptr error;
};

namespace {

Json drive_async(const AsyncHandler& handler, const Json& arguments) {
  auto state = std::make_shared<CompletionState>();
  Completion done(state);

  // A blocking wait on the shared loop from its own thread would never
  // return, so nested calls get a private loop.
  EventLoop* loop = &EventLoop::shared();
  std::unique_ptr<EventLoop> private_loop;
  if (EventLoop::current() == loop) {
    private_loop = std::make_unique<EventLoop>();
    loop = private_loop.get();
  }

  loop->post([handler, arguments, loop, done] {
    try {
      handler(arguments, *loop, done);
    } catch (...) {
      done.fail(std::current_exception());
    }
  });

  std::unique_lock lock(state->mutex);
  state->cv.wait(lock, [&] { return state->done; });
  if (state->error) std::rethrow_exception(state->error);
  return std::move(state->value);
}

// Keywords whose values hold schemas; used to look for leftover references.
bool find_reference(const Json& node, const std::string& path, std::string& where) {
  if (!node.is_object()) return false;
  for (const auto& [key, value] : node.items()) {
    std::string here = path + "/" + key;
    if (key == "$ref" || key == "$dynamicRef") {
      where = here;
      return true;
    }
    if (key == "enum" || key == "const" || key == "default" || key == "examples" || key == "example") continue;
    if (value.is_object()) {
      if (key == "properties" || key == "patternProperties" || key == "$defs" || key == "definitions" ||
          key == "dependentSchemas") {
        for (const auto& [name, sub] : value.items()) {
          if (find_reference(sub, here + "/" + name, where)) return true;
        }
      } else if (find_reference(value, here, where)) {
        return true;
      }
    } else if (value.is_array()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (find_reference(value[i], here + "/" + std::to_string(i), where)) return true;
      }
    }
  }
  return false;
}

}  // namespace
}  // namespace detail

void Completion::succeed(Json value) const {
  {
    std::lock_guard lock(state_->mutex);
    if (state_->done) return;
    state_->value = std::move(value);
    state_->done = true;
  }
  state_->cv.notify_all();
}

void Completion::fail(std::exception_ptr error) const {
  {
    std::lock_guard lock(state_->mutex);
    if (state_->done) return;
    state_->error = std::move(error);
    state_->done = true;
  }
  state_->cv.notify_all();
}

void Completion::fail(const std::string& message) const {
  fail(std::make_exception_ptr(std::runtime_error(message)));
}

ParameterSchema ParameterSchema::from_json(const Json& schema) {
  if (!schema.is_object()) throw InvalidSchema("", "parameter schema must be a JSON object");
  auto type = schema.find("type");
  if (type == schema.end() || *type != "object") throw InvalidSchema("/type", "parameter schema type must be \"object\"");

  Json canonical = Json::object();
  canonical["type"] = "object";
  canonical["properties"] = schema.value("properties", Json::object());
  canonical["required"] = schema.value("required", Json::array());
  canonical["additionalProperties"] = schema.value("additionalProperties", Json(false));
  for (const auto& [key, value] : schema.items()) {
    if (!canonical.contains(key)) canonical[key] = value;
  }

  if (auto outcome = schema::validate_against_metaschema(canonical); !outcome) {
    const auto& err = outcome.errors.empty() ? schema::SchemaError{"", "", "meta-schema violation"}
                                             : outcome.errors.front();
    throw InvalidSchema(err.instance_path, err.message);
  }
  if (!canonical["properties"].is_object()) throw InvalidSchema("/properties", "must be an object");
  const Json& required = canonical["required"];
  for (std::size_t i = 0; i < required.size(); ++i) {
    const auto& name = required[i].get_ref<const std::string&>();
    if (!canonical["properties"].contains(name)) {
      throw InvalidSchema("/required/" + std::to_string(i), "required property \"" + name + "\" is not declared");
    }
  }
  std::string where;
  if (detail::find_reference(canonical, "", where)) throw InvalidSchema(where, "unresolved schema reference");

  return ParameterSchema(std::make_shared<const Json>(std::move(canonical)));
}

ParameterSchema ParameterSchema::empty() {
  static const ParameterSchema schema = from_json(Json{{"type", "object"}});
  return schema;
}

namespace {

struct ObserverSlot {
  detail::ForkSafeMutex mutex;
  std::shared_ptr<const ToolObserver> observer;
};

ObserverSlot& observer_slot() {
  static auto* slot = new ObserverSlot;
  return *slot;
}

Tool observed(Tool tool) {
  std::shared_ptr<const ToolObserver> observer;
  {
    auto& slot = observer_slot();
    std::lock_guard lock(slot.mutex);
    observer = slot.observer;
  }
  if (observer) (*observer)(tool);
  return tool;
}

}  // namespace

void set_tool_observer(ToolObserver observer) {
  auto& slot = observer_slot();
  std::lock_guard lock(slot.mutex);
  slot.observer = observer ? std::make_shared<const ToolObserver>(std::move(observer)) : nullptr;
}

Tool Tool::with_name(std::string name) const {
  if (!is_valid_tool_name(name)) throw InvalidName("invalid tool name \"" + name + "\"");
  auto body = std::make_shared<Body>(*body_);
  body->name = std::move(name);
  return observed(Tool(std::move(body)));
}

Tool Tool::with_transfer(TransferSpec spec) const {
  auto body = std::make_shared<Body>(*body_);
  body->transfer = std::move(spec);
  return observed(Tool(std::move(body)));
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::execution: return "execution";
    case ErrorKind::timeout: return "timeout";
    case ErrorKind::transport: return "transport";
  }
  return "execution";
}

std::optional<ErrorKind> error_kind_from_string(std::string_view text) {
  for (auto kind : {ErrorKind::validation, ErrorKind::not_found, ErrorKind::execution, ErrorKind::timeout,
                    ErrorKind::transport}) {
    if (to_string(kind) == text) return kind;
  }
  return std::nullopt;
}

ToolCallResult ToolCallResult::success(std::string id, Json value) {
  ToolCallResult r;
  r.id_ = std::move(id);
  r.value_ = std::move(value);
  return r;
}

ToolCallResult ToolCallResult::failure(std::string id, ErrorKind kind, std::string message) {
  ToolCallResult r;
  r.id_ = std::move(id);
  r.error_ = ToolError{kind, std::move(message)};
  return r;
}

ToolCallResult ToolCallResult::with_id(std::string id) const {
  ToolCallResult r = *this;
  r.id_ = std::move(id);
  return r;
}

Json ToolCallResult::to_json() const {
  Json out = Json::object();
  out["id"] = id_;
  if (ok()) {
    out["status"] = "success";
    out["value"] = *value_;
  } else {
    out["status"] = "error";
    out["error"] = Json{{"kind", to_string(error_->kind)}, {"message", error_->message}};
  }
  return out;
}

ToolCallResult ToolCallResult::from_json(const Json& json) {
  std::string id = json.at("id").get<std::string>();
  if (json.at("status") == "success") return success(std::move(id), json.at("value"));
  const Json& err = json.at("error");
  auto kind = error_kind_from_string(err.at("kind").get<std::string>()).value_or(ErrorKind::execution);
  return failure(std::move(id), kind, err.at("message").get<std::string>());
}

bool is_valid_tool_name(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '.' ||
           c == '-';
  });
}

bool is_valid_namespace(std::string_view ns) {
  return is_valid_tool_name(ns) && ns.find('.') == std::string_view::npos;
}

Tool make_tool(std::string name, std::string description, ParameterSchema parameters, Handler handler) {
  if (!is_valid_tool_name(name)) throw InvalidName("invalid tool name \"" + name + "\"");
  bool empty_handler = std::visit([](const auto& h) { return !static_cast<bool>(h); }, handler);
  if (empty_handler) throw std::invalid_argument("tool \"" + name + "\" has no handler");
  auto body = std::make_shared<Tool::Body>(
      Tool::Body{std::move(name), std::move(description), std::move(parameters), std::move(handler), std::nullopt});
  return observed(Tool(std::move(body)));
}

Tool make_tool(std::string name, std::string description, const Json& parameters, Handler handler) {
  if (!is_valid_tool_name(name)) throw InvalidName("invalid tool name \"" + name + "\"");
  return make_tool(std::move(name), std::move(description), ParameterSchema::from_json(parameters),
                   std::move(handler));
}

Tool tool_from_declared_signature(std::string name, std::string description, const std::vector<DeclaredParam>& params,
                                  Handler handler, bool allow_additional) {
  Json properties = Json::object();
  Json required = Json::array();
  std::set<std::string> seen;
  for (const auto& p : params) {
    if (!seen.insert(p.name).second) throw DuplicateParam("duplicate parameter \"" + p.name + "\"");
    const char* type = "string";
    switch (p.kind) {
      case ParamKind::string: type = "string"; break;
      case ParamKind::number: type = "number"; break;
      case ParamKind::integer: type = "integer"; break;
      case ParamKind::boolean: type = "boolean"; break;
    }
    Json prop = Json{{"type", type}};
    if (!p.description.empty()) prop["description"] = p.description;
    properties[p.name] = std::move(prop);
    if (p.required) required.push_back(p.name);
  }
  Json schema = Json::object();
  schema["type"] = "object";
  schema["properties"] = std::move(properties);
  schema["required"] = std::move(required);
  schema["additionalProperties"] = allow_additional;
  return make_tool(std::move(name), std::move(description), schema, std::move(handler));
}

ToolCallResult run_tool(const Tool& tool, const Json& arguments, std::string id) {
  Json validated;
  try {
    validated = validate_arguments(tool, arguments);
  } catch (const ValidationError& e) {
    return ToolCallResult::failure(std::move(id), ErrorKind::validation, e.what());
  }

  Json value;
  try {
    if (const auto* sync = std::get_if<SyncHandler>(&tool.handler())) {
      value = (*sync)(validated);
    } else {
      value = detail::drive_async(std::get<AsyncHandler>(tool.handler()), validated);
    }
  } catch (const TransportError& e) {
    return ToolCallResult::failure(std::move(id), ErrorKind::transport, e.what());
  } catch (const std::exception& e) {
    return ToolCallResult::failure(std::move(id), ErrorKind::execution, e.what());
  } catch (...) {
    return ToolCallResult::failure(std::move(id), ErrorKind::execution, "handler raised a non-standard exception");
  }

  std::string why;
  if (!is_json_representable(value, &why)) {
    return ToolCallResult::failure(std::move(id), ErrorKind::execution, "handler result is not JSON: " + why);
  }
  return ToolCallResult::success(std::move(id), std::move(value));
}

std::string_view bare_name(std::string_view name) {
  auto dot = name.rfind('.');
  return dot == std::string_view::npos ? name : name.substr(dot + 1);
}

Tool update_namespace(const Tool& tool, std::string_view ns, bool force) {
  if (!is_valid_namespace(ns)) throw InvalidName("invalid namespace \"" + std::string(ns) + "\"");
  const std::string& name = tool.name();
  if (!force && name.find('.') != std::string::npos) return tool;
  return tool.with_name(std::string(ns) + "." + std::string(bare_name(name)));
}

}  // namespace toolreg
