#include "toolreg/compat.hpp"

namespace toolreg {

std::string_view to_string(ApiFormat format) {
  return format == ApiFormat::openai_chat_completion ? "openai_chat_completion" : "openai_response";
}

std::optional<ApiFormat> api_format_from_string(std::string_view text) {
  if (text == "openai_chat_completion" || text == "chat") return ApiFormat::openai_chat_completion;
  if (text == "openai_response" || text == "response") return ApiFormat::openai_response;
  return std::nullopt;
}

std::string emitted_name(std::string_view name, std::string_view separator) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    if (c == '.') {
      out += separator;
    } else {
      out += c;
    }
  }
  return out;
}

Json format_tool_definition(const Tool& tool, ApiFormat format, std::string_view separator) {
  Json fn = Json::object();
  if (format == ApiFormat::openai_response) fn["type"] = "function";
  fn["name"] = emitted_name(tool.name(), separator);
  fn["description"] = tool.description();
  fn["parameters"] = tool.parameters().json();
  if (format == ApiFormat::openai_response) return fn;
  return Json{{"type", "function"}, {"function", std::move(fn)}};
}

namespace {

std::string required_string(const Json& object, const char* key, std::size_t index) {
  auto it = object.find(key);
  if (it == object.end()) throw MalformedCall(index, std::string("missing \"") + key + "\"");
  if (!it->is_string()) throw MalformedCall(index, std::string("\"") + key + "\" is not a string");
  if (it->get_ref<const std::string&>().empty()) throw MalformedCall(index, std::string("empty \"") + key + "\"");
  return it->get<std::string>();
}

Json parse_arguments(const Json& object, std::size_t index) {
  auto it = object.find("arguments");
  if (it == object.end() || it->is_null()) return Json::object();
  if (!it->is_string()) throw MalformedCall(index, "\"arguments\" is not a JSON-encoded string");
  const auto& text = it->get_ref<const std::string&>();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return Json::object();
  Json args;
  try {
    args = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw MalformedCall(index, std::string("arguments are not valid JSON: ") + e.what());
  }
  if (!args.is_object()) throw MalformedCall(index, "arguments do not encode a JSON object");
  return args;
}

const Json& unwrap_list(const Json& raw, const char* key) {
  if (raw.is_object()) {
    auto it = raw.find(key);
    if (it == raw.end() || it->is_null()) {
      static const Json empty = Json::array();
      return empty;
    }
    if (!it->is_array()) throw MalformedCall(0, std::string("\"") + key + "\" is not an array");
    return *it;
  }
  if (!raw.is_array()) throw MalformedCall(0, "expected an array of tool calls");
  return raw;
}

}  // namespace

std::vector<ToolCall> convert_tool_calls(const Json& raw, ApiFormat format) {
  std::vector<ToolCall> calls;
  if (format == ApiFormat::openai_chat_completion) {
    const Json& items = unwrap_list(raw, "tool_calls");
    calls.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      const Json& item = items[i];
      if (!item.is_object()) throw MalformedCall(i, "tool call is not an object");
      if (auto t = item.find("type"); t != item.end() && *t != "function") {
        throw MalformedCall(i, "unsupported tool call type " + t->dump());
      }
      auto fn = item.find("function");
      if (fn == item.end() || !fn->is_object()) throw MalformedCall(i, "missing \"function\" object");
      ToolCall call;
      call.id = required_string(item, "id", i);
      call.name = required_string(*fn, "name", i);
      call.arguments = parse_arguments(*fn, i);
      calls.push_back(std::move(call));
    }
    return calls;
  }

  const Json& items = unwrap_list(raw, "output");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Json& item = items[i];
    if (!item.is_object()) throw MalformedCall(i, "output item is not an object");
    auto t = item.find("type");
    if (t == item.end() || *t != "function_call") continue;
    ToolCall call;
    call.id = required_string(item, "call_id", i);
    call.name = required_string(item, "name", i);
    call.arguments = parse_arguments(item, i);
    calls.push_back(std::move(call));
  }
  return calls;
}

std::string tool_message_content(const ToolCallResult& result) {
  if (!result.ok()) {
    Json payload = {{"error", {{"kind", std::string(to_string(result.error().kind))}, {"message", result.error().message}}}};
    return payload.dump(-1, ' ', false, Json::error_handler_t::replace);
  }
  const Json& value = result.value();
  if (value.is_string()) return value.get<std::string>();
  return canonical_dump(value);
}

Json recover_tool_message(const ToolCallResult& result, ApiFormat format) {
  if (format == ApiFormat::openai_chat_completion) {
    return Json{{"role", "tool"}, {"tool_call_id", result.id()}, {"content", tool_message_content(result)}};
  }
  return Json{{"type", "function_call_output"}, {"call_id", result.id()}, {"output", tool_message_content(result)}};
}

Json recover_assistant_message(const std::vector<ToolCall>& calls, ApiFormat format) {
  Json items = Json::array();
  for (const auto& call : calls) {
    std::string arguments = canonical_dump(call.arguments.is_null() ? Json::object() : call.arguments);
    if (format == ApiFormat::openai_chat_completion) {
      items.push_back(Json{{"id", call.id},
                           {"type", "function"},
                           {"function", {{"name", call.name}, {"arguments", std::move(arguments)}}}});
    } else {
      items.push_back(
          Json{{"type", "function_call"}, {"call_id", call.id}, {"name", call.name}, {"arguments", std::move(arguments)}});
    }
  }
  if (format == ApiFormat::openai_response) return items;
  return Json{{"role", "assistant"}, {"content", nullptr}, {"tool_calls", std::move(items)}};
}

}  // namespace toolreg
