#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toolreg/tool.hpp"

namespace toolreg {

/// Provider wire dialects for tool definitions and tool-calling messages.
enum class ApiFormat { openai_chat_completion, openai_response };

inline constexpr ApiFormat all_api_formats[] = {ApiFormat::openai_chat_completion, ApiFormat::openai_response};

std::string_view to_string(ApiFormat format);
/// Accepts the enum spelling and the short forms "chat" and "response".
std::optional<ApiFormat> api_format_from_string(std::string_view text);

/// `name` with every '.' replaced by `separator`.
std::string emitted_name(std::string_view name, std::string_view separator);

/// chat:     {"type":"function","function":{"name","description","parameters"}}
/// response: {"type":"function","name","description","parameters"}
Json format_tool_definition(const Tool& tool, ApiFormat format, std::string_view separator = ".");

/// Accepts the bare `tool_calls` array (or a whole assistant message) for
/// chat, and the output-item array (or a whole response object) for
/// response. Throws MalformedCall.
std::vector<ToolCall> convert_tool_calls(const Json& raw, ApiFormat format);

/// Tool-result message correlated by the call id.
Json recover_tool_message(const ToolCallResult& result, ApiFormat format);

/// Assistant-side message carrying `calls`; arguments are re-encoded as
/// canonical JSON. For the response format this is the list of
/// function_call output items.
Json recover_assistant_message(const std::vector<ToolCall>& calls, ApiFormat format);

/// String placed in a tool message for `result`.
std::string tool_message_content(const ToolCallResult& result);

}  // namespace toolreg
