#pragma once

#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "toolreg/errors.hpp"
#include "toolreg/event_loop.hpp"
#include "toolreg/json_util.hpp"

namespace toolreg {

namespace detail {
struct CompletionState;
}

/// One-shot result sink handed to asynchronous handlers. Copies share state;
/// the first succeed()/fail() wins and later calls are ignored.
class Completion {
 public:
  explicit Completion(std::shared_ptr<detail::CompletionState> state) : state_(std::move(state)) {}

  void succeed(Json value) const;
  void fail(std::exception_ptr error) const;
  void fail(const std::string& message) const;

 private:
  std::shared_ptr<detail::CompletionState> state_;
};

using SyncHandler = std::function<Json(const Json& arguments)>;
/// Runs on `loop`'s thread and must not block it; reports through `done`.
using AsyncHandler = std::function<void(const Json& arguments, EventLoop& loop, Completion done)>;
using Handler = std::variant<SyncHandler, AsyncHandler>;

/// JSON-Schema object describing a tool's inputs. Immutable; always carries
/// `type`, `properties`, `required` and `additionalProperties`, in that
/// order, and contains no unresolved references.
class ParameterSchema {
 public:
  /// Normalises key order, fills defaults, checks the 2020-12 meta-schema and
  /// the structural invariants. Throws InvalidSchema.
  static ParameterSchema from_json(const Json& schema);
  static ParameterSchema empty();

  const Json& json() const { return *root_; }
  const Json& properties() const { return (*root_)["properties"]; }
  const Json& required() const { return (*root_)["required"]; }
  /// `additionalProperties` as stored: a boolean or a schema.
  const Json& additional_properties() const { return (*root_)["additionalProperties"]; }

 private:
  explicit ParameterSchema(std::shared_ptr<const Json> root) : root_(std::move(root)) {}
  std::shared_ptr<const Json> root_;
};

/// Recipe that lets an isolated worker process rebuild a tool's handler:
/// the name of a registered handler factory plus its JSON configuration.
struct TransferSpec {
  std::string factory;
  Json config;
};

class Tool {
 public:
  const std::string& name() const { return body_->name; }
  const std::string& description() const { return body_->description; }
  const ParameterSchema& parameters() const { return body_->parameters; }
  const Handler& handler() const { return body_->handler; }
  bool is_async() const { return std::holds_alternative<AsyncHandler>(body_->handler); }
  const std::optional<TransferSpec>& transfer() const { return body_->transfer; }

  Tool with_name(std::string name) const;
  Tool with_transfer(TransferSpec spec) const;

 private:
  struct Body {
    std::string name;
    std::string description;
    ParameterSchema parameters;
    Handler handler;
    std::optional<TransferSpec> transfer;
  };
  explicit Tool(std::shared_ptr<const Body> body) : body_(std::move(body)) {}

  friend Tool make_tool(std::string, std::string, ParameterSchema, Handler);
  std::shared_ptr<const Body> body_;
};

struct ToolCall {
  std::string id;
  std::string name;
  Json arguments = Json::object();

  friend bool operator==(const ToolCall& a, const ToolCall& b) {
    return a.id == b.id && a.name == b.name && json_equal(a.arguments, b.arguments);
  }
};

enum class ErrorKind { validation, not_found, execution, timeout, transport };

std::string_view to_string(ErrorKind kind);
std::optional<ErrorKind> error_kind_from_string(std::string_view text);

struct ToolError {
  ErrorKind kind;
  std::string message;
};

/// Outcome of one tool call. Holds exactly one of a value or an error.
class ToolCallResult {
 public:
  static ToolCallResult success(std::string id, Json value);
  static ToolCallResult failure(std::string id, ErrorKind kind, std::string message);

  const std::string& id() const { return id_; }
  bool ok() const { return !error_.has_value(); }
  /// Precondition: ok().
  const Json& value() const { return *value_; }
  /// Precondition: !ok().
  const ToolError& error() const { return *error_; }

  ToolCallResult with_id(std::string id) const;

  /// {"id","status":"success","value"} or {"id","status":"error","error":{"kind","message"}}
  Json to_json() const;
  static ToolCallResult from_json(const Json& json);

 private:
  ToolCallResult() = default;
  std::string id_;
  std::optional<Json> value_;
  std::optional<ToolError> error_;
};

/// `[A-Za-z0-9_.-]+`
bool is_valid_tool_name(std::string_view name);
/// Namespace segment: `[A-Za-z0-9_-]+`
bool is_valid_namespace(std::string_view ns);

Tool make_tool(std::string name, std::string description, ParameterSchema parameters, Handler handler);
Tool make_tool(std::string name, std::string description, const Json& parameters, Handler handler);

enum class ParamKind { string, number, integer, boolean };

struct DeclaredParam {
  std::string name;
  ParamKind kind = ParamKind::string;
  bool required = true;
  std::string description;
};

/// Builds a tool from a declared parameter list: one property per parameter,
/// `required` from the flags, unknown keys rejected unless
/// `allow_additional` is set. Throws DuplicateParam, InvalidName.
Tool tool_from_declared_signature(std::string name, std::string description, const std::vector<DeclaredParam>& params,
                                  Handler handler, bool allow_additional = false);

/// Returns `arguments` if they satisfy the schema, else throws ValidationError.
Json validate_arguments(const ParameterSchema& schema, const Json& arguments);
inline Json validate_arguments(const Tool& tool, const Json& arguments) {
  return validate_arguments(tool.parameters(), arguments);
}

/// Validates and invokes. Never throws: every failure is encoded in the
/// result. Asynchronous handlers are driven to completion on an event loop,
/// which is safe to do from inside another loop's handler.
ToolCallResult run_tool(const Tool& tool, const Json& arguments, std::string id = "");

/// Prefixes the tool name with `ns`. A name that already has a prefix keeps
/// it unless `force` is set. Throws InvalidName.
Tool update_namespace(const Tool& tool, std::string_view ns, bool force = false);

/// Receives every Tool constructed from now on, renamed copies included.
/// Meant for audits in tests; pass an empty function to remove it.
using ToolObserver = std::function<void(const Tool&)>;
void set_tool_observer(ToolObserver observer);

/// Part of the name after the last '.'.
std::string_view bare_name(std::string_view name);

}  // namespace toolreg
