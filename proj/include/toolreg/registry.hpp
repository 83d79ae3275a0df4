#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "toolreg/compat.hpp"
#include "toolreg/executor.hpp"
#include "toolreg/tool.hpp"

namespace toolreg {

/// A named, finite list of tools registered together.
struct Toolset {
  std::string name;
  std::vector<Tool> tools;
};

/// Flat map of tool name to Tool, with namespace operations. Reads may run
/// concurrently; mutations need exclusive access, which callers provide.
class ToolRegistry {
 public:
  explicit ToolRegistry(std::string name = "", ExecutorConfig executor_config = {});
  ~ToolRegistry();
  ToolRegistry(ToolRegistry&&) noexcept;
  ToolRegistry& operator=(ToolRegistry&&) noexcept;

  const std::string& name() const { return name_; }

  /// Inserts `tool`, first prefixing it with `ns` when given. Throws
  /// DuplicateName, InvalidName.
  void register_tool(const Tool& tool, std::optional<std::string_view> ns = std::nullopt);

  /// Registers every tool of `toolset` or none of them. `true` namespaces
  /// the tools under the toolset's name in snake_case; a string names the
  /// namespace explicitly. Returns the number added.
  std::size_t register_toolset(const Toolset& toolset, std::variant<bool, std::string> with_namespace = false);

  std::optional<Tool> get_tool(std::string_view name) const;
  bool contains(std::string_view name) const { return tools_.find(std::string(name)) != tools_.end(); }
  std::size_t size() const { return tools_.size(); }
  /// Sorted.
  std::vector<std::string> names() const;
  const std::set<std::string>& sub_registries() const { return sub_registries_; }

  /// Tool definitions sorted by name, with '.' in names replaced by
  /// separator().
  Json get_tools_json(ApiFormat format = ApiFormat::openai_chat_completion) const;

  /// Separator used in emitted definitions; names coming back from a
  /// provider are mapped to the registered ones on dispatch.
  const std::string& separator() const { return separator_; }
  void set_separator(std::string separator);

  /// Copies every tool of `src` in. On a name clash the existing tool stays
  /// when keep_existing is set and is replaced otherwise.
  void merge(const ToolRegistry& src, bool keep_existing = true);

  /// Moves every tool named "prefix.*" to a new registry. Throws
  /// UnknownPrefix when none match.
  ToolRegistry spinoff(std::string_view prefix);

  /// Renames "prefix.x" to "x" throughout. Throws CollisionAfterReduce and
  /// leaves the registry unchanged if that would clash.
  void reduce_namespace(std::string_view prefix);

  /// Runs the calls against a snapshot of the current tools.
  BatchResults execute_tool_calls(const std::vector<ToolCall>& calls,
                                  std::optional<ExecutionMode> mode = std::nullopt) const;
  BatchResults execute_tool_calls(const std::vector<ToolCall>& calls, const ExecutorConfig& config) const;

  /// Parses provider tool calls, runs them and returns one tool message per
  /// call, in call order.
  Json execute_and_recover(const Json& raw_calls, ApiFormat format,
                           std::optional<ExecutionMode> mode = std::nullopt) const;

  const ExecutorConfig& executor_config() const;
  void set_executor_config(ExecutorConfig config);
  ExecutorStats executor_stats() const;

  /// Keeps `resource` alive for the registry's lifetime (remote sessions
  /// backing registered tools). Merged and spun-off registries share it.
  void attach(std::shared_ptr<void> resource);
  /// Releases attached resources and shuts the executor down.
  void close();

 private:
  ToolLookup snapshot_lookup() const;

  std::string name_;
  std::unordered_map<std::string, Tool> tools_;
  std::set<std::string> sub_registries_;
  std::string separator_ = ".";
  std::vector<std::shared_ptr<void>> resources_;
  std::unique_ptr<Executor> executor_;
};

}  // namespace toolreg
