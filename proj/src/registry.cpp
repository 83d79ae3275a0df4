#include "toolreg/registry.hpp"

#include <algorithm>

namespace toolreg {

namespace {

bool has_prefix(std::string_view name, std::string_view prefix) {
  return name.size() > prefix.size() + 1 && name.compare(0, prefix.size(), prefix) == 0 && name[prefix.size()] == '.';
}

void check_prefix(std::string_view prefix) {
  if (!is_valid_namespace(prefix)) throw InvalidName("invalid namespace \"" + std::string(prefix) + "\"");
}

}  // namespace

ToolRegistry::ToolRegistry(std::string name, ExecutorConfig executor_config)
    : name_(std::move(name)), executor_(std::make_unique<Executor>(std::move(executor_config))) {}

ToolRegistry::~ToolRegistry() { close(); }
ToolRegistry::ToolRegistry(ToolRegistry&&) noexcept = default;
ToolRegistry& ToolRegistry::operator=(ToolRegistry&&) noexcept = default;

void ToolRegistry::register_tool(const Tool& tool, std::optional<std::string_view> ns) {
  Tool named = ns ? update_namespace(tool, *ns) : tool;
  if (tools_.count(named.name())) throw DuplicateName("tool \"" + named.name() + "\" is already registered");
  auto dot = named.name().find('.');
  tools_.emplace(named.name(), named);
  if (dot != std::string::npos) sub_registries_.insert(named.name().substr(0, dot));
}

std::size_t ToolRegistry::register_toolset(const Toolset& toolset, std::variant<bool, std::string> with_namespace) {
  std::optional<std::string> ns;
  if (auto* flag = std::get_if<bool>(&with_namespace)) {
    if (*flag) ns = namespace_from_label(toolset.name);
  } else {
    ns = std::get<std::string>(with_namespace);
  }

  std::vector<Tool> renamed;
  renamed.reserve(toolset.tools.size());
  std::set<std::string> seen;
  for (const auto& tool : toolset.tools) {
    Tool t = ns ? update_namespace(tool, *ns) : tool;
    if (tools_.count(t.name()) || !seen.insert(t.name()).second) {
      throw DuplicateName("tool \"" + t.name() + "\" is already registered");
    }
    renamed.push_back(std::move(t));
  }
  for (const auto& t : renamed) register_tool(t);
  return renamed.size();
}

std::optional<Tool> ToolRegistry::get_tool(std::string_view name) const {
  auto it = tools_.find(std::string(name));
  if (it == tools_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> ToolRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(tools_.size());
  for (const auto& [name, _] : tools_) out.push_back(name);
  std::sort(out.begin(), out.end());
  return out;
}

Json ToolRegistry::get_tools_json(ApiFormat format) const {
  Json out = Json::array();
  for (const auto& name : names()) out.push_back(format_tool_definition(tools_.at(name), format, separator_));
  return out;
}

void ToolRegistry::set_separator(std::string separator) {
  if (separator != "." && separator != "-" && separator != "_" && separator != "__") {
    throw std::invalid_argument("unsupported name separator \"" + separator + "\"");
  }
  separator_ = std::move(separator);
}

void ToolRegistry::merge(const ToolRegistry& src, bool keep_existing) {
  if (&src == this) return;
  for (const auto& [name, tool] : src.tools_) {
    auto it = tools_.find(name);
    if (it == tools_.end()) {
      tools_.emplace(name, tool);
    } else if (!keep_existing) {
      it->second = tool;
    }
  }
  sub_registries_.insert(src.sub_registries_.begin(), src.sub_registries_.end());
  resources_.insert(resources_.end(), src.resources_.begin(), src.resources_.end());
}

ToolRegistry ToolRegistry::spinoff(std::string_view prefix) {
  check_prefix(prefix);
  ToolRegistry out(std::string(prefix), executor_->defaults());
  for (auto it = tools_.begin(); it != tools_.end();) {
    if (has_prefix(it->first, prefix)) {
      out.tools_.emplace(it->first, it->second);
      it = tools_.erase(it);
    } else {
      ++it;
    }
  }
  if (out.tools_.empty()) throw UnknownPrefix("no tool is named \"" + std::string(prefix) + ".*\"");
  sub_registries_.erase(std::string(prefix));
  out.sub_registries_.insert(std::string(prefix));
  out.separator_ = separator_;
  out.resources_ = resources_;
  return out;
}

void ToolRegistry::reduce_namespace(std::string_view prefix) {
  check_prefix(prefix);
  std::vector<std::pair<std::string, std::string>> renames;
  for (const auto& [name, _] : tools_) {
    if (has_prefix(name, prefix)) renames.emplace_back(name, name.substr(prefix.size() + 1));
  }
  std::set<std::string> targets;
  for (const auto& [from, to] : renames) {
    if ((tools_.count(to) && !has_prefix(to, prefix)) || !targets.insert(to).second) {
      throw CollisionAfterReduce("reducing \"" + std::string(prefix) + "\" would make \"" + from + "\" collide with \"" +
                                 to + "\"");
    }
  }
  std::vector<std::pair<std::string, Tool>> moved;
  for (const auto& [from, to] : renames) {
    auto node = tools_.extract(from);
    moved.emplace_back(to, node.mapped().with_name(to));
  }
  for (auto& [to, tool] : moved) tools_.insert_or_assign(to, std::move(tool));
  sub_registries_.erase(std::string(prefix));
}

ToolLookup ToolRegistry::snapshot_lookup() const {
  auto snapshot = std::make_shared<std::unordered_map<std::string, Tool>>(tools_);
  if (separator_ != ".") {
    for (const auto& [name, tool] : tools_) {
      std::string alias = emitted_name(name, separator_);
      if (alias != name && !tools_.count(alias)) snapshot->emplace(alias, tool);
    }
  }
  return [snapshot](std::string_view name) -> std::optional<Tool> {
    auto it = snapshot->find(std::string(name));
    if (it == snapshot->end()) return std::nullopt;
    return it->second;
  };
}

BatchResults ToolRegistry::execute_tool_calls(const std::vector<ToolCall>& calls,
                                              std::optional<ExecutionMode> mode) const {
  ExecutorConfig config = executor_->defaults();
  if (mode) config.mode = *mode;
  return execute_tool_calls(calls, config);
}

BatchResults ToolRegistry::execute_tool_calls(const std::vector<ToolCall>& calls, const ExecutorConfig& config) const {
  return executor_->execute_batch(snapshot_lookup(), calls, config);
}

Json ToolRegistry::execute_and_recover(const Json& raw_calls, ApiFormat format,
                                       std::optional<ExecutionMode> mode) const {
  std::vector<ToolCall> calls = convert_tool_calls(raw_calls, format);
  BatchResults results = execute_tool_calls(calls, mode);
  Json messages = Json::array();
  for (const auto& call : calls) messages.push_back(recover_tool_message(results.at(call.id), format));
  return messages;
}

const ExecutorConfig& ToolRegistry::executor_config() const { return executor_->defaults(); }

void ToolRegistry::set_executor_config(ExecutorConfig config) {
  config.check();
  if (executor_) executor_->shutdown();
  executor_ = std::make_unique<Executor>(std::move(config));
}

ExecutorStats ToolRegistry::executor_stats() const { return executor_->stats(); }

void ToolRegistry::attach(std::shared_ptr<void> resource) {
  if (resource) resources_.push_back(std::move(resource));
}

void ToolRegistry::close() {
  if (executor_) executor_->shutdown();
  resources_.clear();
}

}  // namespace toolreg
