#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolreg/registry.hpp"

namespace toolreg {

struct HttpClientConfig {
  std::string base_url;
  std::map<std::string, std::string> default_headers;
  std::chrono::milliseconds timeout{10'000};
  /// Bearer token sent as "Authorization: Bearer <token>".
  std::optional<std::string> auth;

  /// Throws std::invalid_argument unless base_url is absolute http(s) and
  /// the timeout is positive.
  void check() const;
  Json to_json() const;
  static HttpClientConfig from_json(const Json& json);
};

enum class ParamLocation { path, query, header, body };

std::string_view to_string(ParamLocation location);

struct OpenAPIOperation {
  std::string operation_id;
  std::string method;  // upper case
  std::string path_template;
  /// In the order the properties appear in request_schema.
  std::vector<std::pair<std::string, ParamLocation>> param_locations;
  ParameterSchema request_schema = ParameterSchema::empty();
  std::string description;
  /// The request body is not an object; it travels as the "body" argument.
  bool whole_body = false;

  std::optional<ParamLocation> location_of(std::string_view name) const;
  Json to_json() const;
  static OpenAPIOperation from_json(const Json& json);
};

struct SkippedOperation {
  std::string method;
  std::string path;
  std::string reason;
};

struct ExtractionReport {
  std::vector<OpenAPIOperation> operations;
  std::vector<SkippedOperation> skipped;
};

struct ExtractOptions {
  int max_ref_depth = 3;
};

/// Reads a file or fetches a URL (JSON or YAML). A URL that does not name a
/// document is probed at /openapi.json, then /openapi.yaml. Throws
/// FetchError, ParseError, UnsupportedVersion.
Json load_openapi_spec(const std::string& source, std::chrono::milliseconds timeout = std::chrono::seconds(10));

/// Parses JSON or YAML text. Throws ParseError.
Json parse_openapi_text(const std::string& text);

/// Throws UnsupportedVersion unless `openapi` is 3.0.x or 3.1.x.
void check_openapi_version(const Json& spec);

/// One operation per (path, method), in document order. Throws
/// NameCollision, RefResolutionError, UnsupportedVersion.
ExtractionReport extract_operations_report(const Json& spec, const ExtractOptions& options = {});
std::vector<OpenAPIOperation> extract_operations(const Json& spec, const ExtractOptions& options = {});

/// Tool whose handler issues the operation's HTTP request.
Tool operation_to_tool(const OpenAPIOperation& op, const HttpClientConfig& client);

/// Every operation of `spec` as a toolset named after info.title.
Toolset openapi_toolset(const HttpClientConfig& client, const Json& spec);

/// Namespace, when requested, is info.title in snake_case.
std::size_t register_from_openapi(ToolRegistry& registry, const HttpClientConfig& client, const Json& spec,
                                  bool with_namespace = false);

}  // namespace toolreg
