#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "toolreg/json_util.hpp"

// General-purpose JSON Schema (draft 2020-12) evaluator. It is used to check
// schemas against the official meta-schema and, in tests, as a reference
// validator for instance documents.
namespace toolreg::schema {

struct SchemaError {
  std::string instance_path;  // JSON pointer into the validated instance
  std::string keyword_path;   // JSON pointer into the schema
  std::string message;
};

struct Outcome {
  bool valid = true;
  std::vector<SchemaError> errors;

  explicit operator bool() const { return valid; }
  /// "<instance_path>: <message>" of the first error, or "" when valid.
  std::string summary() const;
};

class SchemaStore;

/// Compiled view over one schema document. Cheap to share; validate() is
/// const and thread-safe.
class Validator {
 public:
  explicit Validator(Json schema);
  ~Validator();
  Validator(Validator&&) noexcept;
  Validator& operator=(Validator&&) noexcept;

  Outcome validate(const Json& instance) const;

 private:
  std::unique_ptr<SchemaStore> store_;
  const Json* root_ = nullptr;
  std::string root_base_;
};

/// Validates a schema document against the draft 2020-12 meta-schema.
Outcome validate_against_metaschema(const Json& schema);

/// URI reference resolution (RFC 3986 section 5.2, without dot-segment
/// normalisation beyond what schema identifiers need).
std::string resolve_uri(std::string_view base, std::string_view reference);

namespace detail {
const std::vector<std::string_view>& metaschema_documents();
}

}  // namespace toolreg::schema
