#pragma once

#include "toolreg/json_util.hpp"

namespace toolreg::detail {

/// Replaces every local "#/..." reference inside `node` with the schema it
/// points to in `document`. A reference already being expanded `max_depth`
/// times on the current path becomes {"type":"object"}. Sibling keywords
/// of a $ref override the target's. Throws RefResolutionError.
Json inline_refs(const Json& node, const Json& document, int max_depth);

/// Folds allOf members into their parent: properties and required are
/// unioned, other keywords keep the first value seen.
Json merge_all_of(const Json& schema);

/// OpenAPI 3.0 schema dialect to JSON Schema 2020-12: `nullable`,
/// boolean `exclusiveMinimum`/`exclusiveMaximum`.
Json upgrade_openapi30_schema(const Json& schema);

}  // namespace toolreg::detail
