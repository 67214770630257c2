// Small JSON Schema subset: type, enum, required, properties, items,
// minItems, maxItems, minimum and local $ref.
#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace schema {

std::vector<std::string> check(const nlohmann::json& schema, const nlohmann::json& doc);

nlohmann::json load(const std::string& path);

}  // namespace schema
