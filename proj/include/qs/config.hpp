#pragma once

#include <filesystem>
#include <string_view>

#include "json.hpp"

namespace qs {

// Reads a JSON or TOML config file into a JSON object. Format is chosen by the
// extension (.toml / .json); anything else is tried as JSON first.
nlohmann::json load_config(const std::filesystem::path& path);

// TOML subset: [tables], [dotted.tables], dotted keys, basic/literal strings,
// integers, floats, booleans and single-line (possibly nested) arrays.
nlohmann::json parse_toml(std::string_view text);

// Recursively overlays `patch` onto `base` (objects merge, everything else replaces).
void merge_config(nlohmann::json& base, const nlohmann::json& patch);

}  // namespace qs
