#pragma once

// JSON config loading shared by the CLI and the bridge server.

#include <nlohmann/json.hpp>

#include <string>

namespace arcmark {

/// Reads and parses a JSON file.  Missing files and syntax errors raise ParameterError.
nlohmann::json load_json_file(const std::string& path);

/// Recursively overlays `patch` onto `base`; objects merge, everything else replaces.
void merge_json(nlohmann::json& base, const nlohmann::json& patch);

} // namespace arcmark
