#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

namespace refjac {

using Json = nlohmann::json;

/// Parses the sectioned key = value format used for experiment configs: a
/// subset of TOML with [section] and [section.sub] headers, strings, numbers,
/// booleans and (nested, possibly multi-line) arrays. Throws ConfigError with
/// the line number on malformed input.
Json parse_toml(const std::string& text);

/// Reads a config file; *.json is parsed as JSON, everything else as the
/// sectioned format.
Json load_config(const std::filesystem::path& path);

}  // namespace refjac
