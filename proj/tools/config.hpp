#pragma once

#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "brpsync/experiments.hpp"

namespace brpsync::cli {

using Json = nlohmann::ordered_json;

// Every accepted key with its default; files and overrides may only replace
// values that appear here.
Json default_config();

// Merges `overlay` into `base`. Unknown keys and type changes are errors.
void merge_strict(Json& base, const Json& overlay, const std::string& where = "");

Json load_config(const std::optional<std::filesystem::path>& path);

// "section.key=value"; the value is parsed as JSON and falls back to a plain
// string.
void apply_override(Json& config, std::string_view assignment);

// "0,5,10" or "start:step:stop" (inclusive).
std::vector<double> parse_snr_grid(std::string_view text);

channel::SystemConfig system_from(const Json& config);
experiments::ExperimentConfig experiment_from(const Json& config);

// Rounded to 9 significant digits; infinities become the string "inf".
Json number(double value);

}  // namespace brpsync::cli
