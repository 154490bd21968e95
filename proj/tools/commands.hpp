#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"

namespace brpsync::cli {

struct CommandOptions {
  std::string subcommand;
  std::optional<std::filesystem::path> config_path;
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<std::string> snr;
  std::vector<std::string> overrides;
};

// Defaults, then the config file, then --set overrides, then the dedicated
// flags (which target the section used by the subcommand).
Json effective_config(const CommandOptions& options);

Json cmd_design(const Json& config);
Json cmd_bounds(const Json& config);
experiments::SweepResult cmd_sweep(const Json& config);
Json cmd_gamma(const Json& config);

// Runs a subcommand, writing its files under options.out_dir plus
// effective_config.json. Returns the process exit code; errors are reported
// on `err` as one JSON object per line.
int run(const CommandOptions& options, std::ostream& out, std::ostream& err);

Json error_record(std::string_view code, std::string_view message);

}  // namespace brpsync::cli
