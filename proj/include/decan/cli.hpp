#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "decan/config.hpp"

namespace decan::cli {

inline constexpr std::string_view kSubcommands[] = {"synth", "preprocess", "featurize", "train",
                                                    "crossval", "eval", "report"};

// Loads the file (if any), applies overrides in order, then --out / --seed.
RunConfig load_run_config(const std::optional<std::filesystem::path>& config_path,
                          const std::vector<std::string>& overrides, const std::optional<std::string>& out_dir,
                          const std::optional<std::uint64_t>& seed);

// Runs one subcommand. Outputs land in <out>/<subcommand>/ together with
// config.resolved.json and artifacts.json (produced files, sizes, hashes).
// Returns the list of produced files relative to that directory.
std::vector<std::string> run(std::string_view subcommand, const RunConfig& config);

}  // namespace decan::cli
