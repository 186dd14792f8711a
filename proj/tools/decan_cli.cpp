#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "decan/cli.hpp"
#include "decan/log.hpp"

namespace {

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wet/dry EEG contrastive alignment: synthesis, features, training and evaluation"};
  app.require_subcommand(1, 1);

  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  for (auto name : decan::cli::kSubcommands) {
    auto* sub = app.add_subcommand(std::string(name));
    sub->add_option("--config", config_path, "TOML or JSON run config");
    sub->add_option("--set", overrides, "override block.key=value (repeatable)");
    sub->add_option("--out", out_dir, "output root directory");
    sub->add_option("--seed", seed, "base random seed");
    sub->add_flag("-v,--verbose", verbose, "log progress to stderr");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string subcommand = app.get_subcommands().front()->get_name();
  if (verbose) decan::log::set_level(decan::log::Level::Info);

  decan::cli::RunConfig rc;
  try {
    std::optional<std::filesystem::path> path;
    if (config_path) path = *config_path;
    rc = decan::cli::load_run_config(path, overrides, out_dir, seed);
  } catch (const std::exception& e) {
    return fail("config", e.what(), 2);
  }
  try {
    const auto files = decan::cli::run(subcommand, rc);
    std::cout << nlohmann::json{{"subcommand", subcommand}, {"config_hash", rc.hash}, {"files", files}}.dump() << "\n";
  } catch (const std::exception& e) {
    return fail(subcommand, e.what(), 1);
  }
  return 0;
}
