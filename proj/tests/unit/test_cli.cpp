#include <doctest.h>

#include <json.hpp>

#include "decan/cli.hpp"
#include "helpers.hpp"

using namespace decan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> tiny_overrides() {
  return {"synthetic.n_subjects=2",   "synthetic.n_blocks=2",        "synthetic.trials_per_block=5",
          "synthetic.trial_seconds=10", "synthetic.wet_rate_hz=400",  "model.epochs=5",
          "model.batch_size=16",      "eval.baseline.dnn_epochs=5",  "eval.methods=[\"lr\", \"decan\"]",
          "train.holdout_subjects=[2]"};
}

cli::RunConfig tiny(const fs::path& out, std::vector<std::string> extra = {}) {
  auto o = tiny_overrides();
  o.insert(o.end(), extra.begin(), extra.end());
  return cli::load_run_config(std::nullopt, o, out.string(), std::nullopt);
}

void run_all(const cli::RunConfig& rc) {
  for (auto sub : cli::kSubcommands) cli::run(sub, rc);
}

}  // namespace

TEST_CASE("the full pipeline runs and reruns byte-identically") {
  test_util::TempDir a, b;
  const auto rca = tiny(a.path());
  run_all(rca);
  for (const char* f : {"synth/data/manifest.json", "preprocess/data/manifest.json", "featurize/features.json",
                        "train/model.dcck", "train/history.csv", "eval/metrics.json", "eval/predictions.csv",
                        "crossval/report_lr_all.json", "crossval/report_decan_all.json", "report/summary.csv",
                        "report/summary.json", "crossval/config.resolved.json", "crossval/artifacts.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(a.path() / f));
  }
  const auto summary = json::parse(test_util::read_bytes(a.path() / "report/summary.json"));
  CHECK(summary.at("config_hash") == rca.hash);
  CHECK(summary.at("reports").size() == 2);
  CHECK(summary.at("paired_t_tests").size() == 1);

  run_all(tiny(b.path()));
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.path());
    CAPTURE(rel.string());
    CHECK(test_util::read_bytes(e.path()) == test_util::read_bytes(b.path() / rel));
  }
}

TEST_CASE("report refuses inputs from different configs") {
  test_util::TempDir a, b;
  const auto rca = tiny(a.path(), {"eval.methods=[\"lr\"]"});
  const auto rcb = tiny(b.path(), {"eval.methods=[\"lr\"]", "seed=99"});
  for (const auto& rc : {rca, rcb}) {
    for (auto sub : {"synth", "preprocess", "featurize", "crossval"}) cli::run(sub, rc);
  }
  auto mixed = tiny(a.path(), {"eval.methods=[\"lr\"]"});
  mixed.report_inputs = {(a.path() / "crossval/report_lr_all.json").string(),
                         (b.path() / "crossval/report_lr_all.json").string()};
  CHECK_THROWS_WITH_AS(cli::run("report", mixed), doctest::Contains("different configs"), std::invalid_argument);
}

TEST_CASE("artifacts list hashes of produced files") {
  test_util::TempDir a;
  const auto rc = tiny(a.path());
  const auto files = cli::run("synth", rc);
  CHECK(!files.empty());
  const auto art = json::parse(test_util::read_bytes(a.path() / "synth/artifacts.json"));
  CHECK(art.dump().find("manifest.json") != std::string::npos);
  const auto resolved = json::parse(test_util::read_bytes(a.path() / "synth/config.resolved.json"));
  CHECK(resolved.at("config").at("synthetic").at("n_subjects") == 2);
  CHECK(resolved.at("config_hash") == rc.hash);
  CHECK_THROWS_AS(cli::run("bogus", rc), std::invalid_argument);
}

TEST_CASE("stages report missing inputs") {
  test_util::TempDir a;
  CHECK_THROWS(cli::run("featurize", tiny(a.path())));
}
