#include "decan/cli.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "decan/binary_io.hpp"
#include "decan/dataset.hpp"
#include "decan/log.hpp"
#include "decan/stats.hpp"
#include "decan/synthetic.hpp"

namespace decan::cli {

namespace fs = std::filesystem;
using features::Band;
using features::FeatureTensor;
using nlohmann::json;

RunConfig load_run_config(const std::optional<fs::path>& config_path, const std::vector<std::string>& overrides,
                          const std::optional<std::string>& out_dir, const std::optional<std::uint64_t>& seed) {
  json tree = config_path ? load_config_file(*config_path) : json::object();
  for (const auto& o : overrides) apply_override(tree, o);
  if (out_dir) tree["out"] = *out_dir;
  if (seed) tree["seed"] = *seed;
  return resolve_config(tree);
}

namespace {

// Collects produced files for one subcommand directory.
class Outputs {
 public:
  Outputs(const RunConfig& rc, std::string_view sub) : rc_(rc), sub_(sub), dir_(fs::path(rc.out_dir) / sub) {
    fs::create_directories(dir_);
  }

  const fs::path& dir() const { return dir_; }

  void write(const std::string& rel, const std::string& bytes) {
    write_file_bytes(dir_ / rel, bytes);
    note(rel);
  }

  void write_json(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }

  // Registers a file written by other code.
  void note(const std::string& rel) {
    if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
  }

  std::vector<std::string> finish() {
    write_json("config.resolved.json", {{"config_hash", rc_.hash}, {"config", rc_.resolved}});
    std::sort(files_.begin(), files_.end());
    json list = json::array();
    for (const auto& f : files_) {
      const std::string bytes = read_file_bytes(dir_ / f);
      list.push_back({{"path", f}, {"bytes", bytes.size()}, {"fnv1a", fnv1a_hex(bytes)}});
    }
    write_file_bytes(dir_ / "artifacts.json",
                     json{{"subcommand", sub_}, {"config_hash", rc_.hash}, {"files", list}}.dump(2) + "\n");
    files_.push_back("artifacts.json");
    return files_;
  }

 private:
  const RunConfig& rc_;
  std::string sub_;
  fs::path dir_;
  std::vector<std::string> files_;
};

fs::path stage(const RunConfig& rc, std::string_view sub) { return fs::path(rc.out_dir) / sub; }

void note_dataset(Outputs& out, const std::string& subdir) {
  for (const auto& e : fs::directory_iterator(out.dir() / subdir)) {
    out.note(subdir + "/" + e.path().filename().string());
  }
}

void run_synth(const RunConfig& rc, Outputs& out) {
  const SyntheticDataset ds = generate_synthetic(rc.synthetic);
  std::vector<RawTrial> all = ds.wet;
  all.insert(all.end(), ds.dry.begin(), ds.dry.end());
  save_dataset(all, out.dir() / "data", "synthetic");
  note_dataset(out, "data");
}

fs::path input_manifest(const RunConfig& rc) {
  if (!rc.dataset_manifest.empty()) return rc.dataset_manifest;
  return stage(rc, "synth") / "data" / "manifest.json";
}

void run_preprocess(const RunConfig& rc, Outputs& out) {
  auto process = [&](const fs::path& manifest, const std::string& subdir, const std::string& name) {
    std::vector<RawTrial> trials = load_dataset(manifest);
    for (auto& t : trials) t = dsp::preprocess_trial(t, rc.dsp);
    save_dataset(trials, out.dir() / subdir, name);
    note_dataset(out, subdir);
  };
  process(input_manifest(rc), "data", read_manifest(input_manifest(rc)).dataset_name);
  if (!rc.external_manifest.empty()) process(rc.external_manifest, "external", "external");
}

std::string feature_file_name(const TrialKey& key) {
  std::string stem = trial_file_name(key);
  return stem.substr(0, stem.rfind('.')) + ".dcft";
}

void run_featurize(const RunConfig& rc, Outputs& out) {
  const auto pipeline = rc.pipeline();
  json index = json::object();
  auto process = [&](const fs::path& manifest, const std::string& subdir) {
    json files = json::array();
    for (const auto& t : load_dataset(manifest)) {
      FeatureTensor ft = features::extract_features(t, pipeline.bands, pipeline.extract);
      if (pipeline.smooth) features::smooth_tensor(ft, pipeline.lds);
      const std::string rel = subdir + "/" + feature_file_name(t.key);
      features::write_feature_file(out.dir() / rel, ft, rc.hash);
      out.note(rel);
      files.push_back(rel);
    }
    index[subdir] = files;
  };
  process(stage(rc, "preprocess") / "data" / "manifest.json", "features");
  if (!rc.external_manifest.empty()) process(stage(rc, "preprocess") / "external" / "manifest.json", "external");
  out.write_json("features.json", {{"config_hash", rc.hash}, {"files", index}});
}

eval::FeatureSet load_features(const RunConfig& rc) {
  const fs::path dir = stage(rc, "featurize");
  const json index = json::parse(read_file_bytes(dir / "features.json"));
  eval::FeatureSet fs_;
  for (const auto& rel : index.at("files").at("features")) {
    FeatureTensor t = features::read_feature_file(dir / rel.get<std::string>());
    (t.key.device == DeviceKind::Wet ? fs_.wet : fs_.dry).push_back(std::move(t));
  }
  if (index.at("files").contains("external")) {
    for (const auto& rel : index.at("files").at("external")) {
      FeatureTensor t = features::read_feature_file(dir / rel.get<std::string>());
      if (t.key.device == DeviceKind::Wet) fs_.external_wet.push_back(std::move(t));
    }
  }
  auto by_key = [](const FeatureTensor& a, const FeatureTensor& b) { return a.key < b.key; };
  std::sort(fs_.wet.begin(), fs_.wet.end(), by_key);
  std::sort(fs_.dry.begin(), fs_.dry.end(), by_key);
  std::sort(fs_.external_wet.begin(), fs_.external_wet.end(), by_key);
  return fs_;
}

std::string mask_name(const std::vector<Band>& mask) {
  if (mask.size() == static_cast<std::size_t>(features::kNumBands)) {
    bool full = true;
    for (int i = 0; i < features::kNumBands; ++i) full = full && mask[static_cast<std::size_t>(i)] == static_cast<Band>(i);
    if (full) return "all";
  }
  std::string name;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (i) name += "+";
    name += features::to_string(mask[i]);
  }
  return name;
}

std::vector<std::string> band_names(const std::vector<Band>& mask) {
  std::vector<std::string> out;
  for (auto b : mask) out.emplace_back(features::to_string(b));
  return out;
}

bool is_holdout(const RunConfig& rc, int subject) {
  return std::find(rc.holdout_subjects.begin(), rc.holdout_subjects.end(), subject) != rc.holdout_subjects.end();
}

Matrix stack_rows(const std::vector<const FeatureTensor*>& ts, std::span<const Band> mask, std::vector<int>* labels) {
  std::vector<Matrix> parts;
  Eigen::Index rows = 0;
  for (const auto* t : ts) {
    parts.push_back(features::flatten_features(*t, mask));
    rows += parts.back().rows();
    if (labels) labels->insert(labels->end(), t->segment_labels.begin(), t->segment_labels.end());
  }
  if (parts.empty()) throw std::invalid_argument("no feature tensors selected");
  Matrix x(rows, parts.front().cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    x.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return x;
}

void run_train(const RunConfig& rc, Outputs& out) {
  const eval::FeatureSet data = load_features(rc);
  const auto& mask = rc.eval.band_masks.front();
  std::vector<FeatureTensor> wet, dry;
  for (const auto& t : data.dry) {
    if (!is_holdout(rc, t.key.subject_id)) dry.push_back(t);
  }
  const auto& wet_src = rc.eval.pairing.kind == PairingKind::InterDataset ? data.external_wet : data.wet;
  for (const auto& t : wet_src) {
    if (rc.eval.pairing.kind == PairingKind::InterDataset || !is_holdout(rc, t.key.subject_id)) wet.push_back(t);
  }
  if (rc.eval.pairing.kind == PairingKind::InterSubjectOneToOne) {
    std::erase_if(dry, [&](const FeatureTensor& t) { return t.key.subject_id == rc.eval.pairing.wet_subject; });
  }
  if (dry.empty()) throw std::invalid_argument("train: no dry training data after holdout");
  auto batches = build_pairs(wet, dry, rc.eval.pairing, mask);

  std::vector<const FeatureTensor*> dry_ptrs;
  for (const auto& t : dry) dry_ptrs.push_back(&t);
  const eval::Standardizer dry_std = eval::Standardizer::fit(stack_rows(dry_ptrs, mask, nullptr));
  const PairedBatch all = concatenate(batches);
  const eval::Standardizer wet_std = eval::Standardizer::fit(all.wet_features);
  std::vector<PairedBatch> usable;
  for (auto& b : batches) {
    if (b.size() < 2) continue;
    b.wet_features = wet_std.apply(b.wet_features);
    b.dry_features = dry_std.apply(b.dry_features);
    usable.push_back(std::move(b));
  }

  model::DecanConfig cfg = rc.model;
  cfg.wet_input_dim = static_cast<int>(all.wet_features.cols());
  cfg.dry_input_dim = static_cast<int>(all.dry_features.cols());
  cfg.num_classes = rc.eval.num_classes;
  cfg.seed = rc.seed;
  model::DecanModel m(cfg);
  std::string history = "epoch,total,wet,dry,contrastive\n";
  const auto result = model::train(m, usable, [&](const model::EpochRecord& r) {
    history += std::to_string(r.epoch) + "," + json(r.loss.total).dump() + "," + json(r.loss.wet).dump() + "," +
               json(r.loss.dry).dump() + "," + json(r.loss.contrastive).dump() + "\n";
  });
  json extra = {{"config_hash", rc.hash},
                {"band_mask", band_names(mask)},
                {"wet_standardizer", wet_std.to_json()},
                {"dry_standardizer", dry_std.to_json()},
                {"epochs_run", result.epochs_run},
                {"stopped_early", result.stopped_early}};
  model::save_model(out.dir() / "model.dcck", m, extra);
  out.note("model.dcck");
  out.write("history.csv", history);
  out.write_json("train.json", {{"config_hash", rc.hash},
                                {"pairs", all.size()},
                                {"batches", usable.size()},
                                {"epochs_run", result.epochs_run},
                                {"stopped_early", result.stopped_early},
                                {"final_loss", result.history.back().loss.total}});
}

void run_eval(const RunConfig& rc, Outputs& out) {
  const fs::path model_path = stage(rc, "train") / "model.dcck";
  const json header = nn::read_checkpoint_header(model_path);
  const model::DecanModel m = model::load_model(model_path);
  const auto dry_std = eval::Standardizer::from_json(header.at("dry_standardizer"));
  std::vector<Band> mask;
  for (const auto& b : header.at("band_mask")) mask.push_back(features::band_from_string(b.get<std::string>()));

  const eval::FeatureSet data = load_features(rc);
  std::vector<const FeatureTensor*> test;
  for (const auto& t : data.dry) {
    if (rc.holdout_subjects.empty() || is_holdout(rc, t.key.subject_id)) test.push_back(&t);
  }
  if (test.empty()) throw std::invalid_argument("eval: no dry recordings for the holdout subjects");
  std::vector<int> labels;
  const Matrix x = stack_rows(test, mask, &labels);
  const auto pred = model::predict_dry(m, dry_std.apply(x));
  const auto metrics = eval::compute_metrics(pred.labels, pred.probabilities, labels, m.config().num_classes);

  std::string csv = "subject,block,trial,segment,label,prediction\n";
  std::size_t row = 0;
  for (const auto* t : test) {
    for (int s = 0; s < t->n_segments; ++s, ++row) {
      csv += std::to_string(t->key.subject_id) + "," + std::to_string(t->key.block_id) + "," +
             std::to_string(t->key.trial_id) + "," + std::to_string(s) + "," + std::to_string(labels[row]) + "," +
             std::to_string(pred.labels[row]) + "\n";
    }
  }
  out.write("predictions.csv", csv);
  out.write_json("metrics.json", {{"config_hash", rc.hash},
                                  {"model_config_hash", header.value("config_hash", std::string{})},
                                  {"metrics", eval::to_json(metrics)}});
}

void run_crossval(const RunConfig& rc, Outputs& out) {
  const eval::FeatureSet data = load_features(rc);
  for (const auto& mask : rc.eval.band_masks) {
    const std::string mname = mask_name(mask);
    for (auto method : rc.eval.methods) {
      const auto spec = rc.experiment(method, mask);
      const auto report = eval::run_experiment(data, spec);
      const std::string tag = std::string(eval::to_string(method)) + "_" + mname;
      json j = eval::to_json(report, false);
      j["config_hash"] = rc.hash;
      j["name"] = tag;
      out.write_json("report_" + tag + ".json", j);
      out.write("subjects_" + tag + ".csv", eval::subject_accuracy_csv(report));
      out.write("confusion_" + tag + ".csv", eval::confusion_csv(report));
      if (rc.eval.export_latents) {
        const std::string lat = eval::latents_csv(report);
        if (!lat.empty()) out.write("latents_" + tag + ".csv", lat);
      }
      if (rc.eval.band_sweep) {
        out.write("bands_" + tag + ".csv", eval::band_accuracy_csv(eval::run_band_sweep(data, spec)));
      }
    }
    if (rc.eval.ablation) {
      auto spec = rc.experiment(eval::Method::DECAN, mask);
      json j = eval::to_json(eval::run_ablation(data, spec));
      j["config_hash"] = rc.hash;
      out.write_json("ablation_" + mname + ".json", j);
    }
  }
}

void run_report(const RunConfig& rc, Outputs& out) {
  std::vector<fs::path> inputs;
  for (const auto& p : rc.report_inputs) inputs.emplace_back(p);
  if (inputs.empty()) {
    const fs::path dir = stage(rc, "crossval");
    if (fs::exists(dir)) {
      for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.starts_with("report_") && name.ends_with(".json")) inputs.push_back(e.path());
      }
    }
    std::sort(inputs.begin(), inputs.end());
  }
  if (inputs.empty()) throw std::invalid_argument("report: no crossval reports found");

  std::vector<json> reports;
  std::set<std::string> hashes;
  for (const auto& p : inputs) {
    json j = json::parse(read_file_bytes(p));
    const std::string h = j.value("config_hash", std::string{});
    if (h.empty()) throw std::invalid_argument("report: " + p.string() + " carries no config hash");
    hashes.insert(h);
    if (!j.contains("name")) j["name"] = p.stem().string();
    reports.push_back(std::move(j));
  }
  if (hashes.size() > 1) {
    std::string msg = "report: inputs come from different configs (hashes:";
    for (const auto& h : hashes) msg += " " + h;
    throw std::invalid_argument(msg + ")");
  }

  std::string csv = "name,accuracy_mean,accuracy_std,precision_mean,recall_mean,f1_mean,auroc_mean,auprc_mean\n";
  json summary = json::array();
  for (const auto& r : reports) {
    const auto& s = r.at("summary");
    csv += r.at("name").get<std::string>() + "," + s.at("accuracy").at("mean").dump() + "," +
           s.at("accuracy").at("std").dump() + "," + s.at("precision").at("mean").dump() + "," +
           s.at("recall").at("mean").dump() + "," + s.at("f1").at("mean").dump() + "," +
           s.at("auroc").at("mean").dump() + "," + s.at("auprc").at("mean").dump() + "\n";
    summary.push_back({{"name", r.at("name")}, {"summary", s}});
  }

  auto per_subject = [](const json& r) {
    std::map<int, double> m;
    for (const auto& s : r.at("subjects")) m[s.at("subject").get<int>()] = s.at("accuracy").get<double>();
    return m;
  };
  json tests = json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (std::size_t k = i + 1; k < reports.size(); ++k) {
      const auto a = per_subject(reports[i]);
      const auto b = per_subject(reports[k]);
      std::vector<double> va, vb;
      for (const auto& [subj, acc] : a) {
        if (auto it = b.find(subj); it != b.end()) {
          va.push_back(acc);
          vb.push_back(it->second);
        }
      }
      json t = {{"a", reports[i].at("name")}, {"b", reports[k].at("name")}, {"subjects", va.size()}};
      try {
        const auto r = eval::paired_t_test(va, vb);
        t["t"] = r.t;
        t["df"] = r.df;
        t["p"] = r.p;
      } catch (const std::invalid_argument& e) {
        t["error"] = e.what();
      }
      tests.push_back(t);
    }
  }
  out.write("summary.csv", csv);
  out.write_json("summary.json", {{"config_hash", *hashes.begin()}, {"reports", summary}, {"paired_t_tests", tests}});
}

}  // namespace

std::vector<std::string> run(std::string_view subcommand, const RunConfig& rc) {
  if (std::find(std::begin(kSubcommands), std::end(kSubcommands), subcommand) == std::end(kSubcommands)) {
    throw std::invalid_argument("unknown subcommand: " + std::string(subcommand));
  }
  Outputs out(rc, subcommand);
  if (subcommand == "synth") run_synth(rc, out);
  if (subcommand == "preprocess") run_preprocess(rc, out);
  if (subcommand == "featurize") run_featurize(rc, out);
  if (subcommand == "train") run_train(rc, out);
  if (subcommand == "eval") run_eval(rc, out);
  if (subcommand == "crossval") run_crossval(rc, out);
  if (subcommand == "report") run_report(rc, out);
  return out.finish();
}

}  // namespace decan::cli
