#include "decan/experiment.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "decan/log.hpp"

namespace decan::eval {

using features::Band;
using features::FeatureTensor;
using nlohmann::json;

features::FeatureTensor featurize_trial(const RawTrial& trial, const FeaturePipeline& p) {
  const RawTrial pre = dsp::preprocess_trial(trial, p.dsp);
  FeatureTensor t = features::extract_features(pre, p.bands, p.extract);
  if (p.smooth) features::smooth_tensor(t, p.lds);
  return t;
}

std::vector<features::FeatureTensor> featurize_trials(const std::vector<RawTrial>& trials, const FeaturePipeline& p) {
  std::vector<FeatureTensor> out;
  out.reserve(trials.size());
  for (const auto& t : trials) out.push_back(featurize_trial(t, p));
  return out;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::LR:
      return "lr";
    case Method::LinearSVM:
      return "svm";
    case Method::DNN:
      return "dnn";
    case Method::DECAN:
      return "decan";
    case Method::DECANNoContrastive:
      return "decan_no_cl";
  }
  return "?";
}

Method method_from_string(std::string_view name) {
  if (name == "lr" || name == "LR") return Method::LR;
  if (name == "svm" || name == "LinearSVM" || name == "linear_svm") return Method::LinearSVM;
  if (name == "dnn" || name == "DNN") return Method::DNN;
  if (name == "decan" || name == "DECAN") return Method::DECAN;
  if (name == "decan_no_cl" || name == "DECANNoContrastive") return Method::DECANNoContrastive;
  throw std::invalid_argument("unknown method: " + std::string(name));
}

namespace {

std::string_view to_string(PairingKind k) {
  switch (k) {
    case PairingKind::IntraSubject:
      return "intra_subject";
    case PairingKind::InterSubjectOneToOne:
      return "one_to_one";
    case PairingKind::InterDataset:
      return "inter_dataset";
  }
  return "?";
}

bool is_decan(Method m) { return m == Method::DECAN || m == Method::DECANNoContrastive; }

std::vector<std::string> band_names(std::span<const Band> mask) {
  std::vector<std::string> out;
  for (Band b : mask) out.emplace_back(features::to_string(b));
  return out;
}

// Rows of the selected tensors, stacked in key order, with their labels and refs.
struct Stacked {
  Matrix x;
  std::vector<int> labels;
  std::vector<SegmentRef> refs;
};

Stacked stack(const std::vector<const FeatureTensor*>& tensors, std::span<const Band> mask) {
  Stacked s;
  std::vector<Matrix> parts;
  Eigen::Index rows = 0;
  for (const auto* t : tensors) {
    parts.push_back(features::flatten_features(*t, mask));
    rows += parts.back().rows();
    for (int k = 0; k < t->n_segments; ++k) {
      s.labels.push_back(t->segment_labels[static_cast<std::size_t>(k)]);
      s.refs.push_back({t->key, k});
    }
  }
  if (parts.empty()) return s;
  s.x.resize(rows, parts.front().cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    if (p.cols() != s.x.cols()) throw std::invalid_argument("run_experiment: inconsistent feature widths");
    s.x.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return s;
}

bool in_groups(const TrialKey& k, const std::set<GroupKey>& groups) {
  return groups.contains(GroupKey{k.subject_id, k.block_id});
}

std::vector<const FeatureTensor*> select(const std::vector<FeatureTensor>& all, const std::set<GroupKey>& groups) {
  std::vector<const FeatureTensor*> out;
  for (const auto& t : all) {
    if (in_groups(t.key, groups)) out.push_back(&t);
  }
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->key < b->key; });
  return out;
}

std::vector<FeatureTensor> copy_of(const std::vector<const FeatureTensor*>& ptrs) {
  std::vector<FeatureTensor> out;
  out.reserve(ptrs.size());
  for (const auto* p : ptrs) out.push_back(*p);
  return out;
}

struct Prediction {
  std::vector<int> labels;
  Matrix probabilities;
  Matrix latents;
  json info;
  int train_rows{0};
};

Prediction run_baseline_fold(const ExperimentSpec& spec, const Stacked& train, const Stacked& test, std::uint64_t seed) {
  BaselineConfig cfg = spec.baseline;
  cfg.seed = seed;
  cfg.dnn_device = spec.device;
  const BaselineKind kind = spec.method == Method::LR          ? BaselineKind::LR
                            : spec.method == Method::LinearSVM ? BaselineKind::LinearSVM
                                                               : BaselineKind::DNN;
  const auto clf = train_baseline(kind, train.x, train.labels, spec.num_classes, cfg);
  Prediction p;
  p.probabilities = clf->predict_proba(test.x);
  p.labels = model::argmax_rows(p.probabilities);
  if (spec.export_latents) p.latents = clf->latents(test.x);
  p.info = clf->info();
  p.train_rows = static_cast<int>(train.x.rows());
  return p;
}

Prediction run_decan_fold(const ExperimentSpec& spec, const std::vector<const FeatureTensor*>& wet_pool,
                          const std::vector<const FeatureTensor*>& dry_train, const Stacked& test,
                          std::uint64_t seed) {
  const auto wet = copy_of(wet_pool);
  const auto dry = copy_of(dry_train);
  auto batches = build_pairs(wet, dry, spec.pairing, spec.band_mask);

  // Per-device standardisation fitted on the training rows only.
  const Stacked dry_rows = stack(dry_train, spec.band_mask);
  const Standardizer dry_std = Standardizer::fit(dry_rows.x);
  const PairedBatch all = concatenate(batches);
  const Standardizer wet_std = Standardizer::fit(all.wet_features);
  std::vector<PairedBatch> usable;
  for (auto& b : batches) {
    if (b.size() < 2) continue;
    b.wet_features = wet_std.apply(b.wet_features);
    b.dry_features = dry_std.apply(b.dry_features);
    usable.push_back(std::move(b));
  }
  if (usable.empty()) throw std::invalid_argument("run_experiment: no training batch has two or more pairs");

  model::DecanConfig cfg = spec.decan;
  cfg.wet_input_dim = static_cast<int>(all.wet_features.cols());
  cfg.dry_input_dim = static_cast<int>(all.dry_features.cols());
  cfg.num_classes = spec.num_classes;
  cfg.seed = seed;
  if (spec.method == Method::DECANNoContrastive) cfg.use_contrastive = false;
  model::DecanModel m(cfg);
  const auto tr = model::train(m, usable);

  const auto pred = model::predict_dry(m, dry_std.apply(test.x));
  Prediction p;
  p.labels = pred.labels;
  p.probabilities = pred.probabilities;
  if (spec.export_latents) p.latents = pred.latents;
  p.info = {{"epochs_run", tr.epochs_run},
            {"stopped_early", tr.stopped_early},
            {"final_loss", tr.history.empty() ? 0.0 : tr.history.back().loss.total},
            {"pairs", all.size()}};
  p.train_rows = all.size();
  return p;
}

void json_diff_into(const json& a, const json& b, const std::string& prefix, json& out) {
  if (a.is_object() && b.is_object()) {
    std::set<std::string> keys;
    for (auto it = a.begin(); it != a.end(); ++it) keys.insert(it.key());
    for (auto it = b.begin(); it != b.end(); ++it) keys.insert(it.key());
    for (const auto& k : keys) {
      const std::string path = prefix.empty() ? k : prefix + "." + k;
      const json va = a.contains(k) ? a.at(k) : json();
      const json vb = b.contains(k) ? b.at(k) : json();
      json_diff_into(va, vb, path, out);
    }
  } else if (a != b) {
    out[prefix] = json::array({a, b});
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

json to_json(const ExperimentSpec& s) {
  std::string pairing(to_string(s.pairing.kind));
  return {
      {"scheme", std::string(to_string(s.scheme))},
      {"method", std::string(to_string(s.method))},
      {"device", std::string(decan::to_string(s.device))},
      {"band_mask", band_names(s.band_mask)},
      {"pairing", {{"kind", pairing}, {"wet_subject", s.pairing.wet_subject}, {"mixed_subjects", s.pairing.mixed_subjects}}},
      {"decan", model::to_json(s.decan)},
      {"baseline", to_json(s.baseline)},
      {"num_classes", s.num_classes},
      {"seed", s.seed},
      {"export_latents", s.export_latents},
  };
}

std::uint64_t fold_seed(std::uint64_t base, int subject, int block) {
  std::uint64_t z = base ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(subject)) << 32) ^
                    static_cast<std::uint64_t>(static_cast<std::uint32_t>(block));
  // splitmix64 finaliser
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

ExperimentReport run_experiment(const FeatureSet& data, const ExperimentSpec& spec) {
  if (spec.band_mask.empty()) throw std::invalid_argument("run_experiment: empty band mask");
  if (spec.num_classes < 2) throw std::invalid_argument("run_experiment: num_classes must be >= 2");
  const bool decan = is_decan(spec.method);
  const auto& primary = decan ? data.dry : (spec.device == DeviceKind::Wet ? data.wet : data.dry);
  if (primary.empty()) throw std::invalid_argument("run_experiment: no feature tensors for the tested device");
  if (decan && spec.pairing.kind == PairingKind::InterDataset && data.external_wet.empty()) {
    throw std::invalid_argument("run_experiment: inter-dataset pairing needs an external wet pool");
  }

  std::vector<GroupKey> keys;
  for (const auto& t : primary) keys.push_back({t.key.subject_id, t.key.block_id});
  const FoldPlan plan = make_folds(keys, spec.scheme);

  ExperimentReport report;
  report.spec = spec;
  report.confusion.assign(static_cast<std::size_t>(spec.num_classes),
                          std::vector<long>(static_cast<std::size_t>(spec.num_classes), 0));

  for (const auto& fold : plan.folds) {
    if (decan && spec.pairing.kind == PairingKind::InterSubjectOneToOne && fold.subject == spec.pairing.wet_subject &&
        spec.scheme == CvScheme::LOBO) {
      continue;
    }
    const std::set<GroupKey> train_groups(fold.train.begin(), fold.train.end());
    const std::set<GroupKey> test_groups(fold.test.begin(), fold.test.end());
    const auto train_tensors = select(primary, train_groups);
    const auto test_tensors = select(primary, test_groups);
    const Stacked test = stack(test_tensors, spec.band_mask);
    if (test.labels.empty()) continue;
    const std::uint64_t seed = fold_seed(spec.seed, fold.subject, fold.block);

    Prediction pred;
    if (!decan) {
      pred = run_baseline_fold(spec, stack(train_tensors, spec.band_mask), test, seed);
    } else {
      std::vector<const FeatureTensor*> wet_pool;
      switch (spec.pairing.kind) {
        case PairingKind::IntraSubject:
          wet_pool = select(data.wet, train_groups);
          break;
        case PairingKind::InterSubjectOneToOne:
          for (const auto& t : data.wet) {
            if (t.key.subject_id == spec.pairing.wet_subject && !in_groups(t.key, test_groups) &&
                (spec.scheme == CvScheme::LOSO || t.key.block_id != fold.block)) {
              wet_pool.push_back(&t);
            }
          }
          break;
        case PairingKind::InterDataset:
          for (const auto& t : data.external_wet) wet_pool.push_back(&t);
          break;
      }
      std::vector<const FeatureTensor*> dry_train = train_tensors;
      if (spec.pairing.kind == PairingKind::InterSubjectOneToOne) {
        std::erase_if(dry_train, [&](auto* t) { return t->key.subject_id == spec.pairing.wet_subject; });
      }
      if (wet_pool.empty() || dry_train.empty()) {
        throw std::invalid_argument("run_experiment: fold (" + std::to_string(fold.subject) + ", " +
                                    std::to_string(fold.block) + ") has no training pairs");
      }
      pred = run_decan_fold(spec, wet_pool, dry_train, test, seed);
    }

    FoldResult fr;
    fr.subject = fold.subject;
    fr.block = fold.block;
    fr.seed = seed;
    fr.train_rows = pred.train_rows;
    fr.metrics = compute_metrics(pred.labels, pred.probabilities, test.labels, spec.num_classes);
    fr.test_segments = test.refs;
    fr.labels = test.labels;
    fr.predictions = pred.labels;
    fr.latents = std::move(pred.latents);
    fr.info = std::move(pred.info);
    for (int t = 0; t < spec.num_classes; ++t) {
      for (int q = 0; q < spec.num_classes; ++q) {
        report.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(q)] +=
            fr.metrics.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(q)];
      }
    }
    log::info("fold subject " + std::to_string(fold.subject) + " block " + std::to_string(fold.block) +
              ": accuracy " + std::to_string(fr.metrics.accuracy));
    report.folds.push_back(std::move(fr));
  }
  if (report.folds.empty()) throw std::invalid_argument("run_experiment: no folds were evaluated");

  // Average folds within a subject, then summarise across subjects.
  std::map<int, std::vector<const FoldResult*>> by_subject;
  for (const auto& f : report.folds) by_subject[f.subject].push_back(&f);
  std::vector<double> acc, prec, rec, f1, roc, prc;
  for (const auto& [subject, folds] : by_subject) {
    SubjectSummary s;
    s.subject = subject;
    s.folds = static_cast<int>(folds.size());
    for (const auto* f : folds) {
      s.accuracy += f->metrics.accuracy;
      s.precision += f->metrics.precision;
      s.recall += f->metrics.recall;
      s.f1 += f->metrics.f1;
      s.auroc += f->metrics.auroc;
      s.auprc += f->metrics.auprc;
    }
    const double n = s.folds;
    s.accuracy /= n;
    s.precision /= n;
    s.recall /= n;
    s.f1 /= n;
    s.auroc /= n;
    s.auprc /= n;
    acc.push_back(s.accuracy);
    prec.push_back(s.precision);
    rec.push_back(s.recall);
    f1.push_back(s.f1);
    roc.push_back(s.auroc);
    prc.push_back(s.auprc);
    report.subjects.push_back(s);
  }
  report.accuracy = mean_std(acc);
  report.precision = mean_std(prec);
  report.recall = mean_std(rec);
  report.f1 = mean_std(f1);
  report.auroc = mean_std(roc);
  report.auprc = mean_std(prc);
  return report;
}

json to_json(const ExperimentReport& r, bool with_latents) {
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  json folds = json::array();
  for (const auto& f : r.folds) {
    json j = {{"subject", f.subject},  {"block", f.block},   {"seed", f.seed},
              {"train_rows", f.train_rows}, {"metrics", to_json(f.metrics)}, {"info", f.info},
              {"labels", f.labels},    {"predictions", f.predictions}};
    if (with_latents && f.latents.size() > 0) {
      json rows = json::array();
      for (Eigen::Index i = 0; i < f.latents.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < f.latents.cols(); ++c) row.push_back(f.latents(i, c));
        rows.push_back(std::move(row));
      }
      j["latents"] = rows;
    }
    folds.push_back(j);
  }
  json subjects = json::array();
  for (const auto& s : r.subjects) {
    subjects.push_back({{"subject", s.subject},
                        {"folds", s.folds},
                        {"accuracy", s.accuracy},
                        {"precision", s.precision},
                        {"recall", s.recall},
                        {"f1", s.f1},
                        {"auroc", s.auroc},
                        {"auprc", s.auprc}});
  }
  return {
      {"spec", to_json(r.spec)},
      {"summary",
       {{"accuracy", ms(r.accuracy)},
        {"precision", ms(r.precision)},
        {"recall", ms(r.recall)},
        {"f1", ms(r.f1)},
        {"auroc", ms(r.auroc)},
        {"auprc", ms(r.auprc)}}},
      {"subjects", subjects},
      {"confusion", r.confusion},
      {"folds", folds},
  };
}

std::string subject_accuracy_csv(const ExperimentReport& r) {
  std::string out = "subject,folds,accuracy,precision,recall,f1,auroc,auprc\n";
  for (const auto& s : r.subjects) {
    out += std::to_string(s.subject) + "," + std::to_string(s.folds) + "," + fmt(s.accuracy) + "," +
           fmt(s.precision) + "," + fmt(s.recall) + "," + fmt(s.f1) + "," + fmt(s.auroc) + "," + fmt(s.auprc) + "\n";
  }
  return out;
}

std::string confusion_csv(const ExperimentReport& r) {
  std::string out = "true\\pred";
  for (std::size_t c = 0; c < r.confusion.size(); ++c) out += "," + std::to_string(c);
  out += "\n";
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    out += std::to_string(t);
    for (long v : r.confusion[t]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

std::string latents_csv(const ExperimentReport& r) {
  std::string out;
  bool header = false;
  for (const auto& f : r.folds) {
    if (f.latents.size() == 0) continue;
    if (!header) {
      out = "subject,block,trial,segment,label,prediction";
      for (Eigen::Index c = 0; c < f.latents.cols(); ++c) out += ",z" + std::to_string(c);
      out += "\n";
      header = true;
    }
    for (Eigen::Index i = 0; i < f.latents.rows(); ++i) {
      const auto& ref = f.test_segments[static_cast<std::size_t>(i)];
      out += std::to_string(ref.key.subject_id) + "," + std::to_string(ref.key.block_id) + "," +
             std::to_string(ref.key.trial_id) + "," + std::to_string(ref.segment) + "," +
             std::to_string(f.labels[static_cast<std::size_t>(i)]) + "," +
             std::to_string(f.predictions[static_cast<std::size_t>(i)]);
      for (Eigen::Index c = 0; c < f.latents.cols(); ++c) out += "," + fmt(f.latents(i, c));
      out += "\n";
    }
  }
  return out;
}

json json_diff(const json& a, const json& b) {
  json out = json::object();
  json_diff_into(a, b, "", out);
  return out;
}

AblationReport run_ablation(const FeatureSet& data, ExperimentSpec spec) {
  if (!is_decan(spec.method)) throw std::invalid_argument("run_ablation: method must be a DECAN variant");
  AblationReport r;
  spec.method = Method::DECAN;
  spec.decan.use_contrastive = true;
  r.with_contrastive = run_experiment(data, spec);
  ExperimentSpec off = spec;
  off.decan.use_contrastive = false;
  r.without_contrastive = run_experiment(data, off);
  r.config_diff = json_diff(to_json(spec), to_json(off));
  return r;
}

json to_json(const AblationReport& r) {
  return {{"with_contrastive", to_json(r.with_contrastive)},
          {"without_contrastive", to_json(r.without_contrastive)},
          {"config_diff", r.config_diff}};
}

std::vector<BandResult> run_band_sweep(const FeatureSet& data, const ExperimentSpec& spec) {
  std::vector<BandResult> out;
  for (Band b : spec.band_mask) {
    ExperimentSpec s = spec;
    s.band_mask = {b};
    out.push_back({s.band_mask, run_experiment(data, s)});
  }
  if (spec.band_mask.size() > 1) out.push_back({spec.band_mask, run_experiment(data, spec)});
  return out;
}

std::string band_accuracy_csv(const std::vector<BandResult>& results) {
  std::string out = "bands,accuracy_mean,accuracy_std,f1_mean\n";
  for (const auto& r : results) {
    std::string name;
    for (std::size_t i = 0; i < r.mask.size(); ++i) {
      if (i) name += "+";
      name += features::to_string(r.mask[i]);
    }
    out += name + "," + fmt(r.report.accuracy.mean) + "," + fmt(r.report.accuracy.std) + "," +
           fmt(r.report.f1.mean) + "\n";
  }
  return out;
}

}  // namespace decan::eval
