#include "decan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "decan/binary_io.hpp"

namespace decan {

namespace fs = std::filesystem;
using nlohmann::json;

DatasetManifest read_manifest(const fs::path& manifest_path) {
  json j;
  try {
    j = json::parse(read_file_bytes(manifest_path));
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest parse error in " + manifest_path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.dataset_name = j.value("dataset_name", std::string{});
  if (j.contains("channel_names")) m.channel_names = j.at("channel_names").get<std::vector<std::string>>();
  for (const auto& js : j.at("subjects")) {
    ManifestSubject s;
    s.id = js.at("id").get<int>();
    for (const auto& jt : js.at("trials")) {
      ManifestTrial t;
      t.file = jt.at("file").get<std::string>();
      t.device = device_from_string(jt.at("device").get<std::string>());
      t.block = jt.at("block").get<int>();
      t.trial = jt.at("trial").get<int>();
      t.label = emotion_from_string(jt.at("label").get<std::string>());
      t.sample_rate_hz = jt.at("sample_rate_hz").get<double>();
      t.channel_count = jt.at("channel_count").get<int>();
      t.sample_count = jt.value("sample_count", 0LL);
      s.trials.push_back(std::move(t));
    }
    m.subjects.push_back(std::move(s));
  }
  return m;
}

std::vector<RawTrial> load_dataset(const fs::path& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  std::vector<RawTrial> out;
  std::set<TrialKey> seen;
  for (const auto& s : m.subjects) {
    for (const auto& t : s.trials) {
      RawTrial trial;
      trial.key = TrialKey{s.id, t.device, t.block, t.trial};
      if (!seen.insert(trial.key).second) {
        throw std::runtime_error("duplicate trial key: " + to_string(trial.key));
      }
      const fs::path path = base / t.file;
      if (!fs::exists(path)) throw std::runtime_error("missing file: " + path.string());
      if (t.channel_count < 1) throw std::runtime_error("channel_count must be >= 1 for " + path.string());
      const std::string bytes = read_file_bytes(path);
      const auto channels = static_cast<std::size_t>(t.channel_count);
      const std::size_t per_channel =
          t.sample_count > 0 ? static_cast<std::size_t>(t.sample_count) : bytes.size() / (4u * channels);
      if (bytes.size() != per_channel * 4u * channels || per_channel == 0) {
        throw std::runtime_error("size mismatch: " + path.string() + " has " + std::to_string(bytes.size()) +
                                 " bytes, expected " + std::to_string(per_channel * 4u * channels) + " (" +
                                 std::to_string(channels) + " ch x " + std::to_string(per_channel) +
                                 " samples x 4)");
      }
      trial.label = t.label;
      trial.label_code = static_cast<int>(t.label);
      trial.sample_rate_hz = t.sample_rate_hz;
      trial.data.resize(t.channel_count, static_cast<Eigen::Index>(per_channel));
      read_f32_le(std::span<const char>(bytes.data(), bytes.size()),
                  std::span<double>(trial.data.data(), static_cast<std::size_t>(trial.data.size())));
      if (!trial.data.allFinite()) throw std::runtime_error("non-finite sample in " + path.string());
      validate(trial);
      out.push_back(std::move(trial));
    }
  }
  std::sort(out.begin(), out.end(), [](const RawTrial& a, const RawTrial& b) { return a.key < b.key; });
  return out;
}

std::string trial_file_name(const TrialKey& key) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "s%03d_%s_b%d_t%02d.f32", key.subject_id,
                key.device == DeviceKind::Wet ? "wet" : "dry", key.block_id, key.trial_id);
  return buf;
}

fs::path save_dataset(const std::vector<RawTrial>& trials, const fs::path& dir, const std::string& dataset_name) {
  fs::create_directories(dir);
  std::vector<const RawTrial*> sorted;
  sorted.reserve(trials.size());
  for (const auto& t : trials) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->key < b->key; });

  json subjects = json::array();
  int current = -1;
  std::set<TrialKey> seen;
  for (const RawTrial* t : sorted) {
    if (!seen.insert(t->key).second) throw std::runtime_error("duplicate trial key: " + to_string(t->key));
    const std::string name = trial_file_name(t->key);
    std::string bytes;
    append_f32_le(bytes, std::span<const double>(t->data.data(), static_cast<std::size_t>(t->data.size())));
    write_file_bytes(dir / name, bytes);
    if (t->key.subject_id != current) {
      subjects.push_back({{"id", t->key.subject_id}, {"trials", json::array()}});
      current = t->key.subject_id;
    }
    subjects.back()["trials"].push_back({{"file", name},
                                         {"device", std::string(to_string(t->key.device))},
                                         {"block", t->key.block_id},
                                         {"trial", t->key.trial_id},
                                         {"label", std::string(to_string(t->label))},
                                         {"sample_rate_hz", t->sample_rate_hz},
                                         {"channel_count", t->channels()},
                                         {"sample_count", static_cast<long long>(t->samples())}});
  }
  json j = {{"dataset_name", dataset_name}, {"subjects", subjects}};
  const fs::path manifest = dir / "manifest.json";
  write_file_bytes(manifest, j.dump(2) + "\n");
  return manifest;
}

std::vector<Segment> segment_trial(const RawTrial& trial, double segment_seconds) {
  if (!(segment_seconds > 0.0)) throw std::invalid_argument("segment length must be positive");
  const auto window = static_cast<Eigen::Index>(std::llround(segment_seconds * trial.sample_rate_hz));
  if (window < 1 || trial.samples() < window) {
    throw std::invalid_argument("trial shorter than one segment: " + to_string(trial.key));
  }
  const Eigen::Index count = trial.samples() / window;
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) {
    Segment s;
    s.key = trial.key;
    s.label = trial.label;
    s.label_code = trial.label_code;
    s.segment_index = static_cast<int>(i);
    s.sample_rate_hz = trial.sample_rate_hz;
    s.data = trial.data.middleCols(i * window, window);
    out.push_back(std::move(s));
  }
  return out;
}

RelabelResult map_labels_interdataset(const std::vector<RawTrial>& trials, const LabelSet& shared) {
  RelabelResult r;
  for (const auto& t : trials) {
    if (!shared.contains(t.label)) continue;
    RawTrial copy = t;
    copy.label_code = shared.code(t.label);
    ++r.class_counts[t.label];
    r.trials.push_back(std::move(copy));
  }
  if (r.trials.empty()) throw std::invalid_argument("no trials left after restricting to the shared label set");
  return r;
}

}  // namespace decan
