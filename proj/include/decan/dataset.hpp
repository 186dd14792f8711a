#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "decan/types.hpp"

namespace decan {

// Canonical on-disk layout: a JSON manifest next to one raw file per trial.
// Payloads are little-endian float32, channel-major (all of channel 0, then
// channel 1, ...). File paths in the manifest are relative to the manifest.
struct ManifestTrial {
  std::string file;
  DeviceKind device{DeviceKind::Wet};
  int block{1};
  int trial{1};
  Emotion label{Emotion::Neutrality};
  double sample_rate_hz{0.0};
  int channel_count{0};
  // 0 means "derive from the file size".
  long long sample_count{0};
};

struct ManifestSubject {
  int id{0};
  std::vector<ManifestTrial> trials;
};

struct DatasetManifest {
  std::string dataset_name;
  std::vector<ManifestSubject> subjects;
  std::vector<std::string> channel_names;
};

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);

// Returns trials sorted by (subject, device, block, trial). Errors name the
// offending file or key: "missing file: <path>", "size mismatch: <path> ...",
// "duplicate trial key: <key>", "non-finite sample in <path>".
std::vector<RawTrial> load_dataset(const std::filesystem::path& manifest_path);

// Writes <dir>/manifest.json and one .f32 file per trial. Returns the manifest
// path. File names are derived from the trial key so output is deterministic.
std::filesystem::path save_dataset(const std::vector<RawTrial>& trials,
                                   const std::filesystem::path& dir,
                                   const std::string& dataset_name);

std::string trial_file_name(const TrialKey& key);

// Splits a trial into floor(duration / segment_seconds) non-overlapping windows
// of round(segment_seconds * rate) samples. The trailing remainder is dropped.
std::vector<Segment> segment_trial(const RawTrial& trial, double segment_seconds);

struct RelabelResult {
  std::vector<RawTrial> trials;
  std::map<Emotion, int> class_counts;
};

// Keeps trials whose label belongs to `shared` and rewrites label_code to the
// dense code in `shared`. Throws when nothing survives.
RelabelResult map_labels_interdataset(const std::vector<RawTrial>& trials, const LabelSet& shared);

}  // namespace decan
