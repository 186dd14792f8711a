#include "decan/types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace decan {

std::string_view to_string(DeviceKind device) {
  return device == DeviceKind::Wet ? "wet" : "dry";
}

DeviceKind device_from_string(std::string_view name) {
  if (name == "wet" || name == "Wet") return DeviceKind::Wet;
  if (name == "dry" || name == "Dry") return DeviceKind::Dry;
  throw std::invalid_argument("unknown device kind: " + std::string(name));
}

std::string_view to_string(Emotion emotion) {
  switch (emotion) {
    case Emotion::Anger: return "Anger";
    case Emotion::Fear: return "Fear";
    case Emotion::Sadness: return "Sadness";
    case Emotion::Happiness: return "Happiness";
    case Emotion::Neutrality: return "Neutrality";
  }
  return "?";
}

Emotion emotion_from_string(std::string_view name) {
  if (name == "Anger") return Emotion::Anger;
  if (name == "Fear") return Emotion::Fear;
  if (name == "Sadness" || name == "Sad") return Emotion::Sadness;
  if (name == "Happiness" || name == "Happy") return Emotion::Happiness;
  if (name == "Neutrality" || name == "Neutral") return Emotion::Neutrality;
  throw std::invalid_argument("unknown emotion label: " + std::string(name));
}

LabelSet::LabelSet(std::vector<Emotion> members) : members_(std::move(members)) {
  if (members_.empty()) throw std::invalid_argument("label set is empty");
  auto sorted = members_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("label set has duplicate members");
  }
}

LabelSet LabelSet::standard() {
  return LabelSet({Emotion::Anger, Emotion::Fear, Emotion::Sadness, Emotion::Happiness,
                   Emotion::Neutrality});
}

LabelSet LabelSet::shared_interdataset() {
  return LabelSet({Emotion::Happiness, Emotion::Sadness, Emotion::Fear, Emotion::Neutrality});
}

LabelSet LabelSet::from_names(const std::vector<std::string>& names) {
  std::vector<Emotion> members;
  members.reserve(names.size());
  for (const auto& n : names) members.push_back(emotion_from_string(n));
  return LabelSet(std::move(members));
}

bool LabelSet::contains(Emotion e) const {
  return std::find(members_.begin(), members_.end(), e) != members_.end();
}

int LabelSet::code(Emotion e) const {
  auto it = std::find(members_.begin(), members_.end(), e);
  if (it == members_.end()) {
    throw std::invalid_argument("label not in set: " + std::string(to_string(e)));
  }
  return static_cast<int>(it - members_.begin());
}

std::string to_string(const TrialKey& key) {
  return "subject " + std::to_string(key.subject_id) + "/" + std::string(to_string(key.device)) +
         "/block " + std::to_string(key.block_id) + "/trial " + std::to_string(key.trial_id);
}

void validate(const RawTrial& trial) {
  const std::string where = to_string(trial.key);
  if (trial.data.rows() < 1) throw std::invalid_argument(where + ": trial has no channels");
  if (!(trial.sample_rate_hz > 0.0) || !std::isfinite(trial.sample_rate_hz)) {
    throw std::invalid_argument(where + ": sample rate must be positive");
  }
  if (static_cast<double>(trial.data.cols()) < trial.sample_rate_hz) {
    throw std::invalid_argument(where + ": trial shorter than one second");
  }
  if (!trial.data.allFinite()) throw std::invalid_argument(where + ": non-finite sample");
}

}  // namespace decan
