#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

namespace decan {

// Row-major channels x samples; rows are contiguous so a channel is a flat span.
using SignalMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class DeviceKind { Wet, Dry };

std::string_view to_string(DeviceKind device);
DeviceKind device_from_string(std::string_view name);

// Five stimulus emotions. Integer codes are the class indices used by the models.
enum class Emotion : int { Anger = 0, Fear = 1, Sadness = 2, Happiness = 3, Neutrality = 4 };

inline constexpr int kNumEmotions = 5;

std::string_view to_string(Emotion emotion);

// Accepts canonical names plus the reduced-set aliases (Happy, Sad, Neutral).
Emotion emotion_from_string(std::string_view name);

// A label set plus the dense class codes it induces. The standard set has five
// classes; the inter-dataset set keeps the four emotions shared with external
// corpora, re-coded 0..3 in the order given.
class LabelSet {
 public:
  static LabelSet standard();
  static LabelSet shared_interdataset();  // {Happy, Sad, Fear, Neutral}
  static LabelSet from_names(const std::vector<std::string>& names);

  explicit LabelSet(std::vector<Emotion> members);

  int size() const { return static_cast<int>(members_.size()); }
  bool contains(Emotion e) const;
  int code(Emotion e) const;  // throws when absent
  Emotion emotion(int code) const { return members_.at(static_cast<std::size_t>(code)); }
  const std::vector<Emotion>& members() const { return members_; }

 private:
  std::vector<Emotion> members_;
};

struct TrialKey {
  int subject_id{0};
  DeviceKind device{DeviceKind::Wet};
  int block_id{1};
  int trial_id{1};

  auto tie() const { return std::tie(subject_id, device, block_id, trial_id); }
  bool operator==(const TrialKey& o) const { return tie() == o.tie(); }
  bool operator<(const TrialKey& o) const { return tie() < o.tie(); }
};

std::string to_string(const TrialKey& key);

struct RawTrial {
  TrialKey key;
  Emotion label{Emotion::Neutrality};
  // Class code under the active label set; equals static_cast<int>(label) for
  // the standard set.
  int label_code{0};
  double sample_rate_hz{0.0};
  SignalMatrix data;  // channels x samples

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index samples() const { return data.cols(); }
  double duration_seconds() const { return static_cast<double>(data.cols()) / sample_rate_hz; }
};

// Throws std::invalid_argument on an empty matrix, a non-positive rate, fewer
// than one second of samples, or non-finite values.
void validate(const RawTrial& trial);

struct Segment {
  TrialKey key;
  Emotion label{Emotion::Neutrality};
  int label_code{0};
  int segment_index{0};
  double sample_rate_hz{0.0};
  SignalMatrix data;
};

}  // namespace decan
