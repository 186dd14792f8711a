#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace decan::eval {

enum class CvScheme { LOBO, LOSO };

std::string_view to_string(CvScheme scheme);
CvScheme scheme_from_string(std::string_view name);

struct GroupKey {
  int subject{0};
  int block{0};

  auto operator<=>(const GroupKey&) const = default;
};

struct Fold {
  int subject{0};  // LOBO: subject the fold belongs to; LOSO: held-out subject
  int block{0};    // LOBO: held-out block; LOSO: 0
  std::vector<GroupKey> train;
  std::vector<GroupKey> test;
};

struct FoldPlan {
  CvScheme scheme{CvScheme::LOBO};
  std::vector<Fold> folds;  // sorted by (subject, block)
};

// LOBO: one fold per (subject, block), training on the subject's other blocks.
// LOSO: one fold per subject, training on every other subject.
// Throws if a subject has fewer than two blocks (LOBO) or there are fewer than
// two subjects (LOSO).
FoldPlan make_folds(std::span<const GroupKey> keys, CvScheme scheme);

}  // namespace decan::eval
