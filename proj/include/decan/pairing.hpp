#pragma once

#include <span>
#include <vector>

#include "decan/features.hpp"
#include "decan/types.hpp"

namespace decan {

struct PairOrigin {
  TrialKey wet_key;
  int wet_segment{0};
  TrialKey dry_key;
  int dry_segment{0};
};

// Row i of wet_features and row i of dry_features are a positive pair with
// label labels[i]; every other row in the batch is a negative for it.
struct PairedBatch {
  Matrix wet_features;
  Matrix dry_features;
  std::vector<int> labels;
  std::vector<PairOrigin> origins;

  int size() const { return static_cast<int>(labels.size()); }
};

enum class PairingKind { IntraSubject, InterSubjectOneToOne, InterDataset };

struct PairingStrategy {
  PairingKind kind{PairingKind::IntraSubject};
  // InterSubjectOneToOne: the subject whose wet recordings are paired with
  // every other subject's dry recordings.
  int wet_subject{0};
  // IntraSubject only: one batch for all subjects instead of one per subject.
  bool mixed_subjects{false};

  static PairingStrategy intra_subject(bool mixed = false) { return {PairingKind::IntraSubject, 0, mixed}; }
  static PairingStrategy one_to_one(int wet_subject) { return {PairingKind::InterSubjectOneToOne, wet_subject, false}; }
  static PairingStrategy inter_dataset() { return {PairingKind::InterDataset, 0, false}; }
};

// IntraSubject pairs segments with equal (subject, block, trial, segment).
// The relaxed strategies pair by (label, rank of the segment within that
// label's chronological order) and drop the surplus of the larger side;
// InterDataset uses every wet tensor as the pool for each dry subject.
// Throws when no labels are shared or no pair can be formed.
std::vector<PairedBatch> build_pairs(std::span<const features::FeatureTensor> wet,
                                     std::span<const features::FeatureTensor> dry, const PairingStrategy& strategy,
                                     std::span<const features::Band> band_mask);

PairedBatch concatenate(std::span<const PairedBatch> batches);

}  // namespace decan
