#include "decan/pairing.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace decan {

namespace {

using features::FeatureTensor;

struct SegmentRef {
  const FeatureTensor* tensor;
  int segment;
  int label;
};

// Chronological segment list per label code.
std::map<int, std::vector<SegmentRef>> by_label(const std::vector<const FeatureTensor*>& tensors) {
  std::vector<const FeatureTensor*> sorted = tensors;
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->key < b->key; });
  std::map<int, std::vector<SegmentRef>> out;
  for (const auto* t : sorted) {
    for (int s = 0; s < t->n_segments; ++s) {
      const int label = t->segment_labels[static_cast<std::size_t>(s)];
      out[label].push_back({t, s, label});
    }
  }
  return out;
}

PairedBatch assemble(const std::vector<std::pair<SegmentRef, SegmentRef>>& pairs, std::span<const features::Band> mask) {
  PairedBatch b;
  if (pairs.empty()) return b;
  const auto n = static_cast<Eigen::Index>(pairs.size());
  std::map<const FeatureTensor*, Matrix> cache;
  auto flat = [&](const FeatureTensor* t) -> const Matrix& {
    auto it = cache.find(t);
    if (it == cache.end()) it = cache.emplace(t, features::flatten_features(*t, mask)).first;
    return it->second;
  };
  b.wet_features.resize(n, flat(pairs[0].first.tensor).cols());
  b.dry_features.resize(n, flat(pairs[0].second.tensor).cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& [w, d] = pairs[static_cast<std::size_t>(i)];
    const Matrix& fw = flat(w.tensor);
    const Matrix& fd = flat(d.tensor);
    if (fw.cols() != b.wet_features.cols() || fd.cols() != b.dry_features.cols()) {
      throw std::invalid_argument("build_pairs: inconsistent feature widths across trials");
    }
    b.wet_features.row(i) = fw.row(w.segment);
    b.dry_features.row(i) = fd.row(d.segment);
    b.labels.push_back(w.label);
    b.origins.push_back({w.tensor->key, w.segment, d.tensor->key, d.segment});
  }
  return b;
}

std::vector<std::pair<SegmentRef, SegmentRef>> rank_match(const std::vector<const FeatureTensor*>& wet,
                                                           const std::vector<const FeatureTensor*>& dry) {
  const auto w = by_label(wet);
  const auto d = by_label(dry);
  std::vector<std::pair<SegmentRef, SegmentRef>> pairs;
  bool shared = false;
  for (const auto& [label, dry_list] : d) {
    auto it = w.find(label);
    if (it == w.end()) continue;
    shared = true;
    const std::size_t n = std::min(it->second.size(), dry_list.size());
    for (std::size_t k = 0; k < n; ++k) pairs.emplace_back(it->second[k], dry_list[k]);
  }
  if (!shared) throw std::invalid_argument("build_pairs: wet and dry sets share no labels");
  return pairs;
}

}  // namespace

std::vector<PairedBatch> build_pairs(std::span<const FeatureTensor> wet, std::span<const FeatureTensor> dry,
                                     const PairingStrategy& strategy, std::span<const features::Band> band_mask) {
  std::vector<PairedBatch> out;
  std::map<int, std::vector<const FeatureTensor*>> dry_by_subject;
  for (const auto& t : dry) dry_by_subject[t.key.subject_id].push_back(&t);

  switch (strategy.kind) {
    case PairingKind::IntraSubject: {
      std::map<TrialKey, const FeatureTensor*> wet_index;
      for (const auto& t : wet) {
        TrialKey k = t.key;
        k.device = DeviceKind::Dry;
        wet_index[k] = &t;
      }
      std::vector<std::pair<SegmentRef, SegmentRef>> all;
      for (const auto& [subject, tensors] : dry_by_subject) {
        auto sorted = tensors;
        std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->key < b->key; });
        std::vector<std::pair<SegmentRef, SegmentRef>> pairs;
        for (const auto* d : sorted) {
          auto it = wet_index.find(d->key);
          if (it == wet_index.end()) continue;
          const auto* w = it->second;
          const int n = std::min(w->n_segments, d->n_segments);
          for (int s = 0; s < n; ++s) {
            const int wl = w->segment_labels[static_cast<std::size_t>(s)];
            const int dl = d->segment_labels[static_cast<std::size_t>(s)];
            if (wl != dl) continue;
            pairs.push_back({{w, s, wl}, {d, s, dl}});
          }
        }
        if (strategy.mixed_subjects) {
          all.insert(all.end(), pairs.begin(), pairs.end());
        } else if (!pairs.empty()) {
          out.push_back(assemble(pairs, band_mask));
        }
      }
      if (strategy.mixed_subjects && !all.empty()) out.push_back(assemble(all, band_mask));
      break;
    }
    case PairingKind::InterSubjectOneToOne:
    case PairingKind::InterDataset: {
      std::vector<const FeatureTensor*> pool;
      for (const auto& t : wet) {
        if (strategy.kind == PairingKind::InterDataset || t.key.subject_id == strategy.wet_subject) pool.push_back(&t);
      }
      if (pool.empty()) throw std::invalid_argument("build_pairs: no wet recordings for the pairing source");
      for (const auto& [subject, tensors] : dry_by_subject) {
        if (strategy.kind == PairingKind::InterSubjectOneToOne && subject == strategy.wet_subject) continue;
        auto pairs = rank_match(pool, tensors);
        if (!pairs.empty()) out.push_back(assemble(pairs, band_mask));
      }
      break;
    }
  }
  if (out.empty()) throw std::invalid_argument("build_pairs: empty pairing");
  return out;
}

PairedBatch concatenate(std::span<const PairedBatch> batches) {
  PairedBatch out;
  Eigen::Index rows = 0;
  for (const auto& b : batches) rows += b.size();
  if (rows == 0) return out;
  out.wet_features.resize(rows, batches.front().wet_features.cols());
  out.dry_features.resize(rows, batches.front().dry_features.cols());
  Eigen::Index r = 0;
  for (const auto& b : batches) {
    if (b.size() == 0) continue;
    out.wet_features.middleRows(r, b.size()) = b.wet_features;
    out.dry_features.middleRows(r, b.size()) = b.dry_features;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.origins.insert(out.origins.end(), b.origins.begin(), b.origins.end());
    r += b.size();
  }
  return out;
}

}  // namespace decan
