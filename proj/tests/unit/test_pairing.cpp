#include <doctest.h>

#include "decan/pairing.hpp"
#include "helpers.hpp"

using namespace decan;
using features::Band;
using features::FeatureTensor;

namespace {

const std::vector<Band> kAll = {Band::Delta, Band::Theta, Band::Alpha, Band::Beta, Band::Gamma};

// Values encode (subject, trial, segment) so pairs can be traced back.
FeatureTensor tensor(int subject, DeviceKind device, int block, int trial, int label, int segments, int channels) {
  FeatureTensor t;
  t.key = {subject, device, block, trial};
  t.label = static_cast<Emotion>(label);
  t.bands = kAll;
  t.n_segments = segments;
  t.n_channels = channels;
  t.segment_labels.assign(static_cast<std::size_t>(segments), label);
  t.values.resize(static_cast<std::size_t>(segments * channels * 5));
  for (int s = 0; s < segments; ++s) {
    for (int c = 0; c < channels; ++c) {
      for (int b = 0; b < 5; ++b) t.at(s, c, b) = subject * 10000 + block * 1000 + trial * 100 + s;
    }
  }
  return t;
}

}  // namespace

TEST_CASE("intra-subject pairing pairs every dry segment with its wet twin") {
  std::vector<FeatureTensor> wet, dry;
  int dry_segments = 0;
  for (int subject = 1; subject <= 2; ++subject) {
    for (int block = 1; block <= 5; ++block) {
      for (int trial = 1; trial <= 5; ++trial) {
        wet.push_back(tensor(subject, DeviceKind::Wet, block, trial, trial - 1, 4, 6));
        dry.push_back(tensor(subject, DeviceKind::Dry, block, trial, trial - 1, 4, 3));
        dry_segments += 4;
      }
    }
  }
  const auto batches = build_pairs(wet, dry, PairingStrategy::intra_subject(), kAll);
  REQUIRE(batches.size() == 2);
  int pairs = 0;
  for (const auto& b : batches) {
    pairs += b.size();
    CHECK(b.wet_features.cols() == 30);
    CHECK(b.dry_features.cols() == 15);
    for (int i = 0; i < b.size(); ++i) {
      const auto& o = b.origins[static_cast<std::size_t>(i)];
      CHECK(o.wet_key.subject_id == o.dry_key.subject_id);
      CHECK(o.wet_key.block_id == o.dry_key.block_id);
      CHECK(o.wet_key.trial_id == o.dry_key.trial_id);
      CHECK(o.wet_segment == o.dry_segment);
      CHECK(b.wet_features(i, 0) == b.dry_features(i, 0));
    }
  }
  CHECK(pairs == dry_segments);

  const auto mixed = build_pairs(wet, dry, PairingStrategy::intra_subject(true), kAll);
  REQUIRE(mixed.size() == 1);
  CHECK(mixed[0].size() == dry_segments);

  const std::vector<Band> delta = {Band::Delta};
  CHECK(build_pairs(wet, dry, PairingStrategy::intra_subject(), delta)[0].dry_features.cols() == 3);
}

TEST_CASE("one-to-one pairing matches by label and rank and drops the surplus") {
  std::vector<FeatureTensor> wet = {tensor(1, DeviceKind::Wet, 1, 1, 0, 100, 4), tensor(1, DeviceKind::Wet, 2, 1, 0, 50, 4)};
  std::vector<FeatureTensor> dry = {tensor(2, DeviceKind::Dry, 1, 1, 0, 90, 2), tensor(2, DeviceKind::Dry, 2, 1, 0, 50, 2)};
  const auto batches = build_pairs(wet, dry, PairingStrategy::one_to_one(1), kAll);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].size() == 140);
  for (int i = 0; i < 140; ++i) CHECK(batches[0].labels[static_cast<std::size_t>(i)] == 0);
  // Rank order is chronological on both sides.
  const auto& first = batches[0].origins.front();
  CHECK(first.wet_key.block_id == 1);
  CHECK(first.wet_segment == 0);
  CHECK(first.dry_segment == 0);
  const auto& o = batches[0].origins[95];
  CHECK(o.wet_segment == 95);
  CHECK(o.dry_key.block_id == 2);
  CHECK(o.dry_segment == 5);
}

TEST_CASE("relaxed pairings never pair different labels") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> label(0, 4), segs(1, 12);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<FeatureTensor> wet, dry;
    for (int trial = 1; trial <= 8; ++trial) {
      wet.push_back(tensor(1, DeviceKind::Wet, 1, trial, label(rng), segs(rng), 4));
      for (int subject = 2; subject <= 3; ++subject) dry.push_back(tensor(subject, DeviceKind::Dry, 1, trial, label(rng), segs(rng), 2));
    }
    for (auto strategy : {PairingStrategy::one_to_one(1), PairingStrategy::inter_dataset()}) {
      std::vector<PairedBatch> batches;
      try {
        batches = build_pairs(wet, dry, strategy, kAll);
      } catch (const std::invalid_argument&) {
        continue;  // no shared labels in this draw
      }
      for (const auto& b : batches) {
        for (int i = 0; i < b.size(); ++i) {
          const auto& o = b.origins[static_cast<std::size_t>(i)];
          const auto wl = static_cast<int>(std::find_if(wet.begin(), wet.end(), [&](const auto& t) { return t.key == o.wet_key; })->label);
          const auto dl = static_cast<int>(std::find_if(dry.begin(), dry.end(), [&](const auto& t) { return t.key == o.dry_key; })->label);
          CHECK(wl == dl);
          CHECK(b.labels[static_cast<std::size_t>(i)] == dl);
        }
      }
    }
  }
}

TEST_CASE("pairing errors") {
  std::vector<FeatureTensor> wet = {tensor(1, DeviceKind::Wet, 1, 1, 0, 3, 4)};
  std::vector<FeatureTensor> dry = {tensor(2, DeviceKind::Dry, 1, 1, 1, 3, 2)};
  CHECK_THROWS_AS(build_pairs(wet, dry, PairingStrategy::one_to_one(1), kAll), std::invalid_argument);
  CHECK_THROWS_AS(build_pairs(wet, dry, PairingStrategy::one_to_one(5), kAll), std::invalid_argument);
  CHECK_THROWS_AS(build_pairs(wet, dry, PairingStrategy::intra_subject(), kAll), std::invalid_argument);
}

TEST_CASE("concatenation stacks rows in order") {
  std::vector<FeatureTensor> wet, dry;
  for (int subject = 1; subject <= 3; ++subject) {
    wet.push_back(tensor(subject, DeviceKind::Wet, 1, 1, 2, 2, 4));
    dry.push_back(tensor(subject, DeviceKind::Dry, 1, 1, 2, 2, 2));
  }
  const auto batches = build_pairs(wet, dry, PairingStrategy::intra_subject(), kAll);
  const auto all = concatenate(batches);
  CHECK(all.size() == 6);
  CHECK(all.dry_features(4, 0) == batches[2].dry_features(0, 0));
  CHECK(all.origins[5].dry_key.subject_id == 3);
}
