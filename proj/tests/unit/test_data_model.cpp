#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <numbers>
#include <json.hpp>

#include "decan/dataset.hpp"
#include "decan/synthetic.hpp"
#include "helpers.hpp"

using namespace decan;
using test_util::TempDir;

namespace {

void write_f32(const std::filesystem::path& p, std::size_t count, float value = 0.25f) {
  std::string bytes(count * 4, '\0');
  for (std::size_t i = 0; i < count; ++i) std::memcpy(bytes.data() + 4 * i, &value, 4);
  test_util::write_bytes(p, bytes);
}

nlohmann::json one_trial_manifest(long long samples = 600) {
  nlohmann::json trial = {{"file", "t.f32"}, {"device", "dry"}, {"block", 1},           {"trial", 1},
                          {"label", "Fear"}, {"sample_rate_hz", 300.0}, {"channel_count", 2}};
  if (samples > 0) trial["sample_count"] = samples;
  return {{"dataset_name", "toy"}, {"subjects", {{{"id", 3}, {"trials", {trial}}}}}};
}

void write_manifest(const std::filesystem::path& dir, const nlohmann::json& j) {
  test_util::write_bytes(dir / "manifest.json", j.dump());
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("manifest with one trial loads to the declared shape") {
  TempDir dir;
  write_manifest(dir.path(), one_trial_manifest());
  write_f32(dir.path() / "t.f32", 2 * 600);
  auto trials = load_dataset(dir.path() / "manifest.json");
  REQUIRE(trials.size() == 1);
  CHECK(trials[0].data.rows() == 2);
  CHECK(trials[0].data.cols() == 600);
  CHECK(trials[0].key.subject_id == 3);
  CHECK(trials[0].key.device == DeviceKind::Dry);
  CHECK(trials[0].label == Emotion::Fear);
  CHECK(trials[0].data(1, 599) == doctest::Approx(0.25));
}

TEST_CASE("missing trial file is reported by path") {
  TempDir dir;
  write_manifest(dir.path(), one_trial_manifest());
  const auto msg = error_of([&] { load_dataset(dir.path() / "manifest.json"); });
  CHECK(msg.find("missing file: ") == 0);
  CHECK(msg.find("t.f32") != std::string::npos);
}

TEST_CASE("payload byte count must match channels x samples x 4") {
  TempDir dir;
  write_manifest(dir.path(), one_trial_manifest());
  write_f32(dir.path() / "t.f32", 1200);
  CHECK(test_util::read_bytes(dir.path() / "t.f32").size() == 4800);
  CHECK_NOTHROW(load_dataset(dir.path() / "manifest.json"));

  test_util::write_bytes(dir.path() / "t.f32", test_util::read_bytes(dir.path() / "t.f32") + "x");
  const auto msg = error_of([&] { load_dataset(dir.path() / "manifest.json"); });
  CHECK(msg.find("size mismatch: ") == 0);
}

TEST_CASE("sample count may be derived from the file size") {
  TempDir dir;
  write_manifest(dir.path(), one_trial_manifest(0));
  write_f32(dir.path() / "t.f32", 2 * 450);
  auto trials = load_dataset(dir.path() / "manifest.json");
  CHECK(trials[0].data.cols() == 450);
}

TEST_CASE("non-finite samples and duplicate keys are rejected") {
  TempDir dir;
  write_manifest(dir.path(), one_trial_manifest());
  write_f32(dir.path() / "t.f32", 1200, std::nanf(""));
  CHECK(error_of([&] { load_dataset(dir.path() / "manifest.json"); }).find("non-finite sample in") == 0);

  auto j = one_trial_manifest();
  j["subjects"][0]["trials"].push_back(j["subjects"][0]["trials"][0]);
  write_manifest(dir.path(), j);
  write_f32(dir.path() / "t.f32", 1200);
  CHECK(error_of([&] { load_dataset(dir.path() / "manifest.json"); }).find("duplicate trial key") == 0);
}

TEST_CASE("save then load round-trips trials through float32") {
  TempDir dir;
  std::mt19937_64 rng(5);
  std::vector<RawTrial> trials;
  for (int t = 1; t <= 3; ++t) {
    auto trial = test_util::make_trial(3, 400, 200.0, 2, 1, t, static_cast<Emotion>(t), DeviceKind::Wet);
    trial.data = test_util::random_matrix(3, 400, rng);
    trials.push_back(trial);
  }
  const auto manifest = save_dataset(trials, dir.path(), "rt");
  auto back = load_dataset(manifest);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].key == trials[i].key);
    CHECK(back[i].label == trials[i].label);
    CHECK((back[i].data - trials[i].data).cwiseAbs().maxCoeff() < 1e-6);
  }
  CHECK(read_manifest(manifest).dataset_name == "rt");
}

TEST_CASE("segmentation keeps floor(duration / window) full windows") {
  auto t150 = test_util::make_trial(2, 150 * 200, 200.0);
  auto segs = segment_trial(t150, 5.0);
  CHECK(segs.size() == 30);
  CHECK(segs[0].data.cols() == 1000);
  CHECK(segs[29].segment_index == 29);

  auto t152 = test_util::make_trial(2, 152 * 200, 200.0);
  t152.data.row(0).setLinSpaced(152 * 200, 0.0, 152 * 200 - 1.0);
  segs = segment_trial(t152, 5.0);
  CHECK(segs.size() == 30);
  // The last kept window ends 400 samples before the trial does.
  CHECK(segs.back().data(0, 999) == doctest::Approx(30 * 1000 - 1.0));

  auto t4 = test_util::make_trial(2, 4 * 200, 200.0);
  CHECK_THROWS_AS(segment_trial(t4, 5.0), std::invalid_argument);
}

TEST_CASE("trial validation") {
  auto t = test_util::make_trial(2, 100, 200.0);
  CHECK_THROWS_AS(validate(t), std::invalid_argument);
  t = test_util::make_trial(2, 400, 0.0);
  CHECK_THROWS_AS(validate(t), std::invalid_argument);
  t = test_util::make_trial(2, 400, 200.0);
  CHECK_NOTHROW(validate(t));
  t.data(1, 3) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(validate(t), std::invalid_argument);
}

TEST_CASE("inter-dataset relabelling keeps the shared emotions") {
  std::vector<RawTrial> trials;
  int n = 0;
  for (int c = 0; c < kNumEmotions; ++c) {
    for (int k = 0; k < 5; ++k) trials.push_back(test_util::make_trial(1, 400, 200.0, 1, 1, ++n, static_cast<Emotion>(c)));
  }
  const auto shared = LabelSet::shared_interdataset();
  auto r = map_labels_interdataset(trials, shared);
  CHECK(r.trials.size() == 20);
  for (const auto& t : r.trials) {
    CHECK(t.label != Emotion::Anger);
    CHECK(t.label_code == shared.code(t.label));
  }
  CHECK(r.class_counts.at(Emotion::Fear) == 5);

  auto full = map_labels_interdataset(trials, LabelSet::standard());
  CHECK(full.trials.size() == 25);
  for (const auto& t : full.trials) CHECK(t.label_code == static_cast<int>(t.label));

  CHECK_THROWS_AS(LabelSet::from_names({"Happy", "Bored"}), std::invalid_argument);
  CHECK(LabelSet::from_names({"Happy", "Sad"}).code(Emotion::Sadness) == 1);
}

TEST_CASE("synthetic generation is deterministic for a seed") {
  SyntheticConfig c;
  c.n_subjects = 1;
  c.n_blocks = 2;
  c.trials_per_block = 2;
  c.trial_seconds = 2.0;
  c.source_dynamics = 0.5;
  c.dry_noise_drift = 0.3;
  auto a = generate_synthetic(c);
  auto b = generate_synthetic(c);
  REQUIRE(a.wet.size() == 4);
  for (std::size_t i = 0; i < a.wet.size(); ++i) {
    CHECK(a.wet[i].data == b.wet[i].data);
    CHECK(a.dry[i].data == b.dry[i].data);
    CHECK(a.wet[i].label == a.dry[i].label);
  }
  c.seed += 1;
  auto d = generate_synthetic(c);
  CHECK(!(d.wet[0].data == a.wet[0].data));
}

TEST_CASE("noise-free wet trials are exact mixes of the sources") {
  SyntheticConfig c;
  c.n_subjects = 2;
  c.n_blocks = 2;
  c.trials_per_block = 2;
  c.trial_seconds = 2.0;
  c.wet_noise_sigma = 0.0;
  c.retain_sources = true;
  auto ds = generate_synthetic(c);
  for (std::size_t i = 0; i < ds.wet.size(); ++i) {
    const Matrix x = ds.wet[i].data;
    const Matrix& s = ds.sources[i].wet_sources;
    // Least-squares projection of every channel onto the source span.
    const Matrix coef = s.transpose().colPivHouseholderQr().solve(x.transpose());
    const double residual = (x.transpose() - s.transpose() * coef).cwiseAbs().maxCoeff();
    CHECK(residual < 1e-9);
  }
}

TEST_CASE("dry SNR is below wet SNR for every trial") {
  SyntheticConfig c;
  c.n_subjects = 2;
  c.n_blocks = 2;
  c.trials_per_block = 5;
  c.trial_seconds = 3.0;
  c.retain_sources = true;
  auto ds = generate_synthetic(c);
  const int per_subject = c.n_blocks * c.trials_per_block;
  for (std::size_t i = 0; i < ds.wet.size(); ++i) {
    const auto subject = i / static_cast<std::size_t>(per_subject);
    const Matrix wet_clean = ds.wet_mixing[subject] * ds.sources[i].wet_sources;
    const Matrix dry_clean = ds.dry_mixing[subject] * ds.sources[i].dry_sources;
    const double wet_snr = wet_clean.squaredNorm() / (ds.wet[i].data - wet_clean).squaredNorm();
    const double dry_snr = dry_clean.squaredNorm() / (ds.dry[i].data - dry_clean).squaredNorm();
    CHECK(dry_snr < wet_snr);
  }
}

TEST_CASE("per-class delta power follows the class profile") {
  SyntheticConfig c;
  c.n_subjects = 1;
  c.n_blocks = 32;
  c.trials_per_block = 5;
  c.trial_seconds = 40.0;
  c.wet_rate_hz = 200.0;
  c.dry_rate_hz = 200.0;
  c.wet_noise_sigma = 0.0;
  c.class_contrast = 1.0;
  c.trial_jitter = 0.0;
  c.subject_jitter = 0.0;
  c.components_per_band = 8;
  c.retain_sources = true;
  auto ds = generate_synthetic(c);
  // Hann-windowed periodogram power of every source over the delta bins
  // (1-4 Hz), averaged per class in log space.
  const auto n = ds.sources[0].wet_sources.cols();
  const double df = 200.0 / static_cast<double>(n);
  std::vector<std::complex<double>> twiddle(static_cast<std::size_t>(n));
  std::vector<double> window(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < n; ++t) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(n);
    twiddle[static_cast<std::size_t>(t)] = std::polar(1.0, -phase);
    window[static_cast<std::size_t>(t)] = 0.5 - 0.5 * std::cos(phase);
  }
  const auto k_lo = static_cast<Eigen::Index>(std::ceil(1.0 / df));
  const auto k_hi = static_cast<Eigen::Index>(std::floor(4.0 / df));
  Matrix measured = Matrix::Zero(kNumEmotions, c.latent_dim);
  std::vector<int> counts(kNumEmotions, 0);
  for (std::size_t i = 0; i < ds.sources.size(); ++i) {
    const int cls = ds.wet[i].label_code;
    ++counts[static_cast<std::size_t>(cls)];
    for (int s = 0; s < c.latent_dim; ++s) {
      double power = 0.0;
      for (Eigen::Index k = k_lo; k < k_hi; ++k) {
        std::complex<double> acc = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
          acc += ds.sources[i].wet_sources(s, t) * window[static_cast<std::size_t>(t)] *
                 twiddle[static_cast<std::size_t>((k * t) % n)];
        }
        power += std::norm(acc);
      }
      measured(cls, s) += std::log(power);
    }
  }
  for (int cls = 0; cls < kNumEmotions; ++cls) measured.row(cls) /= counts[static_cast<std::size_t>(cls)];
  // Class differences of the measured log power track the profile differences.
  double worst = 0.0;
  for (int s = 0; s < c.latent_dim; ++s) {
    for (int cls = 1; cls < kNumEmotions; ++cls) {
      const double want = ds.class_profile(cls, s * 5) - ds.class_profile(0, s * 5);
      const double got = measured(cls, s) - measured(0, s);
      worst = std::max(worst, std::abs(want - got));
    }
  }
  CAPTURE(worst);
  CHECK(worst < 0.15);
}

TEST_CASE("synthetic config validation lists violations") {
  SyntheticConfig c;
  c.dry_noise_sigma = 0.1;
  c.n_blocks = 0;
  std::string msg;
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    msg = e.what();
  }
  CHECK(msg.find("n_blocks") != std::string::npos);
  CHECK(msg.find("dry_noise_sigma") != std::string::npos);
}
