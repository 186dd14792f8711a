#include <doctest.h>

#include <cmath>

#include "decan/model.hpp"
#include "helpers.hpp"

using namespace decan;
using namespace decan::model;

namespace {

DecanConfig small_config(ContrastiveMode mode = ContrastiveMode::InclusivePositive) {
  DecanConfig c;
  c.wet_input_dim = 10;
  c.dry_input_dim = 6;
  c.contrastive_mode = mode;
  c.seed = 17;
  return c;
}

PairedBatch random_batch(int n, int wet_dim, int dry_dim, std::mt19937_64& rng, int classes = 5) {
  PairedBatch b;
  b.wet_features = test_util::random_matrix(n, wet_dim, rng);
  b.dry_features = test_util::random_matrix(n, dry_dim, rng);
  for (int i = 0; i < n; ++i) b.labels.push_back(i % classes);
  b.origins.resize(static_cast<std::size_t>(n));
  return b;
}

// Separable toy data: dry features carry the label in their mean.
PairedBatch separable_batch(int n, std::mt19937_64& rng) {
  PairedBatch b = random_batch(n, 10, 6, rng, 2);
  for (int i = 0; i < n; ++i) {
    const double shift = b.labels[static_cast<std::size_t>(i)] == 0 ? -2.0 : 2.0;
    b.wet_features.row(i).array() += shift;
    b.dry_features.row(i).array() += shift;
  }
  return b;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("cosine similarity") {
  Vector a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  Vector c(2), d(2);
  c << 1, 2;
  d << 2, 4;
  CHECK(cosine_similarity(c, d) == doctest::Approx(1.0).epsilon(1e-12));
  Vector v(3);
  v << -0.3, 5.0, 2.0;
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(Vector::Zero(2), a) == 0.0);
}

TEST_CASE("contrastive loss golden values for T=2") {
  const Matrix p = rows({{1, 0}, {0, 1}});
  const auto inc = contrastive_loss(p, p, 0.5, ContrastiveMode::InclusivePositive);
  CHECK(std::abs(inc.loss - 2.0 * std::log(1.0 + std::exp(-2.0))) < 1e-12);
  CHECK(std::abs(inc.loss - 0.253856) < 1e-6);
  const auto strict = contrastive_loss(p, p, 0.5, ContrastiveMode::StrictPaper);
  CHECK(std::abs(strict.loss - (-4.0)) < 1e-9);
  CHECK(inc.similarity(0, 0) == doctest::Approx(1.0));
  CHECK(inc.similarity(0, 1) == doctest::Approx(0.0));
  CHECK_THROWS_AS(contrastive_loss(p.topRows(1), p.topRows(1), 0.5, ContrastiveMode::InclusivePositive),
                  std::invalid_argument);
}

TEST_CASE("contrastive loss is invariant to a joint row permutation") {
  std::mt19937_64 rng(8);
  const Matrix w = test_util::random_matrix(6, 4, rng);
  const Matrix d = test_util::random_matrix(6, 4, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 6, rng);
  for (auto mode : {ContrastiveMode::InclusivePositive, ContrastiveMode::StrictPaper}) {
    for (bool sym : {false, true}) {
      const double a = contrastive_loss(w, d, 0.5, mode, sym).loss;
      const double b = contrastive_loss(perm * w, perm * d, 0.5, mode, sym).loss;
      CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
  }
}

TEST_CASE("inclusive contrastive loss is nonnegative and tends to T ln T at large temperature") {
  std::mt19937_64 rng(10);
  for (int k = 0; k < 50; ++k) {
    const Matrix w = test_util::random_matrix(5, 3, rng);
    const Matrix d = test_util::random_matrix(5, 3, rng);
    CHECK(contrastive_loss(w, d, 0.1, ContrastiveMode::InclusivePositive).loss >= 0.0);
  }
  const Matrix w = test_util::random_matrix(7, 3, rng);
  const Matrix d = test_util::random_matrix(7, 3, rng);
  const double l = contrastive_loss(w, d, 1e6, ContrastiveMode::InclusivePositive).loss;
  // Each anchor contributes ln T.
  CHECK(std::abs(l / 7.0 - std::log(7.0)) < 1e-3);
}

TEST_CASE("contrastive gradients match finite differences") {
  std::mt19937_64 rng(12);
  for (auto mode : {ContrastiveMode::InclusivePositive, ContrastiveMode::StrictPaper}) {
    for (bool sym : {false, true}) {
      Matrix w = test_util::random_matrix(5, 4, rng);
      Matrix d = test_util::random_matrix(5, 4, rng);
      const auto r = contrastive_loss(w, d, 0.5, mode, sym);
      const double h = 1e-6;
      for (Matrix* m : {&w, &d}) {
        const Matrix& g = m == &w ? r.grad_wet : r.grad_dry;
        for (Eigen::Index i = 0; i < m->size(); ++i) {
          const double saved = m->data()[i];
          m->data()[i] = saved + h;
          const double up = contrastive_loss(w, d, 0.5, mode, sym, false).loss;
          m->data()[i] = saved - h;
          const double down = contrastive_loss(w, d, 0.5, mode, sym, false).loss;
          m->data()[i] = saved;
          CHECK(std::abs(g.data()[i] - (up - down) / (2 * h)) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("inclusive loss over a free dry projection is minimised at the wet direction") {
  std::mt19937_64 rng(14);
  const Matrix w = test_util::random_matrix(4, 3, rng);
  Matrix d = test_util::random_matrix(4, 3, rng);
  for (int step = 0; step < 3000; ++step) {
    const auto r = contrastive_loss(w, d, 0.5, ContrastiveMode::InclusivePositive);
    d -= 0.05 * r.grad_dry;
  }
  // The anchor rows align with their own positives better than with any negative.
  const auto r = contrastive_loss(w, d, 0.5, ContrastiveMode::InclusivePositive);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i != j) CHECK(r.similarity(i, i) > r.similarity(i, j));
    }
  }
}

TEST_CASE("model architecture and parameter sharing") {
  auto cfg = small_config();
  DecanModel m(cfg);
  const auto wet = m.encoder(DeviceKind::Wet);
  const auto dry = m.encoder(DeviceKind::Dry);
  CHECK(wet.back().out_dim() == 32);
  CHECK(dry.back().out_dim() == 32);
  CHECK(wet.front().in_dim() == 10);
  CHECK(dry.front().in_dim() == 6);
  // Every layer after the device-specific entry layer is the same storage.
  REQUIRE(wet.size() == dry.size());
  for (std::size_t i = 1; i < wet.size(); ++i) CHECK(wet[i].weight.get() == dry[i].weight.get());
  CHECK(wet.front().weight.get() != dry.front().weight.get());

  std::mt19937_64 rng(1);
  const Matrix latent = test_util::random_matrix(3, 32, rng);
  CHECK(project(m, latent).cols() == cfg.projector_out);
  cfg.projector_out = 32;
  DecanModel m32(cfg);
  CHECK(project(m32, latent).cols() == 32);
}

TEST_CASE("shared trunk yields equal latents for equal entry activations") {
  auto cfg = small_config();
  cfg.dry_input_dim = 10;
  DecanModel m(cfg);
  m.dry_adapter().weight->value = m.wet_stack().weight->value;
  m.dry_adapter().bias->value = m.wet_stack().bias->value;
  std::mt19937_64 rng(3);
  const Matrix x = test_util::random_matrix(4, 10, rng);
  CHECK(encode(m, x, DeviceKind::Wet) == encode(m, x, DeviceKind::Dry));
}

TEST_CASE("zero latent with zero biases projects to zero") {
  DecanModel m(small_config());
  for (const auto& l : m.projector()) CHECK(l.bias->value.isZero());
  CHECK(project(m, Matrix::Zero(2, 32)).isZero());
}

TEST_CASE("total loss components add up") {
  std::mt19937_64 rng(5);
  const auto batch = random_batch(8, 10, 6, rng);
  for (bool use_cl : {true, false}) {
    auto cfg = small_config();
    cfg.use_contrastive = use_cl;
    DecanModel m(cfg);
    const auto l = total_loss(m, batch, false);
    CHECK(std::abs(l.total - (l.wet + l.dry + l.contrastive)) < 1e-12);
    if (!use_cl) {
      CHECK(l.contrastive == 0.0);
      CHECK(std::abs(l.total - (l.wet + l.dry)) < 1e-12);
    }
  }
}

TEST_CASE("full joint-loss gradient passes the finite-difference check") {
  for (auto mode : {ContrastiveMode::InclusivePositive, ContrastiveMode::StrictPaper}) {
    CAPTURE(to_string(mode));
    std::mt19937_64 rng(21);
    const auto batch = random_batch(8, 10, 6, rng);
    DecanModel m(small_config(mode));
    auto& params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i]->value.cols() == 1) params[i]->value = test_util::random_matrix(static_cast<int>(params[i]->value.rows()), 1, rng, 0.05);
    }
    auto loss = [&] { return total_loss(m, batch, false).total; };
    auto loss_and_backward = [&] {
      params.zero_grad();
      total_loss(m, batch, true);
    };
    const auto r = nn::gradient_check(params, loss, loss_and_backward, 1e-5);
    CAPTURE(r.worst);
    CAPTURE(r.kinks);
    CAPTURE(r.roundoff);
    CHECK(r.checked + r.kinks == params.scalar_count());
    CHECK(r.kinks * 100 < params.scalar_count());
    CHECK(r.failures == 0);
  }
}

TEST_CASE("training lowers the dry loss and is deterministic") {
  std::mt19937_64 rng(30);
  const std::vector<PairedBatch> batches = {separable_batch(64, rng)};
  auto cfg = small_config();
  cfg.epochs = 200;
  cfg.patience = 1000;
  cfg.batch_size = 32;
  DecanModel a(cfg);
  const auto ra = train(a, batches);
  REQUIRE(ra.history.size() == 200);
  CHECK(ra.history.back().loss.dry < ra.history.front().loss.dry);

  DecanModel b(cfg);
  const auto rb = train(b, batches);
  REQUIRE(rb.history.size() == ra.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) CHECK(ra.history[i].loss.total == rb.history[i].loss.total);

  const auto pred = predict_dry(a, batches[0].dry_features);
  int correct = 0;
  for (int i = 0; i < 64; ++i) correct += pred.labels[static_cast<std::size_t>(i)] == batches[0].labels[static_cast<std::size_t>(i)];
  CHECK(correct == 64);
}

TEST_CASE("contrastive training pulls positive pairs together") {
  std::mt19937_64 rng(31);
  PairedBatch b = random_batch(48, 10, 6, rng);
  // Dry is a noisy linear view of the first wet features.
  const Matrix mix = test_util::random_matrix(10, 6, rng);
  b.dry_features = b.wet_features * mix + 0.1 * test_util::random_matrix(48, 6, rng);
  auto cfg = small_config();
  cfg.epochs = 150;
  cfg.patience = 1000;
  cfg.batch_size = 48;
  DecanModel m(cfg);
  auto mean_sims = [&] {
    const Matrix pw = project(m, encode(m, b.wet_features, DeviceKind::Wet));
    const Matrix pd = project(m, encode(m, b.dry_features, DeviceKind::Dry));
    const auto r = contrastive_loss(pw, pd, cfg.temperature, cfg.contrastive_mode, false, false);
    const double pos = r.similarity.diagonal().mean();
    const double neg = (r.similarity.sum() - r.similarity.diagonal().sum()) / (48.0 * 47.0);
    return std::pair{pos, neg};
  };
  const auto before = mean_sims();
  const std::vector<PairedBatch> batches = {b};
  train(m, batches);
  const auto after = mean_sims();
  CHECK(after.first > before.first);
  CHECK(after.first > after.second);
}

TEST_CASE("divergence aborts with a diagnostic") {
  std::mt19937_64 rng(32);
  // Inputs near the double range overflow the activations within a step.
  std::vector<PairedBatch> batches = {random_batch(16, 10, 6, rng)};
  batches[0].dry_features *= 1e306;
  auto cfg = small_config();
  cfg.learning_rate = 10.0;
  cfg.epochs = 500;
  DecanModel m(cfg);
  try {
    train(m, batches);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(e.epoch >= 0);
    CHECK(!e.component.empty());
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("dry inference never reads wet-only parameters") {
  std::mt19937_64 rng(33);
  DecanModel m(small_config());
  const auto before = m.wet_stack_reads();
  const auto p = predict_dry(m, test_util::random_matrix(9, 6, rng));
  CHECK(m.wet_stack_reads() == before);
  for (int i = 0; i < 9; ++i) {
    CHECK(p.probabilities.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    Eigen::Index arg;
    p.probabilities.row(i).maxCoeff(&arg);
    CHECK(p.labels[static_cast<std::size_t>(i)] == arg);
  }
  CHECK(p.latents.cols() == 32);
  encode(m, test_util::random_matrix(2, 10, rng), DeviceKind::Wet);
  CHECK(m.wet_stack_reads() > before);
}

TEST_CASE("argmax ties resolve to the lowest class") {
  Matrix s(2, 3);
  s << 0.2, 0.4, 0.4, 0.5, 0.5, 0.0;
  CHECK(argmax_rows(s) == std::vector<int>{1, 0});
}

TEST_CASE("config validation and search grids") {
  DecanConfig c;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);  // input dims unset
  c = small_config();
  CHECK_NOTHROW(c.validate());
  c.temperature = 0.0;
  c.batch_size = 1;
  std::string msg;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    msg = e.what();
  }
  CHECK(msg.find("temperature") != std::string::npos);
  CHECK(msg.find("batch_size") != std::string::npos);

  const auto lr = learning_rate_grid();
  CHECK(lr.size() == 15);
  CHECK(lr.front() == doctest::Approx(1e-4));
  CHECK(lr.back() == doctest::Approx(9e-2));
  CHECK(projector_hidden_grid() == std::vector<int>{64, 128, 256, 512});

  const auto round = decan_config_from_json(to_json(small_config(ContrastiveMode::StrictPaper)));
  CHECK(round.contrastive_mode == ContrastiveMode::StrictPaper);
  CHECK(round.dry_input_dim == 6);
}

TEST_CASE("saved models predict identically after loading") {
  test_util::TempDir dir;
  std::mt19937_64 rng(34);
  DecanModel m(small_config());
  save_model(dir.path() / "m.dcck", m, {{"tag", 1}});
  const auto loaded = load_model(dir.path() / "m.dcck");
  const Matrix x = test_util::random_matrix(5, 6, rng);
  const auto a = predict_dry(m, x);
  const auto b = predict_dry(loaded, x);
  CHECK(a.labels == b.labels);
  CHECK((a.probabilities - b.probabilities).cwiseAbs().maxCoeff() < 1e-5);
}
