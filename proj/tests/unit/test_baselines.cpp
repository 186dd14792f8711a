#include <doctest.h>

#include <cmath>
#include <set>

#include "decan/baselines.hpp"
#include "decan/log.hpp"
#include "helpers.hpp"

using namespace decan;
using namespace decan::eval;

namespace {

struct Toy {
  Matrix x;
  std::vector<int> y;
};

// Two well separated Gaussian clouds along a random direction.
Toy separable(int n, std::mt19937_64& rng) {
  Toy t;
  t.x = test_util::random_matrix(n, 4, rng, 0.3);
  Vector dir = test_util::random_matrix(4, 1, rng);
  dir.normalize();
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    t.y.push_back(c);
    t.x.row(i) += (c == 0 ? -3.0 : 3.0) * dir.transpose();
  }
  return t;
}

BaselineConfig quick() {
  BaselineConfig c;
  c.dnn_epochs = 300;
  c.dnn_batch_size = 32;
  c.svm_c_grid = {0.01, 1.0, 100.0};
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("standardizer fits on training rows and keeps constant columns") {
  Matrix x(3, 2);
  x << 1, 5, 2, 5, 3, 5;
  const auto s = Standardizer::fit(x);
  CHECK(s.mean(0) == doctest::Approx(2.0));
  CHECK(s.scale(1) == 1.0);
  const Matrix z = s.apply(x);
  CHECK(z.col(0).mean() == doctest::Approx(0.0));
  CHECK(z.col(1).isZero());
  const auto back = Standardizer::from_json(s.to_json());
  CHECK(back.apply(x) == z);
}

TEST_CASE("every baseline separates linearly separable data") {
  std::mt19937_64 rng(1);
  const auto t = separable(80, rng);
  for (auto kind : {BaselineKind::LR, BaselineKind::LinearSVM, BaselineKind::DNN}) {
    CAPTURE(to_string(kind));
    const auto clf = train_baseline(kind, t.x, t.y, 2, quick());
    CHECK(clf->predict(t.x) == t.y);
    const Matrix p = clf->predict_proba(t.x);
    for (int i = 0; i < p.rows(); ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("softmax regression on two symmetric points splits at the midpoint") {
  Matrix x(2, 1);
  x << -1.0, 1.0;
  const std::vector<int> y = {0, 1};
  const auto clf = train_baseline(BaselineKind::LR, x, y, 2, quick());
  Matrix probe(4, 1);
  probe << -0.01, 0.01, -0.5, 0.5;
  CHECK(clf->predict(probe) == std::vector<int>{0, 1, 0, 1});
  Matrix mid(1, 1);
  mid << 0.0;
  CHECK(clf->predict_proba(mid)(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("SVM picks C from the declared grid") {
  std::mt19937_64 rng(2);
  const auto t = separable(60, rng);
  auto cfg = quick();
  const auto clf = train_baseline(BaselineKind::LinearSVM, t.x, t.y, 2, cfg);
  const double c = clf->info().at("C").get<double>();
  CHECK(std::find(cfg.svm_c_grid.begin(), cfg.svm_c_grid.end(), c) != cfg.svm_c_grid.end());
  CHECK(clf->info().at("cv_accuracy").size() == cfg.svm_c_grid.size());

  const auto grid = svm_c_grid();
  CHECK(std::count(grid.begin(), grid.end(), std::ldexp(1.0, -10)) == 1);
  CHECK(std::count(grid.begin(), grid.end(), 1024.0) == 1);
  CHECK(std::find_if(grid.begin(), grid.end(), [](double v) { return std::abs(v - 19.6) < 1e-12; }) != grid.end());
  CHECK(std::set<double>(grid.begin(), grid.end()).size() == grid.size());
}

TEST_CASE("DNN baseline sizes and latents") {
  CHECK(dnn_hidden(DeviceKind::Wet) == std::vector<int>{128, 64, 32});
  CHECK(dnn_hidden(DeviceKind::Dry) == std::vector<int>{64, 32});
  std::mt19937_64 rng(3);
  const auto t = separable(40, rng);
  auto cfg = quick();
  cfg.dnn_epochs = 5;
  const auto clf = train_baseline(BaselineKind::DNN, t.x, t.y, 2, cfg);
  CHECK(clf->latents(t.x).cols() == 32);
  CHECK(train_baseline(BaselineKind::LR, t.x, t.y, 2, cfg)->latents(t.x).cols() == 0);
}

TEST_CASE("baseline input validation") {
  Matrix x = Matrix::Ones(4, 2);
  const std::vector<int> one_class = {1, 1, 1, 1};
  CHECK_THROWS_AS(train_baseline(BaselineKind::LR, x, one_class, 3, quick()), std::invalid_argument);
  const std::vector<int> out_of_range = {0, 1, 5, 0};
  CHECK_THROWS_AS(train_baseline(BaselineKind::LR, x, out_of_range, 3, quick()), std::invalid_argument);
  CHECK(baseline_from_string("svm") == BaselineKind::LinearSVM);
  CHECK_THROWS(baseline_from_string("knn"));
}

TEST_CASE("baseline training is deterministic") {
  std::mt19937_64 rng(4);
  const auto t = separable(50, rng);
  for (auto kind : {BaselineKind::LR, BaselineKind::LinearSVM, BaselineKind::DNN}) {
    const auto a = train_baseline(kind, t.x, t.y, 2, quick());
    const auto b = train_baseline(kind, t.x, t.y, 2, quick());
    CHECK(a->predict_proba(t.x) == b->predict_proba(t.x));
  }
}
