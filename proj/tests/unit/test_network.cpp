#include <doctest.h>

#include <cmath>

#include "decan/network.hpp"
#include "helpers.hpp"

using namespace decan;
using namespace decan::nn;

namespace {

DenseLayer fixed_layer(const Matrix& w, const Vector& b, Activation act) {
  DenseLayer l;
  l.weight = std::make_shared<Parameter>(w);
  l.bias = std::make_shared<Parameter>(Matrix(b));
  l.activation = act;
  return l;
}

}  // namespace

TEST_CASE("identity layer passes input through") {
  const auto layer = fixed_layer(Matrix::Identity(3, 3), Vector::Zero(3), Activation::Identity);
  Matrix x(2, 3);
  x << 1, -2, 3, 0.5, 4, -6;
  const std::vector<DenseLayer> stack = {layer};
  CHECK(infer(stack, x) == x);
}

TEST_CASE("ReLU clamps negatives") {
  const auto layer = fixed_layer(Matrix::Identity(2, 2), Vector::Zero(2), Activation::ReLU);
  Matrix x(1, 2);
  x << -1, 2;
  const std::vector<DenseLayer> stack = {layer};
  const Matrix y = infer(stack, x);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 2.0);
}

TEST_CASE("two-layer network matches hand arithmetic") {
  Matrix w1(2, 2);
  w1 << 1, 2, -1, 1;
  Vector b1(2);
  b1 << 0.5, -3;
  Matrix w2(1, 2);
  w2 << 2, -1;
  Vector b2(1);
  b2 << 1;
  const std::vector<DenseLayer> stack = {fixed_layer(w1, b1, Activation::ReLU), fixed_layer(w2, b2, Activation::Identity)};
  Matrix x(1, 2);
  x << 1, 3;
  // h = relu([1 + 6 + 0.5, -1 + 3 - 3]) = [7.5, 0]; y = 2 * 7.5 - 0 + 1 = 16
  CHECK(infer(stack, x)(0, 0) == doctest::Approx(16.0));
  CHECK(forward(stack, x).output()(0, 0) == doctest::Approx(16.0));
}

TEST_CASE("broken dimension chain is rejected") {
  std::mt19937_64 rng(1);
  const std::vector<DenseLayer> stack = {DenseLayer::make(3, 4, Activation::ReLU, rng),
                                         DenseLayer::make(5, 2, Activation::Identity, rng)};
  CHECK_THROWS_AS(forward(stack, Matrix::Zero(1, 3)), std::invalid_argument);
}

TEST_CASE("glorot initialisation bounds") {
  std::mt19937_64 rng(9);
  const auto l = DenseLayer::make(40, 10, Activation::ReLU, rng);
  const double bound = std::sqrt(6.0 / 50.0);
  CHECK(l.weight->value.cwiseAbs().maxCoeff() <= bound);
  CHECK(l.bias->value.isZero());
  CHECK(l.weight->value.rows() == 10);
  CHECK(l.in_dim() == 40);
}

TEST_CASE("softmax cross-entropy values") {
  const std::vector<int> t0 = {0};
  auto r = softmax_cross_entropy(Matrix::Zero(1, 5), t0);
  CHECK(std::abs(r.loss - std::log(5.0)) < 1e-12);
  Matrix logits = Matrix::Zero(1, 5);
  logits(0, 0) = 1.0;
  r = softmax_cross_entropy(logits, t0);
  CHECK(r.loss == doctest::Approx(std::log(std::exp(1.0) + 4.0) - 1.0).epsilon(1e-12));
  logits(0, 0) = 100.0;
  r = softmax_cross_entropy(logits, t0);
  CHECK(r.loss < 1e-6);
  CHECK(std::isfinite(r.loss));

  Matrix big(2, 3);
  big << 1000, 0, -1000, 3, 3, 3;
  const Matrix p = softmax(big);
  CHECK(p.allFinite());
  CHECK(p.row(0).sum() == doctest::Approx(1.0));
  CHECK(p(1, 2) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("cross-entropy gradient is (softmax - onehot) / batch") {
  std::mt19937_64 rng(4);
  const Matrix logits = test_util::random_matrix(4, 3, rng);
  const std::vector<int> t = {0, 2, 1, 2};
  const auto r = softmax_cross_entropy(logits, t);
  Matrix want = softmax(logits);
  for (int i = 0; i < 4; ++i) want(i, t[static_cast<std::size_t>(i)]) -= 1.0;
  want /= 4.0;
  CHECK((r.grad - want).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("backprop through an MLP passes the finite-difference check") {
  std::mt19937_64 rng(12);
  std::vector<DenseLayer> stack = {DenseLayer::make(6, 8, Activation::ReLU, rng),
                                   DenseLayer::make(8, 5, Activation::ReLU, rng),
                                   DenseLayer::make(5, 3, Activation::Identity, rng)};
  for (auto& l : stack) l.bias->value = test_util::random_matrix(l.out_dim(), 1, rng, 0.1);
  ParameterSet params;
  for (std::size_t i = 0; i < stack.size(); ++i) params.add_layer("l" + std::to_string(i), stack[i]);
  const Matrix x = test_util::random_matrix(7, 6, rng);
  const std::vector<int> y = {0, 1, 2, 0, 1, 2, 1};
  auto loss = [&] { return softmax_cross_entropy(infer(stack, x), y).loss; };
  auto loss_and_backward = [&] {
    params.zero_grad();
    const auto cache = forward(stack, x);
    const auto ce = softmax_cross_entropy(cache.output(), y);
    backward(stack, cache, ce.grad);
  };
  const auto r = gradient_check(params, loss, loss_and_backward);
  CHECK(r.checked == params.scalar_count());
  CHECK(r.failures == 0);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("gradient check flags wrong gradients and ReLU kinks") {
  // One ReLU unit: loss = relu(w x + b) summed over a single sample.
  auto layer = fixed_layer(Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 0.5), Activation::ReLU);
  std::vector<DenseLayer> stack = {layer};
  ParameterSet params;
  params.add_layer("l", layer);
  Matrix x = Matrix::Constant(1, 1, 1.0);
  auto loss = [&] { return infer(stack, x).sum(); };
  auto scaled_backward = [&](double scale) {
    return [&, scale] {
      params.zero_grad();
      const auto cache = forward(stack, x);
      backward(stack, cache, Matrix::Constant(1, 1, scale));
    };
  };
  SUBCASE("correct gradient") {
    const auto r = gradient_check(params, loss, scaled_backward(1.0));
    CHECK(r.failures == 0);
    CHECK(r.kinks == 0);
  }
  SUBCASE("wrong gradient") {
    const auto r = gradient_check(params, loss, scaled_backward(1.01));
    CHECK(r.failures == 2);
  }
  SUBCASE("pre-activation within h of zero") {
    layer.bias->value(0, 0) = -2.0 + 1e-7;
    const auto r = gradient_check(params, loss, scaled_backward(1.0));
    CHECK(r.kinks == 2);
    CHECK(r.checked == 0);
  }
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
  std::mt19937_64 rng(3);
  std::vector<DenseLayer> stack = {DenseLayer::make(4, 6, Activation::ReLU, rng),
                                   DenseLayer::make(6, 2, Activation::Identity, rng)};
  ParameterSet params;
  params.add_layer("a", stack[0]);
  params.add_layer("b", stack[1]);
  params.zero_grad();
  const Matrix x = test_util::random_matrix(5, 4, rng);
  const auto cache = forward(stack, x);
  const Matrix gin = backward(stack, cache, Matrix::Zero(5, 2));
  CHECK(gin.isZero());
  CHECK(params.max_abs_grad() == 0.0);
}

TEST_CASE("a parameter shared by two use sites accumulates both gradients") {
  std::mt19937_64 rng(6);
  const auto shared = DenseLayer::make(3, 3, Activation::Identity, rng, "trunk");
  DenseLayer twin = shared;  // same storage
  CHECK(twin.weight.get() == shared.weight.get());
  const std::vector<DenseLayer> stack = {shared, DenseLayer::make(3, 3, Activation::ReLU, rng), twin};
  ParameterSet params;
  params.add_layer("first", stack[0]);
  params.add_layer("mid", stack[1]);
  params.add_layer("third", stack[2]);
  CHECK(params.size() == 4);  // deduplicated by storage

  const Matrix x = test_util::random_matrix(4, 3, rng);
  auto loss = [&] { return infer(stack, x).squaredNorm(); };
  auto loss_and_backward = [&] {
    params.zero_grad();
    const auto cache = forward(stack, x);
    backward(stack, cache, 2.0 * cache.output());
  };
  const auto r = gradient_check(params, loss, loss_and_backward);
  CHECK(r.failures == 0);

  // Each site alone would give a different gradient; the stored one is their sum.
  loss_and_backward();
  const Matrix total = shared.weight->grad;
  const auto cache = forward(stack, x);
  const Matrix site3 = (2.0 * cache.output()).transpose() * cache.layers[1].output;
  CHECK((total - site3).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("stale caches are detected") {
  std::mt19937_64 rng(2);
  std::vector<DenseLayer> stack = {DenseLayer::make(2, 2, Activation::Identity, rng)};
  ParameterSet params;
  params.add_layer("l", stack[0]);
  const auto cache = forward(stack, Matrix::Ones(1, 2));
  RmspropState state(params);
  params[0]->grad.setOnes();
  rmsprop_step(params, state);
  CHECK_THROWS_AS(backward(stack, cache, Matrix::Ones(1, 2)), std::logic_error);
}

TEST_CASE("RMSprop update rule") {
  RmspropOptions opt;
  opt.learning_rate = 0.01;
  opt.rho = 0.9;
  opt.epsilon = 1e-8;
  Matrix theta = Matrix::Zero(1, 1);
  Matrix v = Matrix::Zero(1, 1);
  rmsprop_update(theta, Matrix::Ones(1, 1), v, opt);
  CHECK(v(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(std::abs(theta(0, 0) - (-0.0316228)) < 1e-6);
  const double first = theta(0, 0);
  rmsprop_update(theta, Matrix::Ones(1, 1), v, opt);
  CHECK(v(0, 0) == doctest::Approx(0.19).epsilon(1e-12));
  CHECK(std::abs((theta(0, 0) - first) - (-0.0229416)) < 1e-6);

  Matrix t2 = Matrix::Constant(1, 1, 0.7);
  Matrix v2 = Matrix::Constant(1, 1, 0.5);
  rmsprop_update(t2, Matrix::Zero(1, 1), v2, opt);
  CHECK(t2(0, 0) == 0.7);
  CHECK(v2(0, 0) == doctest::Approx(0.45));
}

TEST_CASE("checkpoints round-trip values and metadata") {
  test_util::TempDir dir;
  std::mt19937_64 rng(5);
  auto a = DenseLayer::make(3, 2, Activation::ReLU, rng);
  auto b = DenseLayer::make(3, 2, Activation::ReLU, rng);
  ParameterSet pa, pb;
  pa.add_layer("x", a);
  pb.add_layer("x", b);
  write_checkpoint(dir.path() / "m.dcck", pa, {{"note", "hi"}});
  const auto extra = read_checkpoint(dir.path() / "m.dcck", pb);
  CHECK(extra.at("note") == "hi");
  CHECK((a.weight->value - b.weight->value).cwiseAbs().maxCoeff() < 1e-7);

  ParameterSet wrong;
  wrong.add_layer("x", DenseLayer::make(4, 2, Activation::ReLU, rng));
  CHECK_THROWS(read_checkpoint(dir.path() / "m.dcck", wrong));
}
