#include "decan/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>

#include "decan/binary_io.hpp"

namespace decan::nn {

using nlohmann::json;

std::string_view to_string(Activation a) { return a == Activation::ReLU ? "relu" : "identity"; }

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

DenseLayer DenseLayer::make(int in, int out, Activation activation, std::mt19937_64& rng, std::string shared_tag) {
  if (in < 1 || out < 1) throw std::invalid_argument("DenseLayer: dimensions must be positive");
  const double limit = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(out, in);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  }
  DenseLayer layer;
  layer.weight = std::make_shared<Parameter>(std::move(w));
  layer.bias = std::make_shared<Parameter>(Matrix::Zero(out, 1));
  layer.activation = activation;
  layer.shared_tag = std::move(shared_tag);
  return layer;
}

namespace {

void check_chain(std::span<const DenseLayer> layers, const Matrix& input) {
  Eigen::Index width = input.cols();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].in_dim() != width) {
      throw std::invalid_argument("dimension mismatch at layer " + std::to_string(i) + ": expected " +
                                  std::to_string(layers[i].in_dim()) + " inputs, got " + std::to_string(width));
    }
    width = layers[i].out_dim();
  }
}

Matrix affine(const DenseLayer& l, const Matrix& x) {
  l.weight->reads.fetch_add(1, std::memory_order_relaxed);
  l.bias->reads.fetch_add(1, std::memory_order_relaxed);
  Matrix z = x * l.weight->value.transpose();
  z.rowwise() += l.bias->value.col(0).transpose();
  return z;
}

thread_local std::uint64_t* g_sign_digest = nullptr;

double ulp(double x) {
  const double a = std::abs(x);
  return std::nextafter(a, std::numeric_limits<double>::infinity()) - a;
}

// Folds the ReLU on/off pattern into the active probe, if any.
void record_signs(const Matrix& z) {
  std::uint64_t h = *g_sign_digest;
  for (Eigen::Index i = 0; i < z.size(); ++i) h = (h ^ (z.data()[i] > 0.0 ? 0x9eULL : 0x3bULL)) * 0x100000001b3ULL;
  *g_sign_digest = h;
}

Matrix activate(Activation a, const Matrix& z) {
  if (a != Activation::ReLU) return z;
  if (g_sign_digest) record_signs(z);
  return z.cwiseMax(0.0);
}

}  // namespace

ForwardCache forward(std::span<const DenseLayer> layers, const Matrix& input) {
  check_chain(layers, input);
  ForwardCache cache;
  cache.input = input;
  cache.layers.reserve(layers.size());
  const Matrix* x = &cache.input;
  for (const auto& l : layers) {
    LayerCache lc;
    lc.input = *x;
    lc.pre = affine(l, lc.input);
    lc.output = activate(l.activation, lc.pre);
    lc.weight_version = l.weight->version;
    lc.bias_version = l.bias->version;
    cache.layers.push_back(std::move(lc));
    x = &cache.layers.back().output;
  }
  return cache;
}

Matrix infer(std::span<const DenseLayer> layers, const Matrix& input) {
  check_chain(layers, input);
  Matrix x = input;
  for (const auto& l : layers) x = activate(l.activation, affine(l, x));
  return x;
}

Matrix backward(std::span<const DenseLayer> layers, const ForwardCache& cache, const Matrix& upstream) {
  if (cache.layers.size() != layers.size()) throw std::logic_error("stale forward cache: layer count differs");
  if (upstream.rows() != cache.output().rows() || upstream.cols() != cache.output().cols()) {
    throw std::invalid_argument("backward: upstream gradient shape does not match the forward output");
  }
  Matrix grad = upstream;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& l = layers[k];
    const auto& lc = cache.layers[k];
    if (lc.weight_version != l.weight->version || lc.bias_version != l.bias->version ||
        lc.input.cols() != l.in_dim()) {
      throw std::logic_error("stale forward cache at layer " + std::to_string(k));
    }
    if (l.activation == Activation::ReLU) grad = grad.cwiseProduct((lc.pre.array() > 0.0).cast<double>().matrix());
    l.weight->grad.noalias() += grad.transpose() * lc.input;
    l.bias->grad.col(0) += grad.colwise().sum().transpose();
    grad = grad * l.weight->value;
  }
  return grad;
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

LossAndGrad softmax_cross_entropy(const Matrix& logits, std::span<const int> targets) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index k = logits.cols();
  if (static_cast<std::size_t>(n) != targets.size()) throw std::invalid_argument("cross entropy: target count mismatch");
  if (n == 0) throw std::invalid_argument("cross entropy: empty batch");
  LossAndGrad out;
  out.grad = softmax(logits);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= k) throw std::invalid_argument("cross entropy: target " + std::to_string(t) + " out of range");
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    total += lse - logits(i, t);
    out.grad(i, t) -= 1.0;
  }
  out.loss = total / static_cast<double>(n);
  out.grad /= static_cast<double>(n);
  return out;
}

void ParameterSet::add(const std::string& name, const ParamPtr& p) {
  for (const auto& q : params_) {
    if (q == p) return;
  }
  params_.push_back(p);
  names_.push_back(name);
}

void ParameterSet::add_layer(const std::string& name, const DenseLayer& layer) {
  add(name + ".weight", layer.weight);
  add(name + ".bias", layer.bias);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

double ParameterSet::max_abs_grad() const {
  double m = 0.0;
  for (const auto& p : params_) {
    if (p->grad.size() > 0) m = std::max(m, p->grad.cwiseAbs().maxCoeff());
  }
  return m;
}

bool ParameterSet::grads_finite() const {
  for (const auto& p : params_) {
    if (!p->grad.allFinite()) return false;
  }
  return true;
}

RmspropState::RmspropState(const ParameterSet& params, RmspropOptions opts) : options(opts) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    mean_square.push_back(Matrix::Zero(params[i]->value.rows(), params[i]->value.cols()));
  }
}

void rmsprop_update(Matrix& theta, const Matrix& grad, Matrix& mean_square, const RmspropOptions& o) {
  if (theta.rows() != grad.rows() || theta.cols() != grad.cols() || mean_square.rows() != grad.rows() ||
      mean_square.cols() != grad.cols()) {
    throw std::invalid_argument("rmsprop: shape mismatch");
  }
  mean_square.array() = o.rho * mean_square.array() + (1.0 - o.rho) * grad.array().square();
  theta.array() -= o.learning_rate * grad.array() / (mean_square.array().sqrt() + o.epsilon);
}

void rmsprop_step(ParameterSet& params, RmspropState& state) {
  if (state.mean_square.size() != params.size()) throw std::invalid_argument("rmsprop: state/parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    rmsprop_update(p.value, p.grad, state.mean_square[i], state.options);
    ++p.version;
  }
}

ActivationProbe::ActivationProbe() : previous_(g_sign_digest) { g_sign_digest = &digest_; }

ActivationProbe::~ActivationProbe() { g_sign_digest = previous_; }

GradCheckResult gradient_check(ParameterSet& params, const std::function<double()>& loss,
                               const std::function<void()>& loss_and_backward, double h, double tolerance) {
  // Loss plus the ReLU pattern it was computed under.
  auto probe = [&] {
    ActivationProbe p;
    const double l = loss();
    return std::pair{l, p.digest()};
  };
  const auto base_pattern = probe().second;
  loss_and_backward();
  std::vector<Matrix> analytic;
  for (std::size_t i = 0; i < params.size(); ++i) analytic.push_back(params[i]->grad);

  GradCheckResult r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    for (Eigen::Index j = 0; j < p.value.size(); ++j) {
      double& v = p.value.data()[j];
      const double saved = v;
      v = saved + h;
      const auto [up, up_pattern] = probe();
      v = saved - h;
      const auto [down, down_pattern] = probe();
      v = saved;
      if (up_pattern != base_pattern || down_pattern != base_pattern) {
        ++r.kinks;
        continue;
      }
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i].data()[j];
      const double diff = std::abs(a - numeric);
      const double rel = diff / (std::abs(a) + 1e-8);
      const double noise = 8.0 * std::max(ulp(up), ulp(down)) / (2.0 * h);
      ++r.checked;
      if (rel >= tolerance) {
        if (diff <= noise) {
          ++r.roundoff;
        } else {
          ++r.failures;
        }
      }
      if (rel > r.max_relative_error) {
        r.max_relative_error = rel;
        r.worst = params.name(i) + "[" + std::to_string(j) + "]";
      }
    }
  }
  return r;
}

namespace {
constexpr std::string_view kMagic = "DECANCK1";
}

void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const json& extra) {
  json header = extra;
  json layers = json::array();
  FramedFile f;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = params[i]->value;
    layers.push_back({{"name", params.name(i)}, {"rows", v.rows()}, {"cols", v.cols()}});
    // Row-major order on disk.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = v;
    append_f32_le(f.payload, std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())));
  }
  header["parameters"] = layers;
  f.header_json = header.dump();
  write_file_bytes(path, encode_framed(kMagic, f));
}

json read_checkpoint_header(const std::filesystem::path& path) {
  const FramedFile f = decode_framed(kMagic, read_file_bytes(path), path.string());
  return json::parse(f.header_json);
}

json read_checkpoint(const std::filesystem::path& path, ParameterSet& params) {
  const FramedFile f = decode_framed(kMagic, read_file_bytes(path), path.string());
  const json header = json::parse(f.header_json);
  const auto& layers = header.at("parameters");
  if (layers.size() != params.size()) throw std::runtime_error("checkpoint parameter count mismatch: " + path.string());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& l = layers[i];
    auto& v = params[i]->value;
    if (l.at("name").get<std::string>() != params.name(i) || l.at("rows").get<Eigen::Index>() != v.rows() ||
        l.at("cols").get<Eigen::Index>() != v.cols()) {
      throw std::runtime_error("checkpoint layout mismatch at " + params.name(i));
    }
    const auto bytes = static_cast<std::size_t>(v.size()) * 4;
    if (offset + bytes > f.payload.size()) throw std::runtime_error("truncated checkpoint: " + path.string());
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(v.rows(), v.cols());
    read_f32_le(std::span<const char>(f.payload.data() + offset, bytes),
                std::span<double>(rm.data(), static_cast<std::size_t>(rm.size())));
    v = rm;
    ++params[i]->version;
    offset += bytes;
  }
  if (offset != f.payload.size()) throw std::runtime_error("trailing bytes in checkpoint: " + path.string());
  return header;
}

}  // namespace decan::nn
