#include "decan/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "decan/log.hpp"

namespace decan::model {

using nlohmann::json;
using nn::Activation;
using nn::DenseLayer;

std::string_view to_string(ContrastiveMode mode) {
  return mode == ContrastiveMode::StrictPaper ? "strict_paper" : "inclusive_positive";
}

ContrastiveMode contrastive_mode_from_string(std::string_view name) {
  if (name == "strict_paper" || name == "StrictPaper") return ContrastiveMode::StrictPaper;
  if (name == "inclusive_positive" || name == "InclusivePositive") return ContrastiveMode::InclusivePositive;
  throw std::invalid_argument("unknown contrastive mode: " + std::string(name));
}

void DecanConfig::validate() const {
  std::vector<std::string> errors;
  if (wet_input_dim < 1) errors.push_back("wet_input_dim must be positive");
  if (dry_input_dim < 1) errors.push_back("dry_input_dim must be positive");
  if (hidden.size() < 2) errors.push_back("hidden needs at least two layers (adapter width and latent width)");
  for (int h : hidden) {
    if (h < 1) errors.push_back("hidden sizes must be positive");
  }
  if (projector_hidden < 1) errors.push_back("projector_hidden must be positive");
  if (projector_out < 1) errors.push_back("projector_out must be positive");
  if (num_classes < 2) errors.push_back("num_classes must be >= 2");
  if (!(temperature > 0.0)) errors.push_back("temperature must be > 0");
  if (!(learning_rate > 0.0)) errors.push_back("learning_rate must be > 0");
  if (epochs < 1) errors.push_back("epochs must be >= 1");
  if (batch_size < 2) errors.push_back("batch_size must be >= 2");
  if (patience < 1) errors.push_back("patience must be >= 1");
  if (!errors.empty()) {
    std::string msg = "invalid DECAN config:";
    for (const auto& e : errors) msg += " " + e + ";";
    throw std::invalid_argument(msg);
  }
}

json to_json(const DecanConfig& c) {
  return {
      {"wet_input_dim", c.wet_input_dim},
      {"dry_input_dim", c.dry_input_dim},
      {"hidden", c.hidden},
      {"projector_hidden", c.projector_hidden},
      {"projector_out", c.projector_out},
      {"num_classes", c.num_classes},
      {"temperature", c.temperature},
      {"contrastive_mode", std::string(to_string(c.contrastive_mode))},
      {"symmetric_loss", c.symmetric_loss},
      {"use_contrastive", c.use_contrastive},
      {"learning_rate", c.learning_rate},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"patience", c.patience},
      {"min_improvement", c.min_improvement},
      {"seed", c.seed},
  };
}

DecanConfig decan_config_from_json(const json& j) {
  DecanConfig c;
  c.wet_input_dim = j.value("wet_input_dim", c.wet_input_dim);
  c.dry_input_dim = j.value("dry_input_dim", c.dry_input_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.projector_hidden = j.value("projector_hidden", c.projector_hidden);
  c.projector_out = j.value("projector_out", c.projector_out);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.temperature = j.value("temperature", c.temperature);
  if (j.contains("contrastive_mode")) {
    c.contrastive_mode = contrastive_mode_from_string(j.at("contrastive_mode").get<std::string>());
  }
  c.symmetric_loss = j.value("symmetric_loss", c.symmetric_loss);
  c.use_contrastive = j.value("use_contrastive", c.use_contrastive);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.patience = j.value("patience", c.patience);
  c.min_improvement = j.value("min_improvement", c.min_improvement);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<double> learning_rate_grid() {
  std::vector<double> grid;
  for (double scale : {1e-4, 1e-3, 1e-2}) {
    for (int m : {1, 3, 5, 7, 9}) grid.push_back(m * scale);
  }
  return grid;
}

std::vector<int> projector_hidden_grid() { return {64, 128, 256, 512}; }

DecanModel::DecanModel(const DecanConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const int adapter_width = config_.hidden.front();
  wet_stack_ = DenseLayer::make(config_.wet_input_dim, adapter_width, Activation::ReLU, rng);
  dry_adapter_ = DenseLayer::make(config_.dry_input_dim, adapter_width, Activation::ReLU, rng);
  for (std::size_t i = 1; i < config_.hidden.size(); ++i) {
    trunk_.push_back(DenseLayer::make(config_.hidden[i - 1], config_.hidden[i], Activation::ReLU, rng,
                                      "trunk." + std::to_string(i - 1)));
  }
  const int latent = config_.latent_dim();
  projector_.push_back(DenseLayer::make(latent, config_.projector_hidden, Activation::ReLU, rng, "projector.0"));
  projector_.push_back(
      DenseLayer::make(config_.projector_hidden, config_.projector_out, Activation::Identity, rng, "projector.1"));
  classifier_.push_back(DenseLayer::make(latent, config_.num_classes, Activation::Identity, rng, "classifier"));

  params_.add_layer("wet_stack", wet_stack_);
  params_.add_layer("dry_adapter", dry_adapter_);
  for (const auto& l : trunk_) params_.add_layer(l.shared_tag, l);
  for (const auto& l : projector_) params_.add_layer(l.shared_tag, l);
  params_.add_layer("classifier", classifier_.front());
}

std::vector<DenseLayer> DecanModel::encoder(DeviceKind device) const {
  std::vector<DenseLayer> layers;
  layers.push_back(device == DeviceKind::Wet ? wet_stack_ : dry_adapter_);
  layers.insert(layers.end(), trunk_.begin(), trunk_.end());
  return layers;
}

std::uint64_t DecanModel::wet_stack_reads() const {
  return wet_stack_.weight->reads.load() + wet_stack_.bias->reads.load();
}

Matrix encode(const DecanModel& model, const Matrix& features, DeviceKind device) {
  return nn::infer(model.encoder(device), features);
}

Matrix project(const DecanModel& model, const Matrix& latent) { return nn::infer(model.projector(), latent); }

double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    log::warn("cosine_similarity: zero-norm vector, similarity defined as 0");
    return 0.0;
  }
  return a.dot(b) / (na * nb);
}

namespace {

// Normalised rows and norms; zero rows stay zero.
Matrix normalise_rows(const Matrix& x, Vector& norms, bool& saw_zero) {
  norms = x.rowwise().norm();
  Matrix out = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (norms(i) > 0.0) {
      out.row(i) /= norms(i);
    } else {
      out.row(i).setZero();
      saw_zero = true;
    }
  }
  return out;
}

// dL/dx for x = n * xhat, given dL/dxhat.
Matrix unnormalise_grad(const Matrix& xhat, const Vector& norms, const Matrix& g_hat) {
  Matrix g(xhat.rows(), xhat.cols());
  for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
    if (norms(i) > 0.0) {
      const double radial = g_hat.row(i).dot(xhat.row(i));
      g.row(i) = (g_hat.row(i) - radial * xhat.row(i)) / norms(i);
    } else {
      g.row(i).setZero();
    }
  }
  return g;
}

// Adds the anchored loss over rows of `logits` (anchor i, candidates j) and its
// gradient dL/dlogits into `grad`.
double anchored_loss(const Matrix& logits, ContrastiveMode mode, Matrix& grad) {
  const Eigen::Index t = logits.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < t; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < t; ++j) {
      if (mode == ContrastiveMode::StrictPaper && j == i) continue;
      mx = std::max(mx, logits(i, j));
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < t; ++j) {
      if (mode == ContrastiveMode::StrictPaper && j == i) continue;
      sum += std::exp(logits(i, j) - mx);
    }
    const double lse = mx + std::log(sum);
    total += lse - logits(i, i);
    for (Eigen::Index j = 0; j < t; ++j) {
      if (mode == ContrastiveMode::StrictPaper && j == i) continue;
      grad(i, j) += std::exp(logits(i, j) - lse);
    }
    grad(i, i) -= 1.0;
  }
  return total;
}

}  // namespace

ContrastiveResult contrastive_loss(const Matrix& wet_proj, const Matrix& dry_proj, double temperature,
                                   ContrastiveMode mode, bool symmetric, bool want_grad) {
  if (wet_proj.rows() != dry_proj.rows() || wet_proj.cols() != dry_proj.cols()) {
    throw std::invalid_argument("contrastive_loss: projection shapes differ");
  }
  if (wet_proj.rows() < 2) throw std::invalid_argument("contrastive_loss: need T >= 2 (no negatives)");
  if (!(temperature > 0.0)) throw std::invalid_argument("contrastive_loss: temperature must be > 0");

  bool saw_zero = false;
  Vector nw, nd;
  const Matrix a = normalise_rows(wet_proj, nw, saw_zero);
  const Matrix b = normalise_rows(dry_proj, nd, saw_zero);
  if (saw_zero) log::warn("contrastive_loss: zero-norm projection, its similarities are 0");

  ContrastiveResult r;
  r.similarity = a * b.transpose();
  const Matrix logits = r.similarity / temperature;
  Matrix dlogits = Matrix::Zero(logits.rows(), logits.cols());
  r.loss = anchored_loss(logits, mode, dlogits);
  if (symmetric) {
    Matrix dt = Matrix::Zero(logits.rows(), logits.cols());
    r.loss += anchored_loss(logits.transpose(), mode, dt);
    dlogits += dt.transpose();
  }
  if (want_grad) {
    const Matrix ds = dlogits / temperature;
    r.grad_wet = unnormalise_grad(a, nw, ds * b);
    r.grad_dry = unnormalise_grad(b, nd, ds.transpose() * a);
  }
  return r;
}

LossComponents total_loss(DecanModel& model, const PairedBatch& batch, bool accumulate_grad) {
  const auto& cfg = model.config();
  if (batch.wet_features.rows() != batch.size() || batch.dry_features.rows() != batch.size()) {
    throw std::invalid_argument("total_loss: batch rows do not match label count");
  }
  const auto wet_enc = model.encoder(DeviceKind::Wet);
  const auto dry_enc = model.encoder(DeviceKind::Dry);
  const auto cw = nn::forward(wet_enc, batch.wet_features);
  const auto cd = nn::forward(dry_enc, batch.dry_features);
  const auto hw = nn::forward(model.classifier(), cw.output());
  const auto hd = nn::forward(model.classifier(), cd.output());
  const auto ce_w = nn::softmax_cross_entropy(hw.output(), batch.labels);
  const auto ce_d = nn::softmax_cross_entropy(hd.output(), batch.labels);

  LossComponents out;
  out.wet = ce_w.loss;
  out.dry = ce_d.loss;

  Matrix dvw, dvd;
  if (accumulate_grad) {
    dvw = nn::backward(model.classifier(), hw, ce_w.grad);
    dvd = nn::backward(model.classifier(), hd, ce_d.grad);
  }
  if (cfg.use_contrastive) {
    const auto pw = nn::forward(model.projector(), cw.output());
    const auto pd = nn::forward(model.projector(), cd.output());
    const auto cl = contrastive_loss(pw.output(), pd.output(), cfg.temperature, cfg.contrastive_mode,
                                     cfg.symmetric_loss, accumulate_grad);
    out.contrastive = cl.loss;
    if (accumulate_grad) {
      dvw += nn::backward(model.projector(), pw, cl.grad_wet);
      dvd += nn::backward(model.projector(), pd, cl.grad_dry);
    }
  }
  if (accumulate_grad) {
    nn::backward(wet_enc, cw, dvw);
    nn::backward(dry_enc, cd, dvd);
  }
  out.total = out.wet + out.dry + out.contrastive;
  return out;
}

TrainingDiverged::TrainingDiverged(int e, std::string comp, double g)
    : std::runtime_error("training diverged at epoch " + std::to_string(e) + ": non-finite " + comp +
                         " (max |grad| = " + std::to_string(g) + ")"),
      epoch(e),
      component(std::move(comp)),
      max_abs_grad(g) {}

namespace {

PairedBatch take_rows(const PairedBatch& b, std::span<const Eigen::Index> rows) {
  PairedBatch out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.wet_features.resize(n, b.wet_features.cols());
  out.dry_features.resize(n, b.dry_features.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    out.wet_features.row(i) = b.wet_features.row(r);
    out.dry_features.row(i) = b.dry_features.row(r);
    out.labels.push_back(b.labels[static_cast<std::size_t>(r)]);
    if (!b.origins.empty()) out.origins.push_back(b.origins[static_cast<std::size_t>(r)]);
  }
  return out;
}

std::string non_finite_component(const LossComponents& l) {
  if (!std::isfinite(l.wet)) return "L_W";
  if (!std::isfinite(l.dry)) return "L_D";
  if (!std::isfinite(l.contrastive)) return "L_CL";
  if (!std::isfinite(l.total)) return "L";
  return {};
}

}  // namespace

TrainResult train(DecanModel& model, std::span<const PairedBatch> batches,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  const auto& cfg = model.config();
  for (const auto& b : batches) {
    if (b.size() < 2) throw std::invalid_argument("train: every batch needs at least two pairs");
  }
  if (batches.empty()) throw std::invalid_argument("train: no batches");

  auto& params = model.parameters();
  nn::RmspropState opt(params, nn::RmspropOptions{cfg.learning_rate, 0.9, 1e-8});
  std::mt19937_64 rng(cfg.seed ^ 0x7261696eull);

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossComponents sum;
    double rows = 0.0;
    for (const auto& batch : batches) {
      std::vector<PairedBatch> chunks;
      const PairedBatch* whole = &batch;
      if (batch.size() > cfg.batch_size) {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(batch.size()));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t k = (order.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                              static_cast<std::size_t>(cfg.batch_size);
        for (std::size_t c = 0; c < k; ++c) {
          const std::size_t lo = c * order.size() / k;
          const std::size_t hi = (c + 1) * order.size() / k;
          chunks.push_back(take_rows(batch, std::span<const Eigen::Index>(order.data() + lo, hi - lo)));
        }
        whole = nullptr;
      }
      auto step = [&](const PairedBatch& chunk) {
        params.zero_grad();
        const LossComponents l = total_loss(model, chunk, true);
        if (auto comp = non_finite_component(l); !comp.empty()) {
          throw TrainingDiverged(epoch, comp, params.max_abs_grad());
        }
        if (!params.grads_finite()) throw TrainingDiverged(epoch, "gradient", params.max_abs_grad());
        nn::rmsprop_step(params, opt);
        const double w = chunk.size();
        sum.total += w * l.total;
        sum.wet += w * l.wet;
        sum.dry += w * l.dry;
        sum.contrastive += w * l.contrastive;
        rows += w;
      };
      if (whole) {
        step(*whole);
      } else {
        for (const auto& c : chunks) step(c);
      }
    }
    EpochRecord rec{epoch, {sum.total / rows, sum.wet / rows, sum.dry / rows, sum.contrastive / rows}};
    result.history.push_back(rec);
    result.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(rec);
    if (rec.loss.total < best - cfg.min_improvement) {
      best = rec.loss.total;
      best_epoch = epoch;
    } else if (epoch - best_epoch >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

DryPrediction predict_dry(const DecanModel& model, const Matrix& dry_features) {
  if (dry_features.cols() != model.config().dry_input_dim) {
    throw std::invalid_argument("predict_dry: expected " + std::to_string(model.config().dry_input_dim) +
                                " features, got " + std::to_string(dry_features.cols()));
  }
  DryPrediction p;
  p.latents = nn::infer(model.encoder(DeviceKind::Dry), dry_features);
  p.probabilities = nn::softmax(nn::infer(model.classifier(), p.latents));
  p.labels = argmax_rows(p.probabilities);
  return p;
}

void save_model(const std::filesystem::path& path, const DecanModel& model, const json& extra) {
  json header = extra.is_object() ? extra : json::object();
  header["decan_config"] = to_json(model.config());
  header["seed"] = model.config().seed;
  json sharing = json::object();
  for (const auto& l : model.trunk()) sharing[l.shared_tag] = {"wet", "dry"};
  for (const auto& l : model.projector()) sharing[l.shared_tag] = {"wet", "dry"};
  sharing["classifier"] = {"wet", "dry"};
  header["sharing"] = sharing;
  nn::write_checkpoint(path, model.parameters(), header);
}

DecanModel load_model(const std::filesystem::path& path) {
  const json header = nn::read_checkpoint_header(path);
  DecanModel model(decan_config_from_json(header.at("decan_config")));
  nn::read_checkpoint(path, model.parameters());
  return model;
}

}  // namespace decan::model
