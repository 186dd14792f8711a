#include "decan/config.hpp"

#include <cctype>
#include <charconv>
#include <stdexcept>

#include "decan/binary_io.hpp"

namespace decan::cli {

using nlohmann::json;

namespace {

class TomlParser {
 public:
  explicit TomlParser(std::string_view text) : s_(text) {}

  json document() {
    json root = json::object();
    json* table = &root;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        if (peek() == '[') fail("arrays of tables are not supported");
        skip_ws();
        const auto path = key_path();
        skip_ws();
        expect(']');
        table = &descend(root, path, true);
      } else {
        const auto path = key_path();
        skip_ws();
        expect('=');
        skip_ws();
        json v = value();
        json* parent = &descend(*table, std::vector<std::string>(path.begin(), path.end() - 1), false);
        if (parent->contains(path.back())) fail("duplicate key '" + path.back() + "'");
        (*parent)[path.back()] = std::move(v);
      }
      end_of_line();
    }
    return root;
  }

  json single_value() {
    skip_ws();
    json v = value();
    skip_ws();
    if (!eof()) fail("trailing characters after value");
    return v;
  }

 private:
  std::string_view s_;
  std::size_t pos_{0};

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }

  int line() const {
    int n = 1;
    for (std::size_t i = 0; i < pos_ && i < s_.size(); ++i) n += s_[i] == '\n' ? 1 : 0;
    return n;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::invalid_argument("config parse error at line " + std::to_string(line()) + ": " + msg);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') ++pos_;
    }
  }

  // Whitespace, newlines and comments (inside arrays and between statements).
  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (!eof() && peek() != '\n') fail("unexpected characters after value");
  }

  std::string bare_or_quoted_key() {
    if (peek() == '"' || peek() == '\'') return string_value();
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++pos_;
    if (pos_ == start) fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  std::vector<std::string> key_path() {
    std::vector<std::string> parts{bare_or_quoted_key()};
    skip_ws();
    while (peek() == '.') {
      ++pos_;
      skip_ws();
      parts.push_back(bare_or_quoted_key());
      skip_ws();
    }
    return parts;
  }

  json& descend(json& root, const std::vector<std::string>& path, bool header) {
    json* cur = &root;
    for (const auto& p : path) {
      if (!cur->contains(p)) (*cur)[p] = json::object();
      cur = &(*cur)[p];
      if (!cur->is_object()) fail("key '" + p + "' is not a table");
    }
    (void)header;
    return *cur;
  }

  std::string string_value() {
    const char quote = peek();
    ++pos_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = s_[pos_++];
      if (c == quote) break;
      if (c == '\\' && quote == '"') {
        if (eof()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n':
            out += '\n';
            break;
          case 't':
            out += '\t';
            break;
          case '\\':
            out += '\\';
            break;
          case '"':
            out += '"';
            break;
          default:
            fail(std::string("unsupported escape \\") + e);
        }
      } else {
        out += c;
      }
    }
    return out;
  }

  json number_or_bool() {
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                      peek() == '.' || peek() == '_')) {
      ++pos_;
    }
    std::string tok(s_.substr(start, pos_ - start));
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::erase(tok, '_');
    if (tok.empty()) fail("expected a value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos || tok == "inf" || tok == "nan";
    const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
    const char* e = tok.data() + tok.size();
    if (!is_float) {
      long long v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec == std::errc() && p == e) return v;
    } else {
      double v = 0.0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec == std::errc() && p == e) return v;
    }
    fail("invalid value '" + tok + "'");
  }

  json value() {
    const char c = peek();
    if (c == '"' || c == '\'') return string_value();
    if (c == '[') {
      ++pos_;
      json arr = json::array();
      while (true) {
        skip_blank_lines();
        if (peek() == ']') {
          ++pos_;
          break;
        }
        arr.push_back(value());
        skip_blank_lines();
        if (peek() == ',') {
          ++pos_;
        } else if (peek() == ']') {
          ++pos_;
          break;
        } else {
          fail("expected ',' or ']' in array");
        }
      }
      return arr;
    }
    if (c == '{') {
      ++pos_;
      json obj = json::object();
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        return obj;
      }
      while (true) {
        skip_ws();
        const auto path = key_path();
        skip_ws();
        expect('=');
        skip_ws();
        json* parent = &descend(obj, std::vector<std::string>(path.begin(), path.end() - 1), false);
        (*parent)[path.back()] = value();
        skip_ws();
        if (peek() == ',') {
          ++pos_;
        } else {
          expect('}');
          break;
        }
      }
      return obj;
    }
    return number_or_bool();
  }
};

const char* type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "table";
  return "null";
}

bool compatible(const json& def, const json& v) {
  if (def.is_null()) return true;
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return false;
}

void merge(json& base, const json& user, const std::string& prefix, std::vector<std::string>& errors) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) {
      errors.push_back("unknown key '" + path + "'");
      continue;
    }
    json& slot = base[it.key()];
    if (!compatible(slot, it.value())) {
      errors.push_back("key '" + path + "' expects a " + type_name(slot) + ", got a " + type_name(it.value()));
      continue;
    }
    if (slot.is_object()) {
      merge(slot, it.value(), path, errors);
    } else {
      slot = it.value();
    }
  }
}

std::vector<features::Band> parse_bands(const json& j, const std::string& where, std::vector<std::string>& errors) {
  std::vector<features::Band> out;
  for (const auto& b : j) {
    try {
      out.push_back(features::band_from_string(b.get<std::string>()));
    } catch (const std::exception& e) {
      errors.push_back(where + ": " + e.what());
    }
  }
  if (out.empty()) errors.push_back(where + ": at least one band is required");
  return out;
}

// Runs `fn`, turning an exception into an error entry.
template <typename F>
void collect(std::vector<std::string>& errors, const std::string& where, F&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    errors.push_back(where + ": " + e.what());
  }
}

}  // namespace

json parse_toml(std::string_view text) { return TomlParser(text).document(); }

json parse_toml_value(std::string_view text) { return TomlParser(text).single_value(); }

json load_config_file(const std::filesystem::path& path) {
  const std::string text = read_file_bytes(path);
  if (path.extension() == ".json") {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("config parse error in " + path.string() + ": " + e.what());
    }
  }
  return parse_toml(text);
}

json default_config() {
  const SyntheticConfig syn;
  const dsp::PreprocessOptions pre;
  const features::LdsParams lds;
  // Run configs default to a desk-scale training budget (equal for DECAN and
  // the DNN baseline); the library structs keep the 15,000-epoch full setting.
  model::DecanConfig m;
  m.epochs = kDeskEpochs;
  m.batch_size = kDeskBatchSize;
  eval::BaselineConfig b;
  b.dnn_epochs = kDeskEpochs;
  b.dnn_batch_size = kDeskBatchSize;
  const std::vector<std::string> all_bands{"delta", "theta", "alpha", "beta", "gamma"};
  return {
      {"seed", 7},
      {"out", "out"},
      {"data", {{"manifest", ""}, {"external_manifest", ""}}},
      {"synthetic",
       {{"n_subjects", syn.n_subjects},
        {"n_blocks", syn.n_blocks},
        {"trials_per_block", syn.trials_per_block},
        {"trial_seconds", syn.trial_seconds},
        {"latent_dim", syn.latent_dim},
        {"wet_channels", syn.wet_channels},
        {"dry_channels", syn.dry_channels},
        {"wet_noise_sigma", syn.wet_noise_sigma},
        {"dry_noise_sigma", syn.dry_noise_sigma},
        {"dry_noise_drift", syn.dry_noise_drift},
        {"source_dynamics", syn.source_dynamics},
        {"wet_rate_hz", syn.wet_rate_hz},
        {"dry_rate_hz", syn.dry_rate_hz},
        {"class_contrast", syn.class_contrast},
        {"trial_jitter", syn.trial_jitter},
        {"subject_jitter", syn.subject_jitter},
        {"components_per_band", syn.components_per_band}}},
      {"dsp",
       {{"band_low_hz", pre.band_low_hz},
        {"band_high_hz", pre.band_high_hz},
        {"band_order", pre.band_order},
        {"notch_hz", pre.notch_hz},
        {"notch_q", pre.notch_q},
        {"target_rate_hz", pre.target_rate_hz}}},
      {"features",
       {{"bands", all_bands},
        {"segment_seconds", 5.0},
        {"filter_order", 4},
        {"smooth", true},
        {"lds",
         {{"transition", lds.transition},
          {"observation", lds.observation},
          {"process_var", lds.process_var},
          {"observation_var", lds.observation_var},
          {"init_var", lds.init_var}}}}},
      {"model",
       {{"hidden", m.hidden},
        {"projector_hidden", m.projector_hidden},
        {"projector_out", m.projector_out},
        {"temperature", m.temperature},
        {"contrastive_mode", std::string(model::to_string(m.contrastive_mode))},
        {"symmetric_loss", m.symmetric_loss},
        {"use_contrastive", m.use_contrastive},
        {"learning_rate", m.learning_rate},
        {"epochs", m.epochs},
        {"batch_size", m.batch_size},
        {"patience", m.patience},
        {"min_improvement", m.min_improvement}}},
      {"train", {{"holdout_subjects", json::array()}}},
      {"eval",
       {{"scheme", "LOBO"},
        {"methods", {"dnn", "decan"}},
        {"device", "dry"},
        {"band_masks", json::array({all_bands})},
        {"pairing", "intra_subject"},
        {"wet_subject", 1},
        {"mixed_subjects", false},
        {"num_classes", 5},
        {"ablation", false},
        {"band_sweep", false},
        {"export_latents", true},
        {"baseline",
         {{"lr_l2", b.lr_l2},
          {"lr_iterations", b.lr_iterations},
          {"svm_c_grid", b.svm_c_grid},
          {"svm_iterations", b.svm_iterations},
          {"svm_inner_folds", b.svm_inner_folds},
          {"dnn_learning_rate", b.dnn_learning_rate},
          {"dnn_epochs", b.dnn_epochs},
          {"dnn_batch_size", b.dnn_batch_size},
          {"dnn_patience", b.dnn_patience},
          {"dnn_min_improvement", b.dnn_min_improvement}}}}},
      {"report", {{"inputs", json::array()}}},
  };
}

void apply_override(json& tree, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw std::invalid_argument("override '" + std::string(assignment) + "' must look like block.key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string_view raw = assignment.substr(eq + 1);
  json value;
  try {
    value = parse_toml_value(raw);
  } catch (const std::invalid_argument&) {
    value = std::string(raw);  // bare strings are accepted unquoted
  }
  json* cur = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw std::invalid_argument("override '" + std::string(assignment) + "' has an empty key part");
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      break;
    }
    if (!cur->contains(part) || !(*cur)[part].is_object()) (*cur)[part] = json::object();
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

std::string config_hash(const json& resolved) { return fnv1a_hex(resolved.dump()); }

RunConfig resolve_config(const json& user) {
  if (!user.is_object()) throw std::invalid_argument("config must be a table");
  json tree = default_config();
  std::vector<std::string> errors;
  merge(tree, user, "", errors);

  // Rejected entries keep their defaults, so value checks still run on a well-typed tree.
  RunConfig rc;
  {
    rc.out_dir = tree["out"].get<std::string>();
    rc.seed = tree["seed"].get<std::uint64_t>();
    rc.dataset_manifest = tree["data"]["manifest"].get<std::string>();
    rc.external_manifest = tree["data"]["external_manifest"].get<std::string>();

    const json& sy = tree["synthetic"];
    auto& s = rc.synthetic;
    s.n_subjects = sy["n_subjects"];
    s.n_blocks = sy["n_blocks"];
    s.trials_per_block = sy["trials_per_block"];
    s.trial_seconds = sy["trial_seconds"];
    s.latent_dim = sy["latent_dim"];
    s.wet_channels = sy["wet_channels"];
    s.dry_channels = sy["dry_channels"];
    s.wet_noise_sigma = sy["wet_noise_sigma"];
    s.dry_noise_sigma = sy["dry_noise_sigma"];
    s.dry_noise_drift = sy["dry_noise_drift"];
    s.source_dynamics = sy["source_dynamics"];
    s.wet_rate_hz = sy["wet_rate_hz"];
    s.dry_rate_hz = sy["dry_rate_hz"];
    s.class_contrast = sy["class_contrast"];
    s.trial_jitter = sy["trial_jitter"];
    s.subject_jitter = sy["subject_jitter"];
    s.components_per_band = sy["components_per_band"];
    s.seed = rc.seed;
    collect(errors, "synthetic", [&] { validate(s); });

    const json& d = tree["dsp"];
    rc.dsp.band_low_hz = d["band_low_hz"];
    rc.dsp.band_high_hz = d["band_high_hz"];
    rc.dsp.band_order = d["band_order"];
    rc.dsp.notch_hz = d["notch_hz"];
    rc.dsp.notch_q = d["notch_q"];
    rc.dsp.target_rate_hz = d["target_rate_hz"];
    collect(errors, "dsp", [&] {
      dsp::design_bandpass(rc.dsp.band_low_hz, rc.dsp.band_high_hz, rc.dsp.target_rate_hz, rc.dsp.band_order);
      dsp::design_notch(rc.dsp.notch_hz, rc.dsp.notch_q, rc.dsp.target_rate_hz);
    });

    const json& f = tree["features"];
    rc.features.bands = parse_bands(f["bands"], "features.bands", errors);
    rc.features.segment_seconds = f["segment_seconds"];
    rc.features.filter_order = f["filter_order"];
    rc.features.smooth = f["smooth"];
    rc.features.lds.transition = f["lds"]["transition"];
    rc.features.lds.observation = f["lds"]["observation"];
    rc.features.lds.process_var = f["lds"]["process_var"];
    rc.features.lds.observation_var = f["lds"]["observation_var"];
    rc.features.lds.init_var = f["lds"]["init_var"];
    if (!(rc.features.segment_seconds > 0.0)) errors.push_back("features.segment_seconds must be > 0");
    if (rc.features.filter_order < 1) errors.push_back("features.filter_order must be >= 1");
    if (!(rc.features.lds.process_var > 0.0) || !(rc.features.lds.observation_var > 0.0) ||
        !(rc.features.lds.init_var > 0.0)) {
      errors.push_back("features.lds variances must be > 0");
    }

    const json& m = tree["model"];
    collect(errors, "model", [&] {
      json mj = m;
      mj["wet_input_dim"] = 1;
      mj["dry_input_dim"] = 1;
      mj["num_classes"] = tree["eval"]["num_classes"];
      mj["seed"] = rc.seed;
      rc.model = model::decan_config_from_json(mj);
      rc.model.validate();
    });

    const json& e = tree["eval"];
    collect(errors, "eval.scheme", [&] { rc.eval.scheme = eval::scheme_from_string(e["scheme"].get<std::string>()); });
    for (const auto& name : e["methods"]) {
      collect(errors, "eval.methods", [&] { rc.eval.methods.push_back(eval::method_from_string(name.get<std::string>())); });
    }
    if (e["methods"].empty()) errors.push_back("eval.methods: at least one method is required");
    collect(errors, "eval.device", [&] { rc.eval.device = device_from_string(e["device"].get<std::string>()); });
    for (const auto& mask : e["band_masks"]) {
      if (!mask.is_array()) {
        errors.push_back("eval.band_masks: every mask must be an array of band names");
        continue;
      }
      rc.eval.band_masks.push_back(parse_bands(mask, "eval.band_masks", errors));
    }
    if (rc.eval.band_masks.empty()) errors.push_back("eval.band_masks: at least one mask is required");
    for (const auto& mask : rc.eval.band_masks) {
      for (auto b : mask) {
        if (std::find(rc.features.bands.begin(), rc.features.bands.end(), b) == rc.features.bands.end()) {
          errors.push_back(std::string("eval.band_masks: band '") + std::string(features::to_string(b)) +
                           "' is not extracted (features.bands)");
        }
      }
    }
    const std::string pairing = e["pairing"];
    if (pairing == "intra_subject") {
      rc.eval.pairing = PairingStrategy::intra_subject(e["mixed_subjects"].get<bool>());
    } else if (pairing == "one_to_one") {
      rc.eval.pairing = PairingStrategy::one_to_one(e["wet_subject"].get<int>());
    } else if (pairing == "inter_dataset") {
      rc.eval.pairing = PairingStrategy::inter_dataset();
      if (rc.external_manifest.empty()) errors.push_back("eval.pairing: inter_dataset needs data.external_manifest");
    } else {
      errors.push_back("eval.pairing: unknown pairing '" + pairing + "'");
    }
    rc.eval.num_classes = e["num_classes"];
    if (rc.eval.num_classes < 2) errors.push_back("eval.num_classes must be >= 2");
    rc.eval.ablation = e["ablation"];
    rc.eval.band_sweep = e["band_sweep"];
    rc.eval.export_latents = e["export_latents"];
    const json& b = e["baseline"];
    auto& bc = rc.eval.baseline;
    bc.lr_l2 = b["lr_l2"];
    bc.lr_iterations = b["lr_iterations"];
    bc.svm_c_grid = b["svm_c_grid"].get<std::vector<double>>();
    bc.svm_iterations = b["svm_iterations"];
    bc.svm_inner_folds = b["svm_inner_folds"];
    bc.dnn_learning_rate = b["dnn_learning_rate"];
    bc.dnn_epochs = b["dnn_epochs"];
    bc.dnn_batch_size = b["dnn_batch_size"];
    bc.dnn_patience = b["dnn_patience"];
    bc.dnn_min_improvement = b["dnn_min_improvement"];
    bc.seed = rc.seed;
    if (bc.svm_c_grid.empty()) errors.push_back("eval.baseline.svm_c_grid must not be empty");
    for (double c : bc.svm_c_grid) {
      if (!(c > 0.0)) errors.push_back("eval.baseline.svm_c_grid values must be > 0");
    }
    if (bc.lr_iterations < 1 || bc.svm_iterations < 1 || bc.dnn_epochs < 1) {
      errors.push_back("eval.baseline iteration counts must be >= 1");
    }
    if (bc.svm_inner_folds < 2) errors.push_back("eval.baseline.svm_inner_folds must be >= 2");
    if (!(bc.dnn_learning_rate > 0.0)) errors.push_back("eval.baseline.dnn_learning_rate must be > 0");

    rc.holdout_subjects = tree["train"]["holdout_subjects"].get<std::vector<int>>();
    rc.report_inputs = tree["report"]["inputs"].get<std::vector<std::string>>();
  }

  if (!errors.empty()) {
    std::string msg = "invalid config (" + std::to_string(errors.size()) + " error" + (errors.size() > 1 ? "s" : "") + "):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::invalid_argument(msg);
  }
  // The output location does not change results, so it stays out of the hash.
  tree.erase("out");
  rc.resolved = tree;
  rc.hash = config_hash(tree);
  return rc;
}

eval::FeaturePipeline RunConfig::pipeline() const {
  eval::FeaturePipeline p;
  p.dsp = dsp;
  p.extract.segment_seconds = features.segment_seconds;
  p.extract.filter_order = features.filter_order;
  p.bands.clear();
  for (auto b : features.bands) p.bands.push_back(features::canonical_bands()[static_cast<std::size_t>(b)]);
  p.smooth = features.smooth;
  p.lds = features.lds;
  return p;
}

eval::ExperimentSpec RunConfig::experiment(eval::Method method, const std::vector<features::Band>& mask) const {
  eval::ExperimentSpec s;
  s.scheme = eval.scheme;
  s.method = method;
  s.device = eval.device;
  s.band_mask = mask;
  s.pairing = eval.pairing;
  s.decan = model;
  s.baseline = eval.baseline;
  s.num_classes = eval.num_classes;
  s.seed = seed;
  s.export_latents = eval.export_latents;
  return s;
}

}  // namespace decan::cli
