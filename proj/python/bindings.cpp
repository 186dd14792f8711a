#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "decan/cli.hpp"
#include "decan/config.hpp"
#include "decan/dsp.hpp"
#include "decan/experiment.hpp"
#include "decan/features.hpp"
#include "decan/metrics.hpp"
#include "decan/model.hpp"
#include "decan/stats.hpp"
#include "decan/synthetic.hpp"

namespace py = pybind11;
using namespace decan;

namespace {

// Python objects cross the boundary as JSON text.
nlohmann::json from_python(const py::object& obj) {
  if (obj.is_none()) return nlohmann::json::object();
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

cli::RunConfig run_config(const py::object& config, const std::vector<std::string>& overrides) {
  nlohmann::json tree = from_python(config);
  for (const auto& o : overrides) cli::apply_override(tree, o);
  return cli::resolve_config(tree);
}

py::dict trial_dict(const RawTrial& t) {
  py::dict d;
  d["subject"] = t.key.subject_id;
  d["device"] = std::string(to_string(t.key.device));
  d["block"] = t.key.block_id;
  d["trial"] = t.key.trial_id;
  d["label"] = std::string(to_string(t.label));
  d["label_code"] = t.label_code;
  d["sample_rate_hz"] = t.sample_rate_hz;
  d["data"] = Matrix(t.data);
  return d;
}

RawTrial trial_from(const Matrix& data, double rate) {
  RawTrial t;
  t.key = TrialKey{1, DeviceKind::Wet, 1, 1};
  t.sample_rate_hz = rate;
  t.data = data;
  return t;
}

}  // namespace

PYBIND11_MODULE(_decan, m) {
  m.doc() = "Wet/dry EEG contrastive alignment core";

  m.def("default_config", [] { return to_python(cli::resolve_config(nlohmann::json::object()).resolved); },
        "Resolved default run configuration.");
  m.def(
      "resolve_config",
      [](const py::object& config, const std::vector<std::string>& overrides) {
        const auto rc = run_config(config, overrides);
        return py::make_tuple(to_python(rc.resolved), rc.hash);
      },
      py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      "Validated (resolved tree, config hash); raises ValueError listing every bad key.");
  m.def(
      "run",
      [](const std::string& subcommand, const py::object& config, const std::vector<std::string>& overrides,
         const std::string& out) {
        auto overrides_with_out = overrides;
        overrides_with_out.push_back("out=\"" + out + "\"");
        return cli::run(subcommand, run_config(config, overrides_with_out));
      },
      py::arg("subcommand"), py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      py::arg("out") = "runs", "Runs one pipeline stage; returns the files it wrote.");

  m.def(
      "generate_synthetic",
      [](const py::object& config, const std::vector<std::string>& overrides) {
        const auto rc = run_config(config, overrides);
        const auto ds = generate_synthetic(rc.synthetic);
        py::list wet, dry;
        for (const auto& t : ds.wet) wet.append(trial_dict(t));
        for (const auto& t : ds.dry) dry.append(trial_dict(t));
        return py::make_tuple(wet, dry);
      },
      py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      "Paired wet and dry trials from the synthetic generator.");

  m.def("differential_entropy", [](const std::vector<double>& x) { return features::differential_entropy(x); });
  m.def(
      "bandpass_gain_db",
      [](double low, double high, double fs, int order, double freq) {
        return dsp::design_bandpass(low, high, fs, order).gain_db(freq);
      },
      py::arg("low_hz"), py::arg("high_hz"), py::arg("fs_hz"), py::arg("order"), py::arg("freq_hz"));
  m.def(
      "notch_gain_db",
      [](double f0, double q, double fs, double freq) { return dsp::design_notch(f0, q, fs).gain_db(freq); },
      py::arg("f0_hz"), py::arg("q"), py::arg("fs_hz"), py::arg("freq_hz"));
  m.def(
      "bandpass_filtfilt",
      [](const std::vector<double>& x, double low, double high, double fs, int order) {
        return dsp::filtfilt(dsp::design_bandpass(low, high, fs, order), x);
      },
      py::arg("signal"), py::arg("low_hz"), py::arg("high_hz"), py::arg("fs_hz"), py::arg("order") = 4);
  m.def(
      "resample",
      [](const std::vector<double>& x, double in_hz, double out_hz) {
        return dsp::resample(x, dsp::ResamplerSpec::between(in_hz, out_hz));
      },
      py::arg("signal"), py::arg("in_hz"), py::arg("out_hz"));
  m.def(
      "extract_features",
      [](const Matrix& data, double rate, double segment_seconds) {
        features::ExtractOptions opt;
        opt.segment_seconds = segment_seconds;
        const auto& bands = features::canonical_bands();
        const auto t = features::extract_features(trial_from(data, rate), bands, opt);
        return features::flatten_features(t);
      },
      py::arg("data"), py::arg("sample_rate_hz"), py::arg("segment_seconds") = 5.0,
      "DE features (segments x channels*bands) of a channels x samples array.");
  m.def(
      "lds_smooth", [](const std::vector<double>& x) { return features::lds_smooth(x); }, py::arg("series"));

  m.def(
      "contrastive_loss",
      [](const Matrix& wet, const Matrix& dry, double temperature, const std::string& mode) {
        return model::contrastive_loss(wet, dry, temperature, model::contrastive_mode_from_string(mode), false, false)
            .loss;
      },
      py::arg("wet_proj"), py::arg("dry_proj"), py::arg("temperature") = 0.5, py::arg("mode") = "inclusive_positive");

  m.def(
      "paired_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto r = eval::paired_t_test(a, b);
        return py::make_tuple(r.t, r.df, r.p);
      },
      py::arg("a"), py::arg("b"), "(t, df, two-tailed p)");
  m.def(
      "compute_metrics",
      [](const std::vector<int>& pred, const Matrix& scores, const std::vector<int>& labels, int k) {
        return to_python(eval::to_json(eval::compute_metrics(pred, scores, labels, k)));
      },
      py::arg("predictions"), py::arg("scores"), py::arg("labels"), py::arg("num_classes") = 5);
}
