#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cli.hpp"
#include "pedintent/checkpoint.hpp"
#include "pedintent/diagnostics.hpp"
#include "pedintent/errors.hpp"
#include "pedintent/metrics.hpp"
#include "pedintent/synthetic.hpp"
#include "pedintent/training.hpp"

namespace py = pybind11;
using namespace pedintent;
using json = nlohmann::json;

namespace {

struct Windows {
  std::vector<ObservationWindow> items;
};

ModelSpec spec_from(const std::string& text) {
  const auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) return named_config(text);
  return model_spec_from_json(j);
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["auc"] = r.auc ? py::object(py::float_(*r.auc)) : py::object(py::none());
  d["f1"] = r.f1;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["tp"] = r.tp;
  d["fp"] = r.fp;
  d["tn"] = r.tn;
  d["fn"] = r.fn;
  return d;
}

py::list history_list(const History& h) {
  py::list out;
  for (const auto& e : h.epochs) {
    py::dict d;
    d["epoch"] = e.epoch;
    d["train_loss"] = e.train_loss;
    d["val_loss"] = e.val_loss;
    d["lr"] = e.lr;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Pedestrian crossing-intention models";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());

  m.def("named_configs", [] { return std::vector<std::string>(kNamedConfigs.begin(), kNamedConfigs.end()); });
  m.def("model_spec_json", [](const std::string& spec) { return to_json(spec_from(spec)).dump(); }, py::arg("spec"),
        "Expanded JSON for a preset name or a JSON spec.");

  py::class_<Windows>(m, "Windows")
      .def("__len__", [](const Windows& w) { return w.items.size(); })
      .def_property_readonly("labels",
                             [](const Windows& w) {
                               std::vector<int> y;
                               for (const auto& x : w.items) y.push_back(x.label);
                               return y;
                             })
      .def_property_readonly("pedestrian_ids",
                             [](const Windows& w) {
                               std::vector<std::string> ids;
                               for (const auto& x : w.items) ids.push_back(x.pedestrian_id);
                               return ids;
                             })
      .def(
          "features",
          [](const Windows& w, const std::string& spec) {
            const auto s = spec_from(spec);
            if (w.items.empty()) throw ContractError("no windows");
            const std::size_t t = w.items[0].steps(), f = s.feature_width();
            py::array_t<float> out({w.items.size(), t, f});
            auto* dst = out.mutable_data();
            for (const auto& x : w.items) {
              const auto fm = assemble_nonvisual(x, s.channels);
              dst = std::copy(fm.values.begin(), fm.values.end(), dst);
            }
            return out;
          },
          py::arg("spec"), "Non-visual features (N x T x F) for the channels a model spec enables.");

  m.def(
      "synthetic_windows",
      [](std::uint64_t seed, std::size_t n_tracks, const std::string& rule, int obs_len, int tte_lo, int tte_hi,
         int stride, bool local_context, bool local_surround, bool global_context, std::size_t clip_size) {
        SyntheticConfig cfg;
        cfg.seed = seed;
        cfg.n_tracks = n_tracks;
        cfg.rule = parse_rule(rule);
        ClipConfig clips;
        clips.local_context = local_context;
        clips.local_surround = local_surround;
        clips.global_context = global_context;
        clips.size = {clip_size, clip_size};
        return Windows{synthetic_windows(cfg, {obs_len, tte_lo, tte_hi, stride}, clips)};
      },
      py::arg("seed") = 0, py::arg("n_tracks") = 100, py::arg("rule") = "separable_motion", py::arg("obs_len") = 16,
      py::arg("tte_lo") = 30, py::arg("tte_hi") = 60, py::arg("stride") = 15, py::arg("local_context") = false,
      py::arg("local_surround") = false, py::arg("global_context") = false, py::arg("clip_size") = 32);

  py::class_<Model<float>>(m, "Model")
      .def(py::init([](const std::string& spec) { return Model<float>::build(spec_from(spec)); }), py::arg("spec"))
      .def_property_readonly("spec_json", [](const Model<float>& model) { return to_json(model.spec()).dump(); })
      .def("parameter_count", &Model<float>::parameter_count)
      .def(
          "predict", [](const Model<float>& model, const Windows& w) { return predict_all(model, w.items); },
          py::arg("windows"))
      .def(
          "train",
          [](Model<float>& model, const Windows& tr, const Windows* val, const std::string& cfg) {
            const auto tc = train_config_from_json(json::parse(cfg));
            tc.validate();
            py::gil_scoped_release release;
            const auto r = train(model, tr.items, val ? val->items : std::vector<ObservationWindow>{}, tc);
            py::gil_scoped_acquire acquire;
            py::dict d;
            d["history"] = history_list(r.history);
            d["best_epoch"] = r.best_epoch;
            d["best_val_loss"] = r.best_val_loss;
            d["stopped_early"] = r.stopped_early;
            return d;
          },
          py::arg("train"), py::arg("val") = nullptr, py::arg("config") = "{}")
      .def(
          "save", [](const Model<float>& model, const std::filesystem::path& p) { save_checkpoint(p, model.state()); },
          py::arg("path"))
      .def(
          "load", [](Model<float>& model, const std::filesystem::path& p) { model.load_state(load_checkpoint(p)); },
          py::arg("path"));

  m.def("evaluate", [](const std::vector<double>& s, const std::vector<int>& y, double threshold) {
    return report_dict(evaluate(s, y, threshold));
  }, py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);
  m.def("auc", &auc_rank, py::arg("scores"), py::arg("labels"));
  m.def("auc_oracle", &auc_oracle, py::arg("scores"), py::arg("labels"));
  m.def("class_weights", [](const std::vector<int>& y) {
    const auto w = class_weights(y);
    return std::pair{w.negative, w.positive};
  }, py::arg("labels"), "(negative, positive) weights n / (2 n_c).");
  m.def(
      "weighted_bce",
      [](const std::vector<double>& p, const std::vector<int>& y, double w_neg, double w_pos) {
        return weighted_bce(p, y, ClassWeights{w_neg, w_pos});
      },
      py::arg("probs"), py::arg("labels"), py::arg("negative_weight") = 1.0, py::arg("positive_weight") = 1.0);

  m.def(
      "gradcheck",
      [](const std::string& spec, double eps, std::size_t max_elements) {
        GradCheckOptions opts;
        opts.eps = eps;
        opts.max_elements_per_tensor = max_elements;
        const auto r = check_model_gradients(spec_from(spec), opts);
        py::dict d;
        d["tensors"] = r.tensors;
        d["checked"] = r.report.f64.checked;
        d["f64_max_rel_error"] = r.report.f64.max_rel_error;
        d["f32_max_rel_error"] = r.report.f32.max_rel_error;
        return d;
      },
      py::arg("spec"), py::arg("eps") = 1e-5, py::arg("max_elements") = 4);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one CLI subcommand; returns (exit code, stdout, stderr).");
}
