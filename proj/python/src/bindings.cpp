#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "acpc/error.hpp"
#include "acpc/harness.hpp"
#include "acpc/metrics.hpp"
#include "acpc/mlp.hpp"
#include "acpc/model_io.hpp"
#include "acpc/tcn.hpp"
#include "acpc/train.hpp"

PYBIND11_MAKE_OPAQUE(acpc::Trace)

namespace py = pybind11;
using namespace acpc;

namespace {

// Configs and reports cross the boundary as JSON text; the Python package
// converts to and from dicts.
template <typename T>
T parse(const std::string& text) {
  try {
    return nlohmann::json::parse(text).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
}

struct PyModel {
  std::shared_ptr<ReuseModel> model;
};

struct TrainOutput {
  PyModel model;
  std::vector<double> loss_curve;
  std::vector<double> val_accuracy;
  std::size_t best_epoch = 0;
  double test_accuracy = 0.0;
};

std::string report_text(const MetricsReport& r) { return nlohmann::json(r).dump(); }

const ReuseModel* model_ptr(const std::optional<PyModel>& m) {
  return m ? m->model.get() : nullptr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cache replacement simulation with learned reuse prediction";

  static py::exception<Error> error_type(m, "AcpcError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error_type.ptr(), (e.category() + ": " + e.what()).c_str());
    }
  });

  py::class_<Trace>(m, "Trace")
      .def("__len__", [](const Trace& t) { return t.size(); })
      .def("line_ids", [](const Trace& t) {
        std::vector<std::uint64_t> out;
        out.reserve(t.size());
        for (const auto& r : t) out.push_back(r.line_id);
        return out;
      })
      .def("labels", [](const Trace& t) {
        std::vector<int> out;
        out.reserve(t.size());
        for (const auto& r : t) out.push_back(r.label);
        return out;
      })
      .def("access_types", [](const Trace& t) {
        std::vector<std::string> out;
        out.reserve(t.size());
        for (const auto& r : t) out.emplace_back(to_string(r.type));
        return out;
      })
      .def("fingerprint", [](const Trace& t) { return trace_fingerprint(t); })
      .def("write", [](const Trace& t, const std::filesystem::path& p) { write_trace(t, p); });

  m.def("read_trace", [](const std::filesystem::path& p) { return read_trace(p); });
  m.def("_generate_trace", [](const std::string& cfg) { return generate_trace(parse<GenConfig>(cfg)); });
  m.def("label_trace", [](Trace t, std::size_t window) {
    compute_reuse_distance(t);
    compute_reuse_labels(t, window);
    return t;
  }, py::arg("trace"), py::arg("window") = 1024);

  py::class_<PyModel>(m, "Model")
      .def_property_readonly("kind", [](const PyModel& pm) { return std::string(pm.model->kind()); })
      .def("save", [](const PyModel& pm, const std::filesystem::path& p) { save_model(*pm.model, p); })
      .def("to_json", [](const PyModel& pm) { return serialize_model(*pm.model); })
      .def("parameter_count", [](const PyModel& pm) { return pm.model->parameters().size(); });
  m.def("load_model", [](const std::filesystem::path& p) { return PyModel{load_model(p)}; });
  m.def("random_model", [](const std::string& kind, std::uint64_t seed) {
    if (kind == "tcn") return PyModel{std::make_shared<TcnModel>(TcnModel::random(seed))};
    if (kind == "mlp") return PyModel{std::make_shared<MlpModel>(MlpModel::random(seed))};
    throw ConfigError("unknown model kind '" + kind + "'");
  }, py::arg("kind") = "tcn", py::arg("seed") = 0);

  py::class_<TrainOutput>(m, "TrainOutput")
      .def_readonly("model", &TrainOutput::model)
      .def_readonly("loss_curve", &TrainOutput::loss_curve)
      .def_readonly("val_accuracy", &TrainOutput::val_accuracy)
      .def_readonly("best_epoch", &TrainOutput::best_epoch)
      .def_readonly("test_accuracy", &TrainOutput::test_accuracy);
  m.def("_train", [](const Trace& labeled, const std::string& kind, const std::string& cfg_text) {
    const auto cfg = parse<TrainConfig>(cfg_text);
    std::unique_ptr<ReuseModel> init;
    if (kind == "tcn") init = std::make_unique<TcnModel>(TcnModel::random(cfg.seed));
    else if (kind == "mlp") init = std::make_unique<MlpModel>(MlpModel::random(cfg.seed));
    else throw ConfigError("unknown model kind '" + kind + "'");
    py::gil_scoped_release release;
    const auto splits = make_splits(labeled);
    auto r = train(*init, splits.train, splits.validation, cfg);
    TrainOutput out;
    out.test_accuracy = accuracy(*r.model, splits.test);
    out.model = PyModel{std::move(r.model)};
    out.loss_curve = std::move(r.loss_curve);
    out.val_accuracy = std::move(r.val_accuracy);
    out.best_epoch = r.best_epoch;
    return out;
  });

  m.def("_run_policy", [](const Trace& trace, const std::string& cache, const std::optional<PyModel>& model,
                          std::uint64_t seed) {
    const auto cfg = parse<CacheConfig>(cache);
    py::gil_scoped_release release;
    BaselineCache baselines;
    const auto run = run_policy(trace, cfg, model_ptr(model), seed, baselines);
    return std::make_pair(report_text(run.report), nlohmann::json(run.counters).dump());
  });

  m.def("_online_feedback_loop", [](const Trace& trace, const std::string& cache, const PyModel& model,
                                    const std::string& online, std::uint64_t seed) {
    const auto cfg = parse<CacheConfig>(cache);
    const auto on = parse<OnlineConfig>(online);
    OnlineRun run;
    {
      py::gil_scoped_release release;
      BaselineCache baselines;
      run = online_feedback_loop(trace, cfg, *model.model, on, seed, baselines);
    }
    return py::make_tuple(report_text(run.run.report), PyModel{std::move(run.model)}, run.loss_curve);
  });

  m.def("_compare", [](const std::vector<std::string>& reports) {
    std::vector<MetricsReport> rs;
    for (const auto& r : reports) rs.push_back(parse<MetricsReport>(r));
    return comparison_csv(compare_table(rs));
  });

  m.def("_derived_improvements", [](const std::string& baseline, const std::string& candidate) {
    const auto d = derived_improvements(parse<MetricsReport>(baseline), parse<MetricsReport>(candidate));
    return py::dict(py::arg("pollution_reduction_pct") = d.pollution_reduction_pct,
                    py::arg("chr_gain_pct") = d.chr_gain_pct, py::arg("mpr_gain_pct") = d.mpr_gain_pct,
                    py::arg("tgt_gain_pct") = d.tgt_gain_pct);
  });
}
