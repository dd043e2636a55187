#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stnscm/error.hpp"
#include "stnscm/pipeline.hpp"
#include "stnscm/synth.hpp"

namespace py = pybind11;
using namespace stnscm;

namespace {

Config config_from(const py::dict& settings) {
  Config cfg;
  for (const auto& [k, v] : settings) cfg.set(py::str(k), py::str(v));
  return cfg;
}

py::array_t<double> matrix_array(const SquareMatrix& m) {
  py::array_t<double> out({m.n, m.n});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

py::dict triple(const MetricTriple& t) {
  py::dict d;
  d["mae"] = t.mae;
  d["rmse"] = t.rmse;
  d["mape"] = t.mape;
  return d;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["average"] = triple(m.average);
  py::list per;
  for (const auto& h : m.horizon) per.append(triple(h));
  d["horizon"] = per;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the stnscm forecaster";

  static py::exception<Error> base(m, "Error");
  static py::exception<DimensionError> dimension(m, "DimensionError", base.ptr());
  static py::exception<ValidationError> validation(m, "ValidationError", base.ptr());
  static py::exception<AlignmentError> alignment(m, "AlignmentError", base.ptr());
  static py::exception<DegenerateInputError> degenerate(m, "DegenerateInputError", base.ptr());
  static py::exception<NumericError> numeric(m, "NumericError", base.ptr());
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  static py::exception<IoError> io(m, "IoError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::Dimension: py::set_error(dimension, e.what()); break;
        case ErrorKind::Validation: py::set_error(validation, e.what()); break;
        case ErrorKind::Alignment: py::set_error(alignment, e.what()); break;
        case ErrorKind::Degenerate: py::set_error(degenerate, e.what()); break;
        case ErrorKind::Numeric: py::set_error(numeric, e.what()); break;
        case ErrorKind::Config: py::set_error(config, e.what()); break;
        case ErrorKind::Io: py::set_error(io, e.what()); break;
      }
    }
  });

  m.def(
      "synth_generate",
      [](const py::dict& settings) {
        const Config cfg = config_from(settings);
        const SynthOutput out = generate(synth_scenario_from(cfg));
        save_dataset(out.data, cfg.get_string("data_dir"));
        py::dict d;
        d["regions"] = out.data.regions.size();
        d["steps"] = out.data.flow.num_steps();
        d["data_dir"] = cfg.get_string("data_dir");
        return d;
      },
      py::arg("settings"), "Generate the synthetic grid dataset into settings['data_dir'].");

  m.def(
      "oracle_effect",
      [](const py::dict& settings, std::size_t day, double multiplier) {
        return stnscm::oracle_effect(synth_scenario_from(config_from(settings)), day, multiplier);
      },
      py::arg("settings"), py::arg("day"), py::arg("multiplier"));

  m.def(
      "build_graphs",
      [](const py::dict& settings) {
        const Config cfg = config_from(settings);
        const Dataset data = load_dataset(cfg.get_string("data_dir"), load_options_from(cfg));
        const StaticGraph geo =
            build_geo_graph(data.regions, cfg.get_double("epsilon_km"), cfg.get_bool("geo_connect_far"));
        const StaticGraph trans = build_trans_graph(data.regions, data.trips);
        return py::make_tuple(matrix_array(geo.adjacency), matrix_array(trans.adjacency));
      },
      py::arg("settings"), "Geographic and transition adjacency matrices of a dataset directory.");

  m.def(
      "train",
      [](const py::dict& settings) {
        const Config cfg = config_from(settings);
        FitResult fitted;
        Metrics test, ha;
        {
          py::gil_scoped_release release;
          Prepared prep = prepare_from_dir(cfg);
          Model model(prep.model, prep.switches, prep.norm);
          fitted = fit(model, prep.graphs, prep.splits.train, prep.splits.val, prep.train);
          test = evaluate(model, prep.graphs, prep.splits.test, prep.train.batch_size, prep.train.mape_threshold);
          ha = historical_average_baseline(prep.data.flow, prep.fit_end, prep.splits.test, prep.train.mape_threshold);
        }
        py::dict d;
        d["test"] = metrics_dict(test);
        d["historical_average"] = metrics_dict(ha);
        d["best_epoch"] = fitted.best_epoch;
        d["epochs_run"] = fitted.log.size();
        d["stop_reason"] = fitted.stop_reason;
        d["metrics_json"] = metrics_json(test, &ha);
        return d;
      },
      py::arg("settings"), "Train on settings['data_dir'] and evaluate on the test split.");

  m.def(
      "gradcheck",
      [](std::uint64_t seed, double eps) {
        TinySpec spec;
        spec.seed = seed;
        TinyProblem problem = make_tiny_problem(spec);
        GradCheckOptions opts;
        opts.eps = eps;
        const GradCheckReport r = grad_check_tiny(problem, opts);
        py::dict d;
        d["max_rel_error"] = r.max_rel_error;
        d["checked"] = r.checked;
        d["worst_param"] = r.worst_param;
        return d;
      },
      py::arg("seed") = 3, py::arg("eps") = 1e-5, "Finite-difference check of the full model gradient.");

  m.def(
      "compute_metrics",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> pred,
         py::array_t<double, py::array::c_style | py::array::forcecast> truth, double mape_threshold) {
        if (pred.ndim() < 2) throw DimensionError("pred needs trailing (Q, channels) axes");
        const auto Q = static_cast<std::size_t>(pred.shape(pred.ndim() - 2));
        const auto C = static_cast<std::size_t>(pred.shape(pred.ndim() - 1));
        return metrics_dict(compute_metrics(std::span<const double>(pred.data(), pred.size()),
                                            std::span<const double>(truth.data(), truth.size()), Q, C,
                                            mape_threshold));
      },
      py::arg("pred"), py::arg("truth"), py::arg("mape_threshold") = 1.0,
      "MAE, RMSE and masked MAPE overall and per horizon; arrays end in (Q, channels).");
}
