#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "csnet/backtest.hpp"
#include "csnet/config_json.hpp"
#include "csnet/csnet_model.hpp"
#include "csnet/data_io.hpp"
#include "csnet/ensemble_metrics.hpp"
#include "csnet/run_config.hpp"
#include "csnet/var_forecaster.hpp"

namespace py = pybind11;
using namespace csnet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DataCuboid to_cuboid(const Array& a) {
  if (a.ndim() != 3) throw Error(Errc::ShapeMismatch, "expected a (time, event, region) array");
  const auto T = static_cast<std::size_t>(a.shape(0)), E = static_cast<std::size_t>(a.shape(1)),
             R = static_cast<std::size_t>(a.shape(2));
  return DataCuboid(T, E, R, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_cuboid(const DataCuboid& c) {
  Array out({c.t_len(), c.e_len(), c.r_len()});
  std::copy(c.values().begin(), c.values().end(), out.mutable_data());
  return out;
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw Error(Errc::ShapeMismatch, "expected a 2-D array");
  return Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_matrix(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

CsNetConfig config_from(const py::object& cfg) {
  CsNetConfig c;
  if (cfg.is_none()) return c;
  const std::string text = py::str(py::module_::import("json").attr("dumps")(cfg));
  merge_json(c, nlohmann::json::parse(text));
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_csnet, m) {
  m.doc() = "Cross-sectional multivariate forecasting core";

  static py::exception<Error> error_type(m, "CsNetError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::handle(error_type.ptr())(e.what());
      err.attr("code") = std::string(errc_name(e.code()));
      PyErr_SetObject(error_type.ptr(), err.ptr());
    }
  });

  m.def(
      "synthetic",
      [](std::size_t t_len, std::size_t e_len, std::size_t r_len, std::uint64_t seed,
         double trend_amplitude, double seasonal_amplitude, double factor_amplitude,
         double cross_region_mixing, double noise_std) {
        SynthConfig c;
        c.t_len = t_len;
        c.e_len = e_len;
        c.r_len = r_len;
        c.seed = seed;
        c.trend_amplitude = trend_amplitude;
        c.seasonal_amplitude = seasonal_amplitude;
        c.factor_amplitude = factor_amplitude;
        c.cross_region_mixing = cross_region_mixing;
        c.noise_std = noise_std;
        const SeriesTable table = generate_synthetic(c);
        return from_cuboid(cuboid_from_table(table, StructuralSchema::grid(e_len, r_len)));
      },
      py::arg("t_len"), py::arg("e_len"), py::arg("r_len"), py::arg("seed") = 0,
      py::arg("trend_amplitude") = 0.0, py::arg("seasonal_amplitude") = 0.0,
      py::arg("factor_amplitude") = 0.0, py::arg("cross_region_mixing") = 0.0,
      py::arg("noise_std") = 0.0,
      "Synthetic structured panel as a (time, event, region) array.");

  m.def(
      "mase",
      [](const Array& in_sample, const Array& truth, const Array& forecast) {
        const auto a = to_vector(in_sample), t = to_vector(truth), f = to_vector(forecast);
        return mase({a, t, f});
      },
      py::arg("in_sample"), py::arg("truth"), py::arg("forecast"));
  m.def(
      "mse",
      [](const Array& truth, const Array& forecast) {
        return mse(to_vector(truth), to_vector(forecast));
      },
      py::arg("truth"), py::arg("forecast"));

  m.def(
      "count_windows",
      [](std::size_t t_len, std::size_t initial_train, std::size_t horizon, std::size_t step,
         const std::string& kind, std::size_t window) {
        BacktestProtocol p;
        p.initial_train = initial_train;
        p.horizon = horizon;
        p.step = step;
        p.window = window;
        if (kind == "sliding") p.kind = ProtocolKind::Sliding;
        else if (kind != "expanding") throw Error(Errc::InvalidConfig, "kind must be expanding or sliding");
        return count_windows(t_len, p);
      },
      py::arg("t_len"), py::arg("initial_train") = 100, py::arg("horizon") = 4,
      py::arg("step") = 1, py::arg("kind") = "expanding", py::arg("window") = 0);

  m.def(
      "var_forecast",
      [](const Array& history, std::size_t lag, double ridge, std::size_t horizon) {
        const Matrix h = to_matrix(history);
        return from_matrix(forecast_var(fit_var(h, lag, ridge), h, horizon));
      },
      py::arg("history"), py::arg("lag") = 1, py::arg("ridge") = 0.0, py::arg("horizon") = 4,
      "Fits a ridge VAR on the (time, series) history and forecasts `horizon` steps.");

  py::class_<TrainedModel>(m, "Model")
      .def_property_readonly("variant", [](const TrainedModel& t) { return variant_name(t.config.variant); })
      .def_property_readonly("window", [](const TrainedModel& t) { return t.config.window; })
      .def_property_readonly("horizon", [](const TrainedModel& t) { return t.config.horizon; })
      .def_property_readonly("shape", [](const TrainedModel& t) { return py::make_tuple(t.e_len, t.r_len); })
      .def_readonly("loss_history", &TrainedModel::loss_history)
      .def_readonly("ensemble_weight", &TrainedModel::ensemble_weight)
      .def_property_readonly("config", [](const TrainedModel& t) {
        return py::module_::import("json").attr("loads")(to_json(t.config).dump());
      })
      .def("predict", [](const TrainedModel& t, const Array& data) {
        return from_cuboid(predict(to_cuboid(data), t));
      }, py::arg("data"))
      .def("save", [](const TrainedModel& t, const std::filesystem::path& p) { save_model(t, p); },
           py::arg("path"));

  m.def(
      "train",
      [](const Array& data, const py::object& config, bool count_data) {
        const DataCuboid c = to_cuboid(data);
        const CsNetConfig cfg = config_from(config);
        py::gil_scoped_release release;
        return train(c, cfg, count_data);
      },
      py::arg("data"), py::arg("config") = py::none(), py::arg("count_data") = false,
      "Trains a network forecaster; `config` is a dict of model settings.");
  m.def("load_model", [](const std::filesystem::path& p) { return load_model(p); }, py::arg("path"));

  m.def(
      "backtest",
      [](const std::filesystem::path& config_path, std::optional<std::string> variant,
         std::optional<std::uint64_t> seed) {
        RunOverrides o;
        o.variant = variant;
        o.seed = seed;
        const RunConfig config = load_run_config(config_path, o);
        const LoadedData data = load_data(config);
        BacktestOptions options;
        options.threads = config.threads;
        options.config_hash = run_config_hash(config);
        std::string text;
        {
          py::gil_scoped_release release;
          text = report_to_json(run_backtest(data.cuboid, dataset_fingerprint(data.table),
                                             make_factory(config, data.schema.count_data()),
                                             config.protocol, options));
        }
        return py::module_::import("json").attr("loads")(text);
      },
      py::arg("config_path"), py::arg("variant") = py::none(), py::arg("seed") = py::none(),
      "Runs the backtest described by a run config file and returns the report as a dict.");
}
