#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>

#include "nvscan/error.hpp"
#include "nvscan/field.hpp"
#include "nvscan/io.hpp"
#include "nvscan/odmr.hpp"
#include "nvscan/pipeline.hpp"
#include "nvscan/tps.hpp"

namespace py = pybind11;
using namespace nvscan;

namespace {

// Grid values as an (ny, nx) array, row iy first.
py::array_t<double> to_array(const ScalarGrid& grid) {
  py::array_t<double> out({grid.ny(), grid.nx()});
  auto view = out.mutable_unchecked<2>();
  for (int iy = 0; iy < grid.ny(); ++iy)
    for (int ix = 0; ix < grid.nx(); ++ix) view(iy, ix) = grid(ix, iy);
  return out;
}

ScalarGrid from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                      Unit unit, double width, double height) {
  if (a.ndim() != 2) throw ConfigError("grid array must be 2-D (ny, nx)");
  auto view = a.unchecked<2>();
  ScalarGrid grid(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), unit, width, height);
  for (int iy = 0; iy < grid.ny(); ++iy)
    for (int ix = 0; ix < grid.nx(); ++ix) grid(ix, iy) = view(iy, ix);
  return grid;
}

Stage stage_from_string(const std::string& name) {
  if (name == "field") return Stage::Field;
  if (name == "track") return Stage::Track;
  if (name == "reconstruct") return Stage::Reconstruct;
  if (name == "evaluate") return Stage::Evaluate;
  throw ConfigError("unknown stage '" + name + "'");
}

py::dict report_dict(const DeviationReport& r) {
  py::dict d;
  d["deviation"] = to_array(r.deviation);
  d["max_all"] = r.max_all;
  d["max_interior"] = r.max_interior;
  d["rms_interior"] = r.rms_interior;
  d["fraction_below"] = r.fraction_below;
  d["threshold"] = r.threshold;
  d["margin"] = r.margin;
  return d;
}

py::dict fit_dict(const FitResult& f) {
  py::dict d;
  d["a"] = py::make_tuple(f.model.a1, f.model.a2, f.model.a3);
  d["b"] = py::array_t<double>(f.model.b.size(), f.model.b.data());
  d["iterations"] = f.diagnostics.iterations;
  d["initial_objective"] = f.diagnostics.initial_objective;
  d["final_objective"] = f.diagnostics.final_objective;
  d["converged"] = f.diagnostics.converged;
  d["message"] = f.diagnostics.message;
  return d;
}

py::dict record_dict(const ScanRecord& r) {
  py::dict d;
  d["c0"] = to_array(r.c0);
  d["c_minus"] = to_array(r.c_minus);
  d["c_plus"] = to_array(r.c_plus);
  d["f0"] = to_array(r.f0);
  py::array_t<std::uint8_t> shifts({r.ny(), r.nx()});
  auto view = shifts.mutable_unchecked<2>();
  for (int iy = 0; iy < r.ny(); ++iy)
    for (int ix = 0; ix < r.nx(); ++ix)
      view(iy, ix) = static_cast<std::uint8_t>(r.shifts[r.f0.index(ix, iy)]);
  d["shifts"] = shifts;
  d["post_processed"] = r.post_processed;
  return d;
}

py::array_t<bool> mask_array(const FringeMap& f) {
  py::array_t<bool> out({f.s.ny(), f.s.nx()});
  auto view = out.mutable_unchecked<2>();
  for (int iy = 0; iy < f.s.ny(); ++iy)
    for (int ix = 0; ix < f.s.nx(); ++ix) view(iy, ix) = f.valid[f.s.index(ix, iy)] != 0;
  return out;
}

ExperimentConfig make_config(const std::optional<std::string>& config,
                             std::optional<std::uint64_t> seed, std::optional<double> counts,
                             std::optional<double> lambda) {
  ExperimentConfig cfg = config ? config_from_json(*config) : reference_scan();
  if (seed) cfg.seed = *seed;
  if (counts) cfg.shape.baseline = *counts;
  if (lambda) cfg.fit.lambda = *lambda;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Scanning NV magnetometry with three-frequency tracking.";
  m.attr("__version__") = NVSCAN_VERSION;

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error);
  py::register_exception<ParseError>(m, "ParseError", error);
  py::register_exception<FitError>(m, "FitError", error);
  py::register_exception<TrackingLoss>(m, "TrackingLoss", error);
  py::register_exception<DomainError>(m, "DomainError", error);

  m.def("kernel", py::vectorize(&kernel), py::arg("r"), "Thin-plate kernel r^2 log r.");

  m.def(
      "lineshape_value",
      [](py::array_t<double> detuning, double contrast, double fwhm) {
        LineShape shape;
        shape.contrast = contrast;
        shape.fwhm = fwhm;
        shape.validate();
        return py::vectorize([&](double x) { return lineshape_value(shape, x); })(detuning);
      },
      py::arg("detuning"), py::arg("contrast") = 0.2, py::arg("fwhm") = 12.0);

  m.def(
      "field_to_frequency", [](double b) { return field_to_frequency(b, NvFrame{}); },
      py::arg("b_mT"), "Upper-branch resonance (MHz) for an on-axis sample field (mT) on top of the bias.");
  m.def(
      "frequency_to_field",
      [](double f, bool subtract_bias) { return frequency_to_field(f, NvFrame{}, subtract_bias); },
      py::arg("f_MHz"), py::arg("subtract_bias") = false);

  m.def(
      "fit_spectrum",
      [](std::vector<double> f, std::vector<double> counts) {
        SpectrumFit r = fit_spectrum(f, counts);
        py::dict d;
        d["resonance"] = r.resonance;
        d["contrast"] = r.shape.contrast;
        d["fwhm"] = r.shape.fwhm;
        d["baseline"] = r.shape.baseline;
        d["residual_rms"] = r.residual_rms;
        return d;
      },
      py::arg("frequencies"), py::arg("counts"));

  m.def(
      "reference_config", [](std::uint64_t seed) { return config_to_json(reference_scan(seed)); },
      py::arg("seed") = 1, "Reference dipole scan configuration as JSON text.");
  m.def(
      "wide_range_config",
      [](std::uint64_t seed) { return config_to_json(wide_range_scan(seed)); },
      py::arg("seed") = 1);
  m.def(
      "config_json",
      [](const std::string& text) { return config_to_json(config_from_json(text)); },
      py::arg("text"), "Parses and re-serializes a configuration with defaults filled in.");

  m.def(
      "simulate",
      [](std::optional<std::string> config, std::optional<std::uint64_t> seed,
         std::optional<double> counts, std::optional<double> lambda, const std::string& stage) {
        ExperimentConfig cfg = make_config(config, seed, counts, lambda);
        Stage last = stage_from_string(stage);
        std::optional<SimulationResult> result;
        {
          py::gil_scoped_release release;
          result.emplace(run_simulation(cfg, last));
        }
        const SimulationResult& r = *result;
        py::dict d;
        d["true_field"] = to_array(r.true_field);
        d["true_frequency"] = to_array(r.true_frequency);
        if (last == Stage::Field) return d;
        d["f_init"] = r.spectrum.resonance;
        py::dict shape;
        shape["contrast"] = r.spectrum.shape.contrast;
        shape["fwhm"] = r.spectrum.shape.fwhm;
        shape["baseline"] = r.spectrum.shape.baseline;
        d["line_shape"] = shape;
        d["raw"] = record_dict(r.raw);
        d["max_detuning"] = r.lock.max_detuning;
        if (r.record) d["record"] = record_dict(*r.record);
        if (r.fringes) {
          d["fringes"] = to_array(r.fringes->s);
          d["valid"] = mask_array(*r.fringes);
        }
        if (r.fit) d["fit"] = fit_dict(*r.fit);
        if (r.reconstructed) d["reconstructed"] = to_array(*r.reconstructed);
        if (r.predicted_fringes) d["predicted_fringes"] = to_array(*r.predicted_fringes);
        if (r.report) d["report"] = report_dict(*r.report);
        return d;
      },
      py::arg("config") = py::none(), py::arg("seed") = py::none(),
      py::arg("counts") = py::none(), py::arg("lambda_") = py::none(),
      py::arg("stage") = "evaluate",
      "Runs the simulation pipeline. `config` is JSON text; defaults to the reference scan.");

  m.def(
      "reconstruct",
      [](const std::filesystem::path& record_dir, std::optional<std::string> config,
         std::optional<double> lambda, std::optional<py::dict> line_shape) {
        ExperimentConfig cfg = make_config(config, std::nullopt, std::nullopt, lambda);
        const auto beside = record_dir.parent_path() / "line_shape.json";
        if (line_shape) {
          cfg.shape.contrast = (*line_shape)["contrast"].cast<double>();
          cfg.shape.fwhm = (*line_shape)["fwhm"].cast<double>();
          cfg.shape.baseline = (*line_shape)["baseline"].cast<double>();
          cfg.shape.validate();
        } else if (std::filesystem::exists(beside)) {
          cfg.shape = line_shape_from_json(read_text(beside));
        }
        ScanRecord record = load_scan_record(record_dir);
        std::optional<Reconstruction> result;
        {
          py::gil_scoped_release release;
          result.emplace(reconstruct(record, cfg.shape, cfg.frame, cfg.fit));
        }
        const Reconstruction& r = *result;
        py::dict d;
        d["fringes"] = to_array(r.fringes.s);
        d["valid"] = mask_array(r.fringes);
        d["fit"] = fit_dict(r.fit);
        d["reconstructed"] = to_array(r.field);
        d["predicted_fringes"] = to_array(r.predicted_fringes);
        return d;
      },
      py::arg("record_dir"), py::arg("config") = py::none(), py::arg("lambda_") = py::none(),
      py::arg("line_shape") = py::none(),
      "Fits a saved scan record directory. The line shape defaults to line_shape.json\n"
      "beside the record, else the configured one.");

  m.def(
      "load_grid",
      [](const std::filesystem::path& path) {
        ScalarGrid g = load_grid_csv(path);
        py::dict meta;
        meta["width"] = g.width();
        meta["height"] = g.height();
        meta["unit"] = std::string(to_string(g.unit()));
        return py::make_tuple(to_array(g), meta);
      },
      py::arg("path"), "Reads a grid CSV into an (ny, nx) array and its header.");
  m.def(
      "save_grid",
      [](const std::filesystem::path& path,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& values,
         const std::string& unit, double width, double height) {
        save_grid_csv(path, from_array(values, unit_from_string(unit), width, height));
      },
      py::arg("path"), py::arg("values"), py::arg("unit") = "mT", py::arg("width") = 1.0,
      py::arg("height") = 1.0);
}
