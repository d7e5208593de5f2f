// nvscan: simulate tracked NV scans and reconstruct fields from fringe images.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nvscan/error.hpp"
#include "nvscan/io.hpp"
#include "nvscan/pipeline.hpp"

namespace fs = std::filesystem;
using namespace nvscan;

namespace {

enum Exit { kOk = 0, kUsage = 1, kTrackingLoss = 2, kFitFailure = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::vector<double> counts;
  std::string out = "nvscan_out";
  bool strict = false;
};

ExperimentConfig load_experiment(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? reference_scan() : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.lambda) cfg.fit.lambda = *c.lambda;
  if (!c.counts.empty()) cfg.shape.baseline = c.counts.front();
  cfg.validate();
  return cfg;
}

void save_map(const fs::path& dir, const std::string& name, const ScalarGrid& g) {
  save_grid_csv(dir / (name + ".csv"), g);
  save_pgm(dir / (name + ".pgm"), g);
}

void write_fringes(const fs::path& dir, const FringeMap& fr) {
  save_map(dir, "fringes", fr.s);
  ScalarGrid mask(fr.s.nx(), fr.s.ny(), Unit::Dimensionless);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = fr.valid[i];
  save_grid_csv(dir / "valid.csv", mask);
}

std::string diagnostics_json(const FitDiagnostics& d) {
  nlohmann::ordered_json j;
  j["iterations"] = d.iterations;
  j["initial_objective"] = d.initial_objective;
  j["final_objective"] = d.final_objective;
  j["gradient_norm"] = d.gradient_norm;
  j["converged"] = d.converged;
  j["message"] = d.message;
  return j.dump(2) + "\n";
}

int fit_status(const FitDiagnostics& d, bool strict) {
  if (d.converged) return kOk;
  std::cerr << "warning: TPS fit stopped before convergence after " << d.iterations
            << " iterations (" << d.message << ")\n";
  return strict ? kFitFailure : kOk;
}

void print_report(const DeviationReport& r) {
  std::printf("max deviation %.4f mT (interior %.4f), interior rms %.4f mT, %.1f%% <= %.3f mT\n",
              r.max_all, r.max_interior, r.rms_interior, 100.0 * r.fraction_below, r.threshold);
}

Stage parse_stage(const std::string& s) {
  if (s == "field") return Stage::Field;
  if (s == "track") return Stage::Track;
  if (s == "reconstruct") return Stage::Reconstruct;
  return Stage::Evaluate;
}

int run_simulate(const Common& c, const std::string& stage_name) {
  const ExperimentConfig cfg = load_experiment(c);
  const Stage stage = parse_stage(stage_name);
  const fs::path out = c.out;
  fs::create_directories(out);
  save_config(out / "config.json", cfg);

  if (stage == Stage::Field) {
    save_map(out, "true_field", true_field_map(cfg));
    return kOk;
  }
  const SimulationResult r = run_simulation(cfg, stage);
  save_map(out, "true_field", r.true_field);
  save_grid_csv(out / "true_frequency.csv", r.true_frequency);
  write_text(out / "line_shape.json", line_shape_to_json(r.spectrum.shape));
  save_scan_record(out / "raw", r.raw);
  std::printf("pixel-0 resonance %.4f MHz, max detuning %.3f MHz at (%d, %d)\n",
              r.spectrum.resonance, r.lock.max_detuning, r.lock.worst.ix, r.lock.worst.iy);
  if (!r.fit) return kOk;

  save_scan_record(out / "record", *r.record);
  write_fringes(out, *r.fringes);
  save_model(out / "model.json", r.fit->model, cfg.fit);
  write_text(out / "fit.json", diagnostics_json(r.fit->diagnostics));
  save_map(out, "reconstructed", *r.reconstructed);
  save_map(out, "predicted_fringes", *r.predicted_fringes);
  if (r.report) {
    save_map(out, "deviation", r.report->deviation);
    write_text(out / "report.json", report_to_json(*r.report));
    print_report(*r.report);
  }
  return fit_status(r.fit->diagnostics, c.strict);
}

int run_reconstruct(const Common& c, const std::string& record_dir, const std::string& shape_path) {
  ExperimentConfig cfg = load_experiment(c);
  const ScanRecord record = load_scan_record(record_dir);
  fs::path shape_file = shape_path;
  if (shape_file.empty() && fs::exists(fs::path(record_dir).parent_path() / "line_shape.json")) {
    shape_file = fs::path(record_dir).parent_path() / "line_shape.json";
  }
  const LineShape shape = shape_file.empty() ? cfg.shape : line_shape_from_json(read_text(shape_file));
  const Reconstruction rec = reconstruct(record, shape, cfg.frame, cfg.fit);
  const fs::path out = c.out;
  fs::create_directories(out);
  write_fringes(out, rec.fringes);
  save_model(out / "model.json", rec.fit.model, cfg.fit);
  write_text(out / "fit.json", diagnostics_json(rec.fit.diagnostics));
  save_map(out, "reconstructed", rec.field);
  save_map(out, "predicted_fringes", rec.predicted_fringes);
  std::printf("fringe rms %.5f over %zu valid pixels\n", fringe_rms(rec.predicted_fringes, rec.fringes),
              rec.fringes.valid_count());
  return fit_status(rec.fit.diagnostics, c.strict);
}

int run_evaluate(const Common& c, const std::string& reconstructed, const std::string& truth,
                 int margin, double threshold) {
  const DeviationReport r =
      compute_deviation(load_grid_csv(reconstructed), load_grid_csv(truth), margin, threshold);
  const fs::path out = c.out;
  fs::create_directories(out);
  save_map(out, "deviation", r.deviation);
  write_text(out / "report.json", report_to_json(r));
  print_report(r);
  return kOk;
}

int run_sweep(Common c) {
  std::vector<double> counts = c.counts.empty() ? std::vector<double>{5000, 3000, 1000, 500} : c.counts;
  c.counts.clear();
  const ExperimentConfig cfg = load_experiment(c);
  const auto entries = noise_sweep(cfg, counts);
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  bool lost = false;
  for (const auto& e : entries) {
    nlohmann::ordered_json row;
    row["counts"] = e.counts;
    row["seed"] = e.seed;
    row["tracking_lost"] = e.tracking_lost;
    row["max_detuning"] = e.lock.max_detuning;
    row["converged"] = e.converged;
    if (e.report) {
      row["max_interior"] = e.report->max_interior;
      row["rms_interior"] = e.report->rms_interior;
      row["fraction_below"] = e.report->fraction_below;
      std::printf("N0 %7.0f: ", e.counts);
      print_report(*e.report);
    } else {
      std::printf("N0 %7.0f: tracking lost (detuning %.2f MHz)\n", e.counts, e.lock.max_detuning);
    }
    lost = lost || e.tracking_lost;
    j.push_back(row);
  }
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "sweep.json", j.dump(2) + "\n");
  return lost ? kTrackingLoss : kOk;
}

void add_common(CLI::App* app, Common& c, bool counts_list) {
  app->add_option("--config", c.config, "experiment config (JSON); defaults to the reference dipole scan")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "override the RNG seed");
  app->add_option("--lambda", c.lambda, "override the smoothing weight")->check(CLI::NonNegativeNumber);
  app->add_option("--counts", c.counts,
                  counts_list ? "mean photon counts to sweep (comma separated)"
                              : "override the mean photon count")
      ->delimiter(',')
      ->check(CLI::PositiveNumber)
      ->expected(1, counts_list ? 64 : 1);
  app->add_option("--out", c.out, "output directory");
  app->add_flag("--strict", c.strict, "exit 3 when the fit stops before converging");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated NV resonance-tracking scans and thin-plate-spline field reconstruction"};
  app.set_version_flag("--version", NVSCAN_VERSION);
  app.require_subcommand(1);

  Common simulate_opts, track_opts, reconstruct_opts, evaluate_opts, sweep_opts;
  std::string stage = "evaluate";
  auto* simulate = app.add_subcommand("simulate", "run the synthetic experiment end to end");
  add_common(simulate, simulate_opts, false);
  simulate->add_option("--stage", stage, "last stage to run")
      ->check(CLI::IsMember({"field", "track", "reconstruct", "evaluate"}));

  auto* track = app.add_subcommand("track", "simulate the scan and write the raw record");
  add_common(track, track_opts, false);

  std::string record_dir, shape_path;
  auto* recon = app.add_subcommand("reconstruct", "fit a scan record (simulated or external CSV)");
  add_common(recon, reconstruct_opts, false);
  recon->add_option("record", record_dir, "scan record directory (c0/c_minus/c_plus/f0 CSV)")
      ->required()
      ->check(CLI::ExistingDirectory);
  recon->add_option("--shape", shape_path, "line shape JSON (default: line_shape.json beside the record, else config)")
      ->check(CLI::ExistingFile);

  std::string recon_csv, truth_csv;
  int margin = 4;
  double threshold = 0.03;
  auto* evaluate = app.add_subcommand("evaluate", "compare a reconstructed field with the truth");
  evaluate->add_option("reconstructed", recon_csv)->required()->check(CLI::ExistingFile);
  evaluate->add_option("truth", truth_csv)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--margin", margin, "border pixels excluded from interior statistics");
  evaluate->add_option("--threshold", threshold, "deviation threshold (mT)");
  evaluate->add_option("--out", evaluate_opts.out, "output directory");

  auto* sweep = app.add_subcommand("sweep", "repeat the simulation over mean photon counts");
  add_common(sweep, sweep_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return run_simulate(simulate_opts, stage);
    if (*track) return run_simulate(track_opts, "track");
    if (*recon) return run_reconstruct(reconstruct_opts, record_dir, shape_path);
    if (*evaluate) return run_evaluate(evaluate_opts, recon_csv, truth_csv, margin, threshold);
    if (*sweep) return run_sweep(sweep_opts);
  } catch (const TrackingLoss& e) {
    std::cerr << "tracking loss: " << e.what() << "\n";
    return kTrackingLoss;
  } catch (const FitError& e) {
    std::cerr << "fit failed: " << e.what() << "\n";
    return kFitFailure;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
