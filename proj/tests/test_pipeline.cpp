#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "nvscan/error.hpp"
#include "nvscan/io.hpp"
#include "nvscan/pipeline.hpp"

using namespace nvscan;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_reference(std::uint64_t seed, int n = 24) {
  ExperimentConfig cfg = reference_scan(seed);
  cfg.nx = cfg.ny = n;
  cfg.fit.max_iterations = 300;
  cfg.corner_margin = 2;
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nvscan_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("uniform field gives a flat fringe map") {
  ExperimentConfig cfg = small_reference(1, 12);
  cfg.source = UniformField{0.3};
  cfg.shot_noise = false;
  const auto r = run_simulation(cfg);
  const double expected =
      lineshape_value(cfg.shape, 0.0) / lineshape_value(cfg.shape, cfg.scan.delta);
  for (double s : r.fringes->s.values()) CHECK(s == doctest::Approx(expected).epsilon(1e-9));
  for (Shift s : r.raw.shifts) CHECK(s == Shift::None);
  CHECK(r.report->max_all < 1e-4);

  cfg.shot_noise = true;
  const auto noisy = run_simulation(cfg);
  CHECK(noisy.report->rms_interior > 0.0);
  CHECK(noisy.report->rms_interior < 0.05);
}

TEST_CASE("simulation stages and report consistency") {
  const ExperimentConfig cfg = small_reference(3);
  const auto track_only = run_simulation(cfg, Stage::Track);
  CHECK_FALSE(track_only.fit.has_value());
  const auto full = run_simulation(cfg);
  REQUIRE(full.report.has_value());
  CHECK(full.report->max_interior <= full.report->max_all);
  CHECK(full.record->post_processed);
  CHECK(full.raw.f0 == track_only.raw.f0);
  CHECK(full.fit->model.constraint_residual() < 1e-8);

  const double flat = [&] {
    double sq = 0.0;
    for (double s : full.fringes->s.values()) sq += (1.0 - s) * (1.0 - s);
    return std::sqrt(sq / full.fringes->s.size());
  }();
  CHECK(fringe_rms(*full.predicted_fringes, *full.fringes) < flat);
}

TEST_CASE("ramps beyond the gradient limit raise tracking loss") {
  ExperimentConfig cfg = small_reference(1, 16);
  cfg.shot_noise = false;
  cfg.source = RampField{2.5 * cfg.scan.delta / cfg.frame.gyromagnetic_ratio, 0.0, 0.0};
  try {
    run_simulation(cfg);
    FAIL("expected tracking loss");
  } catch (const TrackingLoss& e) {
    CHECK(e.detuning() > 3.0 * cfg.scan.delta);
    CHECK(std::string(e.what()).find("track") == 0);
  }
}

TEST_CASE("errors carry the stage") {
  ExperimentConfig cfg = small_reference(1, 8);
  cfg.shot_noise = false;
  cfg.sweep.center_offset = 400.0;
  try {
    run_simulation(cfg);
    FAIL("expected a fit error");
  } catch (const FitError& e) {
    CHECK(std::string(e.what()).rfind("spectrum: ", 0) == 0);
  }
  cfg = small_reference(1, 8);
  cfg.scan.threshold = 1.5;
  CHECK_THROWS_AS(run_simulation(cfg), ConfigError);
}

TEST_CASE("noise sweep") {
  const ExperimentConfig cfg = small_reference(2, 16);
  const auto one = noise_sweep(cfg, {3000.0});
  REQUIRE(one.size() == 1);
  CHECK(one[0].counts == 3000.0);
  CHECK_FALSE(one[0].tracking_lost);
  CHECK(one[0].report.has_value());
  CHECK_THROWS_AS(noise_sweep(cfg, {}), ConfigError);
}

TEST_CASE("dynamic range demo guards and a reduced span") {
  ExperimentConfig cfg = small_reference(4, 32);
  std::get<DipoleField>(cfg.source).dipole.moment *= 0.75;
  const ScalarGrid f = true_field_map(cfg);
  const double span = f.max() - f.min();
  CHECK(span > 0.5);
  CHECK(span < 0.55);
  const DeviationReport rep = dynamic_range_demo(cfg, 0.5);
  CHECK(rep.max_interior < 0.1);
  CHECK_THROWS_AS(dynamic_range_demo(cfg, 10.0), ConfigError);

  ExperimentConfig steep = wide_range_scan(1);
  steep.nx = steep.ny = 12;
  CHECK_THROWS_AS(dynamic_range_demo(steep, 10.0), ConfigError);

  const ExperimentConfig dyn = wide_range_scan(1);
  const ScalarGrid big = true_field_map(dyn);
  CHECK(big.max() - big.min() >= 10.0);
  CHECK(max_path_step(big, dyn.scan.order) < max_trackable_gradient(dyn.scan, dyn.frame));
  CHECK(fixed_sweep_coverage(10, 2.5, dyn.frame) < 1.0);
}

TEST_CASE("deviation report") {
  ScalarGrid truth(10, 10, Unit::MilliTesla), rec(10, 10, Unit::MilliTesla);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i] = 0.01 * i;
    rec[i] = truth[i] + 0.02;
  }
  rec(0, 0) += 1.0;
  rec(5, 5) += 0.05;
  const auto r = compute_deviation(rec, truth, 2);
  CHECK(r.max_all == doctest::Approx(1.02));
  CHECK(r.max_interior == doctest::Approx(0.07));
  CHECK(r.fraction_below == doctest::Approx(35.0 / 36.0));
  CHECK_THROWS_AS(compute_deviation(rec, truth, 5), ConfigError);
}

TEST_CASE("identical configs give byte-identical outputs") {
  const ExperimentConfig cfg = small_reference(9, 16);
  const auto a = run_simulation(cfg);
  const auto b = run_simulation(cfg);
  CHECK(format_grid_csv(*a.reconstructed) == format_grid_csv(*b.reconstructed));
  CHECK(format_grid_csv(a.raw.c0) == format_grid_csv(b.raw.c0));
  CHECK(model_to_json(a.fit->model, cfg.fit) == model_to_json(b.fit->model, cfg.fit));
  CHECK(encode_pgm(a.report->deviation) == encode_pgm(b.report->deviation));
  const auto c = run_simulation(small_reference(10, 16));
  CHECK(format_grid_csv(a.raw.c0) != format_grid_csv(c.raw.c0));
}

TEST_CASE("reconstructing from a saved record reproduces the full run") {
  const ExperimentConfig cfg = small_reference(5, 20);
  const auto full = run_simulation(cfg);
  const fs::path dir = scratch_dir("stage");
  save_scan_record(dir / "raw", full.raw);
  write_text(dir / "shape.json", line_shape_to_json(full.spectrum.shape));
  const ScanRecord loaded = load_scan_record(dir / "raw");
  const LineShape shape = line_shape_from_json(read_text(dir / "shape.json"));
  const Reconstruction again = reconstruct(loaded, shape, cfg.frame, cfg.fit);
  CHECK(again.fit.model == full.fit->model);
  CHECK(again.field == *full.reconstructed);

  save_scan_record(dir / "processed", *full.record);
  const Reconstruction from_processed =
      reconstruct(load_scan_record(dir / "processed"), shape, cfg.frame, cfg.fit);
  CHECK(from_processed.fit.model == full.fit->model);

  save_grid_csv(dir / "reconstructed.csv", *full.reconstructed);
  save_grid_csv(dir / "true.csv", full.true_field);
  const auto rep = compute_deviation(load_grid_csv(dir / "reconstructed.csv"),
                                     load_grid_csv(dir / "true.csv"), cfg.corner_margin);
  CHECK(std::abs(rep.max_interior - full.report->max_interior) <= 1e-12);
  CHECK(std::abs(rep.rms_interior - full.report->rms_interior) <= 1e-12);
  for (std::size_t i = 0; i < rep.deviation.size(); ++i) {
    CHECK(std::abs(rep.deviation[i] - full.report->deviation[i]) <= 1e-12);
  }
  fs::remove_all(dir);
}

TEST_CASE("lambda search") {
  const ExperimentConfig cfg = small_reference(6, 16);
  const auto r = run_simulation(cfg, Stage::Track);
  const auto lambdas = log_space(1e-11, 1e-7, 5);
  CHECK(lambdas.front() == doctest::Approx(1e-11));
  CHECK(lambdas[2] == doctest::Approx(1e-9));
  CHECK(lambdas.back() == doctest::Approx(1e-7));
  const auto scan = select_lambda(r.raw, r.spectrum.shape, cfg.fit, lambdas);
  REQUIRE(scan.fringe_rms.size() == 5);
  for (double v : scan.fringe_rms) CHECK(v >= scan.fringe_rms[scan.best]);
  CHECK_THROWS_AS(log_space(0.0, 1.0, 3), ConfigError);
}

}
