#include "nvscan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nvscan/error.hpp"

namespace nvscan {

namespace {

// Re-throws `e` with the pipeline stage prepended, preserving the error kind.
template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const TrackingLoss&) {
    throw;
  } catch (const FitError& e) {
    throw FitError(std::string(stage) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(stage) + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError(std::string(stage) + ": " + e.what());
  } catch (const Error& e) {
    throw Error(std::string(stage) + ": " + e.what());
  }
}

ScalarGrid to_frequency_map(const ScalarGrid& field, const NvFrame& frame) {
  ScalarGrid out(field.nx(), field.ny(), Unit::MegaHertz);
  for (std::size_t i = 0; i < field.size(); ++i) out[i] = field_to_frequency(field[i], frame);
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (nx < 2 || ny < 2) throw ConfigError("grid must be at least 2x2");
  frame.validate();
  shape.validate();
  fit.validate();
  ScanParams probe = scan;
  probe.f_init = 0.0;
  probe.validate();
  if (sweep.points < 5 || !(sweep.span > 0.0)) {
    throw ConfigError("spectrum sweep needs at least 5 points over a positive span");
  }
  if (corner_margin < 0 || 2 * corner_margin >= std::min(nx, ny)) {
    throw ConfigError("corner margin leaves no interior pixels");
  }
  if (!(loss_limit > 0.0)) throw ConfigError("loss limit must be positive");
  if (const auto* d = std::get_if<DipoleField>(&source)) {
    d->dipole.validate();
    if (!(d->window.width > 0.0) || !(d->window.height > 0.0)) {
      throw ConfigError("scan window must have positive extent");
    }
  }
}

ExperimentConfig reference_scan(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  return cfg;
}

ExperimentConfig wide_range_scan(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.frame.bias_field = 10.0;
  DipoleField src;
  src.dipole.position = Vec3(0.0, 0.0, 0.0);
  src.dipole.standoff = 0.7e-6;
  src.dipole.moment = Vec3(0.0, 0.0, 1.8e-14);
  cfg.source = src;
  cfg.sweep.center_offset = 150.0;
  cfg.sweep.span = 400.0;
  cfg.sweep.points = 201;
  return cfg;
}

ScalarGrid true_field_map(const ExperimentConfig& cfg) {
  return std::visit(
      [&](const auto& src) -> ScalarGrid {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, DipoleField>) {
          return sample_on_axis_field(src.dipole, cfg.frame, src.window, cfg.nx, cfg.ny);
        } else if constexpr (std::is_same_v<T, RampField>) {
          ScalarGrid g(cfg.nx, cfg.ny, Unit::MilliTesla);
          const double cx = std::cos(src.direction);
          const double sy = std::sin(src.direction);
          for (int iy = 0; iy < cfg.ny; ++iy) {
            for (int ix = 0; ix < cfg.nx; ++ix) {
              g(ix, iy) = src.offset + src.gradient * (ix * cx + iy * sy);
            }
          }
          return g;
        } else {
          ScalarGrid g(cfg.nx, cfg.ny, Unit::MilliTesla);
          std::fill(g.values().begin(), g.values().end(), src.value);
          return g;
        }
      },
      cfg.source);
}

DeviationReport compute_deviation(const ScalarGrid& reconstructed, const ScalarGrid& truth,
                                  int margin, double threshold) {
  if (!reconstructed.same_shape(truth)) {
    throw ConfigError("reconstructed and true fields differ in shape");
  }
  const int nx = truth.nx();
  const int ny = truth.ny();
  if (margin < 0 || 2 * margin >= std::min(nx, ny)) {
    throw ConfigError("corner margin leaves no interior pixels");
  }
  DeviationReport rep{ScalarGrid(nx, ny, Unit::MilliTesla)};
  rep.threshold = threshold;
  rep.margin = margin;
  double sq = 0.0;
  std::size_t n = 0;
  std::size_t below = 0;
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double d = std::abs(reconstructed(ix, iy) - truth(ix, iy));
      rep.deviation(ix, iy) = d;
      rep.max_all = std::max(rep.max_all, d);
      const bool interior =
          ix >= margin && iy >= margin && ix < nx - margin && iy < ny - margin;
      if (!interior) continue;
      rep.max_interior = std::max(rep.max_interior, d);
      sq += d * d;
      below += d <= threshold ? 1 : 0;
      ++n;
    }
  }
  rep.rms_interior = std::sqrt(sq / static_cast<double>(n));
  rep.fraction_below = static_cast<double>(below) / static_cast<double>(n);
  return rep;
}

Reconstruction reconstruct(const ScanRecord& record, const LineShape& shape,
                           const NvFrame& frame, const FitConfig& fit_config) {
  record.validate();
  ScanRecord processed = record.post_processed ? record : post_process(record);
  FringeMap fringes = normalized_pl(processed);
  FitData data = make_fit_data(processed, fringes);
  FitResult result = fit(data, shape, fit_config);
  ScalarGrid field = reconstruct_field(result.model, record.nx(), record.ny(), frame, true);
  ScalarGrid predicted = predict_fringes(result.model, processed, shape);
  return {std::move(processed), std::move(fringes), std::move(result), std::move(field),
          std::move(predicted)};
}

SimulationResult run_simulation(const ExperimentConfig& cfg, Stage last) {
  in_stage("config", [&] { cfg.validate(); });

  ScalarGrid field = in_stage("field", [&] { return true_field_map(cfg); });
  ScalarGrid frequency = to_frequency_map(field, cfg.frame);

  Rng rng(cfg.seed);
  const LineShape& truth_shape = cfg.shape;
  auto counts_at = [&](double f_mw, double f_res) -> double {
    if (cfg.shot_noise) return static_cast<double>(sample_pl(truth_shape, f_mw, f_res, rng));
    return truth_shape.baseline * lineshape_value(truth_shape, f_mw - f_res);
  };

  // Locate the resonance at the first pixel of the path from a full spectrum.
  const Pixel first = scan_path(cfg.nx, cfg.ny, cfg.scan.order).front();
  const double f_first = frequency(first.ix, first.iy);
  SpectrumFit spectrum = in_stage("spectrum", [&] {
    const auto freqs = sweep_frequencies(field_to_frequency(0.0, cfg.frame) +
                                             cfg.sweep.center_offset,
                                         cfg.sweep.span, cfg.sweep.points);
    std::vector<double> counts;
    counts.reserve(freqs.size());
    for (const double f : freqs) counts.push_back(counts_at(f, f_first));
    return fit_spectrum(freqs, counts);
  });

  ScanParams params = cfg.scan;
  params.f_init = spectrum.resonance;
  PlSource source = [&](Pixel p, double f_mw) { return counts_at(f_mw, frequency(p.ix, p.iy)); };
  ScanRecord raw = in_stage("track", [&] { return track_scan(source, cfg.nx, cfg.ny, params); });
  LockReport lock = assess_lock(raw, frequency, cfg.loss_limit * params.delta);

  SimulationResult result{std::move(field), std::move(frequency), spectrum, std::move(raw), lock,
                          {}, {}, {}, {}, {}, {}};
  if (lock.lost) {
    throw TrackingLoss("track: lost the resonance, detuning " +
                           std::to_string(lock.max_detuning) + " MHz at pixel (" +
                           std::to_string(lock.worst.ix) + ", " +
                           std::to_string(lock.worst.iy) + ")",
                       lock.worst.ix, lock.worst.iy, lock.max_detuning);
  }
  if (last == Stage::Field || last == Stage::Track) return result;

  // The reconstruction only sees what an experiment would: the record and the
  // line shape fitted at the first pixel.
  LineShape fitted = spectrum.shape;
  Reconstruction rec = in_stage("reconstruct", [&] {
    return reconstruct(result.raw, fitted, cfg.frame, cfg.fit);
  });
  result.record = std::move(rec.record);
  result.fringes = std::move(rec.fringes);
  result.fit = std::move(rec.fit);
  result.reconstructed = std::move(rec.field);
  result.predicted_fringes = std::move(rec.predicted_fringes);
  if (last == Stage::Reconstruct) return result;

  result.report = in_stage("evaluate", [&] {
    return compute_deviation(*result.reconstructed, result.true_field, cfg.corner_margin);
  });
  return result;
}

std::vector<SweepEntry> noise_sweep(const ExperimentConfig& cfg,
                                    const std::vector<double>& counts) {
  if (counts.empty()) throw ConfigError("noise sweep needs at least one photon count");
  std::vector<SweepEntry> out;
  out.reserve(counts.size());
  for (const double n0 : counts) {
    ExperimentConfig run = cfg;
    run.shape.baseline = n0;
    SweepEntry entry;
    entry.counts = n0;
    entry.seed = cfg.seed;
    try {
      SimulationResult r = run_simulation(run);
      entry.lock = r.lock;
      entry.report = std::move(r.report);
      entry.converged = r.fit->diagnostics.converged;
    } catch (const TrackingLoss& e) {
      entry.tracking_lost = true;
      entry.lock.lost = true;
      entry.lock.max_detuning = e.detuning();
      entry.lock.worst = {e.ix(), e.iy()};
    }
    out.push_back(std::move(entry));
  }
  return out;
}

double max_path_step(const ScalarGrid& field, ScanOrder order) {
  const auto path = scan_path(field.nx(), field.ny(), order);
  double step = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    step = std::max(step, std::abs(field(path[i].ix, path[i].iy) -
                                   field(path[i - 1].ix, path[i - 1].iy)));
  }
  return step;
}

DeviationReport dynamic_range_demo(const ExperimentConfig& cfg, double min_span) {
  const ScalarGrid field = true_field_map(cfg);
  const double span = field.max() - field.min();
  if (span < min_span) {
    throw ConfigError("dynamic range source spans " + std::to_string(span) + " mT, need " +
                      std::to_string(min_span));
  }
  const double limit = max_trackable_gradient(cfg.scan, cfg.frame);
  const double step = max_path_step(field, cfg.scan.order);
  if (!(step < limit)) {
    throw ConfigError("dynamic range source changes by " + std::to_string(step) +
                      " mT per pixel, above the " + std::to_string(limit) + " mT limit");
  }
  return *run_simulation(cfg).report;
}

double fixed_sweep_coverage(int bins, double bin_width, const NvFrame& frame) {
  return bins * bin_width / frame.gyromagnetic_ratio;
}

std::vector<double> log_space(double lo, double hi, int n) {
  if (n < 2 || !(lo > 0.0) || !(hi > lo)) throw ConfigError("invalid log-spaced range");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (n - 1));
  }
  return out;
}

LambdaScan select_lambda(const ScanRecord& record, const LineShape& shape,
                         const FitConfig& base, const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw ConfigError("lambda search needs at least one value");
  const ScanRecord processed = record.post_processed ? record : post_process(record);
  const FringeMap fringes = normalized_pl(processed);
  const FitData data = make_fit_data(processed, fringes);
  LambdaScan scan;
  scan.lambdas = lambdas;
  for (const double lambda : lambdas) {
    FitConfig cfg = base;
    cfg.lambda = lambda;
    const FitResult r = fit(data, shape, cfg);
    scan.fringe_rms.push_back(fringe_rms(predict_fringes(r.model, processed, shape), fringes));
  }
  scan.best = static_cast<std::size_t>(
      std::min_element(scan.fringe_rms.begin(), scan.fringe_rms.end()) - scan.fringe_rms.begin());
  return scan;
}

}  // namespace nvscan
