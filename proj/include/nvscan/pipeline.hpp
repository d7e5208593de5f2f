#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "nvscan/field.hpp"
#include "nvscan/grid.hpp"
#include "nvscan/odmr.hpp"
#include "nvscan/tps.hpp"
#include "nvscan/tracker.hpp"

namespace nvscan {

struct DipoleField {
  DipoleSource dipole;
  ScanWindow window;
};

/// Linear on-axis field b = offset + gradient * (ix cos(direction) + iy sin(direction)).
struct RampField {
  double gradient = 0.1;   // mT per pixel
  double direction = 0.0;  // radians from the fast scan axis
  double offset = 0.0;     // mT
};

struct UniformField {
  double value = 0.0;  // mT
};

using FieldSource = std::variant<DipoleField, RampField, UniformField>;

/// Full-spectrum sweep taken at the first pixel to locate the resonance.
struct SpectrumSweep {
  double center_offset = 0.0;  // MHz, relative to the zero-field-offset resonance
  double span = 100.0;         // MHz
  int points = 101;
};

struct ExperimentConfig {
  int nx = 64;
  int ny = 64;
  FieldSource source = DipoleField{};
  NvFrame frame;
  LineShape shape;
  ScanParams scan;
  FitConfig fit;
  SpectrumSweep sweep;
  bool shot_noise = true;
  /// Pixels excluded along each border when computing interior statistics.
  int corner_margin = 4;
  /// |f0 - f_true| beyond this many delta counts as tracking loss.
  double loss_limit = 3.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Dipole scan with 0.4-1.1 mT on-axis range, N0 = 5000, delta = 12 MHz,
/// k = 0.96, lambda = 1e-9, 5.5 mT bias.
ExperimentConfig reference_scan(std::uint64_t seed = 1);

/// Dipole field spanning about 10 mT under a 10 mT bias, kept below delta per
/// pixel along the scan path.
ExperimentConfig wide_range_scan(std::uint64_t seed = 1);

struct DeviationReport {
  ScalarGrid deviation;
  double max_all = 0.0;
  double max_interior = 0.0;
  double rms_interior = 0.0;
  double fraction_below = 0.0;  // interior pixels with deviation <= threshold
  double threshold = 0.03;      // mT
  int margin = 4;
};

DeviationReport compute_deviation(const ScalarGrid& reconstructed, const ScalarGrid& truth,
                                  int margin, double threshold = 0.03);

enum class Stage { Field, Track, Reconstruct, Evaluate };

struct SimulationResult {
  ScalarGrid true_field;      // mT, bias excluded
  ScalarGrid true_frequency;  // MHz
  SpectrumFit spectrum;
  ScanRecord raw;
  LockReport lock;
  std::optional<ScanRecord> record;  // post-processed
  std::optional<FringeMap> fringes;
  std::optional<FitResult> fit;
  std::optional<ScalarGrid> reconstructed;  // mT, bias subtracted
  std::optional<ScalarGrid> predicted_fringes;
  std::optional<DeviationReport> report;
};

/// On-axis field map (mT, bias excluded) of the configured source.
ScalarGrid true_field_map(const ExperimentConfig& cfg);

/// Runs field -> spectrum fit -> tracking -> post-processing -> TPS fit ->
/// deviation, stopping after `last`. Deterministic for a given config.
/// Throws TrackingLoss when the excitation frequency drifts more than
/// cfg.loss_limit * delta from the true resonance.
SimulationResult run_simulation(const ExperimentConfig& cfg, Stage last = Stage::Evaluate);

/// Post-processing, normalization, TPS fit and field reconstruction of a raw
/// or post-processed scan record.
struct Reconstruction {
  ScanRecord record;
  FringeMap fringes;
  FitResult fit;
  ScalarGrid field;
  ScalarGrid predicted_fringes;
};

Reconstruction reconstruct(const ScanRecord& record, const LineShape& shape,
                           const NvFrame& frame, const FitConfig& fit);

struct SweepEntry {
  double counts = 0.0;
  std::uint64_t seed = 0;
  LockReport lock;
  bool tracking_lost = false;
  std::optional<DeviationReport> report;
  bool converged = false;
};

/// One simulation per mean photon count, identical otherwise.
std::vector<SweepEntry> noise_sweep(const ExperimentConfig& cfg,
                                    const std::vector<double>& counts);

/// Largest on-axis field change between consecutive pixels of the scan path.
double max_path_step(const ScalarGrid& field, ScanOrder order);

/// Runs a high-dynamic-range scan. The source must span at least
/// `min_span` mT while changing by less than 2 delta / gamma per pixel along
/// the path. Tracking loss surfaces as TrackingLoss.
DeviationReport dynamic_range_demo(const ExperimentConfig& cfg, double min_span = 10.0);

/// On-axis field range (mT) covered by a fixed sweep of `bins` bins.
double fixed_sweep_coverage(int bins, double bin_width, const NvFrame& frame);

/// Lambda grid search by fringe-prediction RMS against the measured S map.
struct LambdaScan {
  std::vector<double> lambdas;
  std::vector<double> fringe_rms;
  std::size_t best = 0;
};

LambdaScan select_lambda(const ScanRecord& record, const LineShape& shape,
                         const FitConfig& base, const std::vector<double>& lambdas);

/// n log-spaced values from lo to hi inclusive.
std::vector<double> log_space(double lo, double hi, int n);

}  // namespace nvscan
