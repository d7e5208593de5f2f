#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "nvscan/field.hpp"
#include "nvscan/grid.hpp"

namespace nvscan {

enum class ScanOrder { Raster, Serpentine };

enum class Shift : std::uint8_t { None, Down, Up };

struct Pixel {
  int ix = 0;
  int iy = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

struct ScanParams {
  double delta = 12.0;      // MHz, offset of the side frequencies and shift step
  double threshold = 0.96;  // k
  ScanOrder order = ScanOrder::Serpentine;
  double f_init = 0.0;      // MHz, resonance found at the first pixel

  void validate() const;
};

/// Photon counts recorded at one pixel for a microwave frequency.
using PlSource = std::function<double(Pixel, double)>;

/// Output of a tracking scan.
///
/// `f0` holds the frequency used to excite each pixel's C0; `shifts` records
/// which pixels triggered a step of all three frequencies for the next pixel.
struct ScanRecord {
  ScalarGrid c0;
  ScalarGrid c_minus;
  ScalarGrid c_plus;
  ScalarGrid f0;
  ScanParams params;
  std::vector<Shift> shifts;
  bool post_processed = false;

  int nx() const { return f0.nx(); }
  int ny() const { return f0.ny(); }
  void validate() const;
};

/// Normalized PL map with a validity mask. Invalid pixels (both reference
/// counts zero) carry S = 1 and must be skipped downstream.
struct FringeMap {
  ScalarGrid s;
  std::vector<std::uint8_t> valid;

  std::size_t valid_count() const;
};

/// Pixel visiting order of a scan.
std::vector<Pixel> scan_path(int nx, int ny, ScanOrder order);

/// Runs the three-frequency tracking protocol over an nx x ny scan.
///
/// Per pixel: C0 at f0, C- at f0 - delta, C+ at f0 + delta (sampled in that
/// order). If C- < C+ and k C0 > C- all frequencies step down by delta for
/// the next pixel; otherwise, if k C0 > C+, they step up.
ScanRecord track_scan(const PlSource& source, int nx, int ny, const ScanParams& params);

/// Exchanges C0 with C- (C+) at every down (up) shifted pixel and moves f0 by
/// -delta (+delta) to match.
ScanRecord post_process(const ScanRecord& record);

/// S = C0 / max(C-, C+) per pixel.
FringeMap normalized_pl(const ScanRecord& record);

/// Largest on-axis field step per pixel (mT) the three-frequency window spans: 2 delta / gamma.
double max_trackable_gradient(const ScanParams& params, const NvFrame& frame);

/// Worst excitation detuning |f0 - f_true| over a scan, for simulated data.
struct LockReport {
  double max_detuning = 0.0;  // MHz
  Pixel worst;
  bool lost = false;
};

/// Compares the recorded excitation frequencies to the true resonance map.
/// `loss_limit` (MHz) is the detuning beyond which lock counts as lost.
LockReport assess_lock(const ScanRecord& record, const ScalarGrid& true_frequency,
                       double loss_limit);

}  // namespace nvscan
