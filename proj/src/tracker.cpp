#include "nvscan/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <utility>

#include "nvscan/error.hpp"

namespace nvscan {

void ScanParams::validate() const {
  if (!(delta > 0.0)) throw ConfigError("tracking step delta must be positive");
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ConfigError("tracking threshold k must lie in (0, 1]");
  }
  if (!std::isfinite(f_init)) throw ConfigError("initial frequency must be finite");
}

void ScanRecord::validate() const {
  if (!c0.same_shape(f0) || !c_minus.same_shape(f0) || !c_plus.same_shape(f0)) {
    throw ConfigError("scan record grids differ in shape");
  }
  if (shifts.size() != f0.size()) throw ConfigError("scan record shift log has wrong length");
  params.validate();
}

std::size_t FringeMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::vector<Pixel> scan_path(int nx, int ny, ScanOrder order) {
  std::vector<Pixel> path;
  path.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
  for (int iy = 0; iy < ny; ++iy) {
    const bool reverse = order == ScanOrder::Serpentine && (iy % 2 == 1);
    for (int j = 0; j < nx; ++j) path.push_back({reverse ? nx - 1 - j : j, iy});
  }
  return path;
}

ScanRecord track_scan(const PlSource& source, int nx, int ny, const ScanParams& params) {
  params.validate();
  ScanRecord rec{ScalarGrid(nx, ny, Unit::Counts), ScalarGrid(nx, ny, Unit::Counts),
                 ScalarGrid(nx, ny, Unit::Counts), ScalarGrid(nx, ny, Unit::MegaHertz),
                 params,
                 std::vector<Shift>(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny),
                                    Shift::None)};

  double f0 = params.f_init;
  for (const Pixel p : scan_path(nx, ny, params.order)) {
    double c0 = 0.0;
    double cm = 0.0;
    double cp = 0.0;
    try {
      c0 = source(p, f0);
      cm = source(p, f0 - params.delta);
      cp = source(p, f0 + params.delta);
    } catch (const std::exception& e) {
      throw Error("PL source failed at pixel (" + std::to_string(p.ix) + ", " +
                  std::to_string(p.iy) + "): " + e.what());
    }
    const auto idx = rec.f0.index(p.ix, p.iy);
    rec.c0[idx] = c0;
    rec.c_minus[idx] = cm;
    rec.c_plus[idx] = cp;
    rec.f0[idx] = f0;

    const double gate = params.threshold * c0;
    if (cm < cp) {
      if (gate > cm) {
        rec.shifts[idx] = Shift::Down;
        f0 -= params.delta;
      }
    } else if (gate > cp) {
      rec.shifts[idx] = Shift::Up;
      f0 += params.delta;
    }
  }
  return rec;
}

ScanRecord post_process(const ScanRecord& record) {
  ScanRecord out = record;
  const double delta = record.params.delta;
  for (std::size_t i = 0; i < out.shifts.size(); ++i) {
    switch (out.shifts[i]) {
      case Shift::Down:
        std::swap(out.c0[i], out.c_minus[i]);
        out.f0[i] -= delta;
        break;
      case Shift::Up:
        std::swap(out.c0[i], out.c_plus[i]);
        out.f0[i] += delta;
        break;
      case Shift::None:
        break;
    }
  }
  out.post_processed = true;
  return out;
}

FringeMap normalized_pl(const ScanRecord& record) {
  FringeMap map{ScalarGrid(record.nx(), record.ny(), Unit::Dimensionless),
                std::vector<std::uint8_t>(record.f0.size(), 0)};
  for (std::size_t i = 0; i < record.f0.size(); ++i) {
    const double ref = std::max(record.c_minus[i], record.c_plus[i]);
    if (ref > 0.0) {
      map.s[i] = record.c0[i] / ref;
      map.valid[i] = 1;
    } else {
      map.s[i] = 1.0;
    }
  }
  return map;
}

double max_trackable_gradient(const ScanParams& params, const NvFrame& frame) {
  return 2.0 * params.delta / frame.gyromagnetic_ratio;
}

LockReport assess_lock(const ScanRecord& record, const ScalarGrid& true_frequency,
                       double loss_limit) {
  if (!record.f0.same_shape(true_frequency)) {
    throw ConfigError("true frequency map does not match the scan record");
  }
  LockReport report;
  for (int iy = 0; iy < record.ny(); ++iy) {
    for (int ix = 0; ix < record.nx(); ++ix) {
      const double d = std::abs(record.f0(ix, iy) - true_frequency(ix, iy));
      if (d > report.max_detuning) {
        report.max_detuning = d;
        report.worst = {ix, iy};
      }
    }
  }
  report.lost = report.max_detuning > loss_limit;
  return report;
}

}  // namespace nvscan
