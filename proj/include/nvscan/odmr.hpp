#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nvscan {

/// Random engine used for every stochastic draw in the library. Callers own
/// and pass it explicitly; nothing draws from hidden global state.
using Rng = std::mt19937_64;

/// Gaussian ODMR dip, parameterized by its full width at half maximum.
struct LineShape {
  double contrast = 0.2;   // dip depth A, in (0, 1)
  double fwhm = 12.0;      // MHz
  double baseline = 5000;  // expected off-resonance photons per integration window

  void validate() const;
};

/// Normalized PL g(x) = 1 - A exp(-4 ln2 x^2 / w^2) at detuning x (MHz).
double lineshape_value(const LineShape& shape, double detuning);

/// dg/dx at detuning x.
double lineshape_slope(const LineShape& shape, double detuning);

/// One Poisson photon count with mean baseline * g(f_mw - f_res).
std::int64_t sample_pl(const LineShape& shape, double f_mw, double f_res, Rng& rng);

struct SpectrumFit {
  double resonance = 0.0;  // MHz
  LineShape shape;
  double residual_rms = 0.0;  // RMS residual relative to the fitted baseline
  int iterations = 0;
};

/// Least-squares fit of baseline * g(f - f_res) to a swept spectrum.
///
/// Needs at least five points with the count minimum strictly inside the
/// sweep. Throws FitError when the dip is not bracketed, the solver fails, or
/// the fitted parameters leave their valid ranges.
SpectrumFit fit_spectrum(std::span<const double> frequencies, std::span<const double> counts);

/// Evenly spaced sweep of `points` frequencies centred on `center`.
std::vector<double> sweep_frequencies(double center, double span, int points);

}  // namespace nvscan
