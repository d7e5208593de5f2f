#include "nvscan/odmr.hpp"

#include <ceres/ceres.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "nvscan/error.hpp"

namespace nvscan {

namespace {

constexpr double kFourLn2 = 4.0 * std::numbers::ln2;

// Parameters: offset of the resonance from the initial guess, contrast,
// fwhm, baseline.
struct SpectrumResidual {
  SpectrumResidual(double frequency, double counts, double f_ref)
      : frequency_(frequency), counts_(counts), f_ref_(f_ref) {}

  template <typename T>
  bool operator()(const T* const p, T* residual) const {
    const T x = T(frequency_ - f_ref_) - p[0];
    const T model = p[3] * (T(1.0) - p[1] * exp(-T(kFourLn2) * x * x / (p[2] * p[2])));
    residual[0] = T(counts_) - model;
    return true;
  }

  double frequency_;
  double counts_;
  double f_ref_;
};

}  // namespace

void LineShape::validate() const {
  if (!(contrast > 0.0 && contrast < 1.0)) throw ConfigError("contrast must lie in (0, 1)");
  if (!(fwhm > 0.0)) throw ConfigError("linewidth must be positive");
  if (!(baseline > 0.0)) throw ConfigError("baseline counts must be positive");
}

double lineshape_value(const LineShape& shape, double detuning) {
  const double u = detuning / shape.fwhm;
  return 1.0 - shape.contrast * std::exp(-kFourLn2 * u * u);
}

double lineshape_slope(const LineShape& shape, double detuning) {
  const double u = detuning / shape.fwhm;
  return shape.contrast * std::exp(-kFourLn2 * u * u) * 2.0 * kFourLn2 * u / shape.fwhm;
}

std::int64_t sample_pl(const LineShape& shape, double f_mw, double f_res, Rng& rng) {
  const double mean = shape.baseline * lineshape_value(shape, f_mw - f_res);
  std::poisson_distribution<std::int64_t> dist(mean);
  return dist(rng);
}

std::vector<double> sweep_frequencies(double center, double span, int points) {
  if (points < 2) throw ConfigError("a sweep needs at least two points");
  std::vector<double> out(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    out[static_cast<std::size_t>(i)] = center - 0.5 * span + span * i / (points - 1);
  }
  return out;
}

SpectrumFit fit_spectrum(std::span<const double> frequencies, std::span<const double> counts) {
  if (frequencies.size() != counts.size()) {
    throw FitError("spectrum fit: frequency and count lists differ in length");
  }
  if (frequencies.size() < 5) throw FitError("spectrum fit: need at least 5 sweep points");

  const auto n = frequencies.size();
  const auto lo = std::min_element(counts.begin(), counts.end());
  const auto hi = std::max_element(counts.begin(), counts.end());
  const auto lo_idx = static_cast<std::size_t>(lo - counts.begin());
  if (lo_idx == 0 || lo_idx + 1 == n) {
    std::ostringstream msg;
    msg << "spectrum fit: dip not bracketed (minimum count " << *lo << " at sweep edge, "
        << frequencies[lo_idx] << " MHz)";
    throw FitError(msg.str());
  }
  if (!(*hi > 0.0)) throw FitError("spectrum fit: no photons recorded");

  const auto [fmin_it, fmax_it] = std::minmax_element(frequencies.begin(), frequencies.end());
  const double fmin = *fmin_it;
  const double fmax = *fmax_it;
  const double f_ref = frequencies[lo_idx];

  double params[4] = {0.0, std::clamp(1.0 - *lo / *hi, 1e-3, 0.99), 0.5 * (fmax - fmin), *hi};

  // Linewidth scan from half the span down to two sample spacings. For each
  // width the counts are linear in (N0, N0 A), so those follow in closed form;
  // LM then starts from the width with the smallest residual.
  const double spacing = (fmax - fmin) / static_cast<double>(n - 1);
  double best_sse = std::numeric_limits<double>::infinity();
  for (double w = 0.5 * (fmax - fmin); w >= 2.0 * spacing; w *= 0.8) {
    double s11 = 0, s12 = 0, s22 = 0, t1 = 0, t2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (frequencies[i] - f_ref) / w;
      const double e = -std::exp(-kFourLn2 * u * u);
      s11 += 1.0;
      s12 += e;
      s22 += e * e;
      t1 += counts[i];
      t2 += e * counts[i];
    }
    const double det = s11 * s22 - s12 * s12;
    if (!(std::abs(det) > 0.0)) continue;
    const double n0 = (s22 * t1 - s12 * t2) / det;
    const double depth = (s11 * t2 - s12 * t1) / det;
    if (!(n0 > 0.0) || !(depth > 0.0) || depth >= n0) continue;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (frequencies[i] - f_ref) / w;
      const double r = counts[i] - n0 + depth * std::exp(-kFourLn2 * u * u);
      sse += r * r;
    }
    if (sse < best_sse) {
      best_sse = sse;
      params[1] = depth / n0;
      params[2] = w;
      params[3] = n0;
    }
  }

  ceres::Problem problem;
  for (std::size_t i = 0; i < n; ++i) {
    problem.AddResidualBlock(
        new ceres::AutoDiffCostFunction<SpectrumResidual, 1, 4>(
            new SpectrumResidual(frequencies[i], counts[i], f_ref)),
        nullptr, params);
  }

  ceres::Solver::Options options;
  options.linear_solver_type = ceres::DENSE_QR;
  options.max_num_iterations = 500;
  options.function_tolerance = 1e-16;
  options.gradient_tolerance = 1e-20;
  options.parameter_tolerance = 1e-16;
  options.logging_type = ceres::SILENT;
  ceres::Solver::Summary summary;
  ceres::Solve(options, &problem, &summary);

  SpectrumFit fit;
  fit.resonance = f_ref + params[0];
  fit.shape.contrast = params[1];
  fit.shape.fwhm = std::abs(params[2]);
  fit.shape.baseline = params[3];
  fit.iterations = static_cast<int>(summary.iterations.size());

  if (summary.termination_type == ceres::FAILURE ||
      summary.termination_type == ceres::USER_FAILURE) {
    throw FitError("spectrum fit did not converge: " + summary.message);
  }
  if (!(fit.resonance >= fmin && fit.resonance <= fmax) ||
      !(fit.shape.contrast > 0.0 && fit.shape.contrast < 1.0) || !(fit.shape.baseline > 0.0) ||
      !(fit.shape.fwhm > 0.0)) {
    std::ostringstream msg;
    msg << "spectrum fit left the valid region: f_res=" << fit.resonance
        << " MHz, contrast=" << fit.shape.contrast << ", fwhm=" << fit.shape.fwhm
        << " MHz, baseline=" << fit.shape.baseline << " after " << fit.iterations
        << " iterations";
    throw FitError(msg.str());
  }

  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = counts[i] - fit.shape.baseline *
                                     lineshape_value(fit.shape, frequencies[i] - fit.resonance);
    sq += r * r;
  }
  fit.residual_rms = std::sqrt(sq / static_cast<double>(n)) / fit.shape.baseline;
  return fit;
}

}  // namespace nvscan
