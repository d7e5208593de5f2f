#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nvscan/field.hpp"
#include "nvscan/grid.hpp"
#include "nvscan/odmr.hpp"
#include "nvscan/tracker.hpp"

namespace nvscan {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Thin-plate radial basis phi(r) = r^2 log r, with phi(0) = 0.
double kernel(double r);

/// Thin-plate spline model of the resonance-frequency surface:
///   f(x, y) = a1 + a2 x + a3 y + sum_i b_i phi(|c_i - (x, y)|)
/// with frequencies in MHz and coordinates in normalized scan units.
struct TpsModel {
  double a1 = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;
  Eigen::VectorXd b;
  Points centers;

  std::size_t size() const { return static_cast<std::size_t>(b.size()); }

  /// max(|sum b|, |sum b x|, |sum b y|) / max(|b|_inf, tiny).
  double constraint_residual() const;

  friend bool operator==(const TpsModel& l, const TpsModel& r) {
    return l.a1 == r.a1 && l.a2 == r.a2 && l.a3 == r.a3 && l.b == r.b && l.centers == r.centers;
  }
};

struct FitConfig {
  /// Weight of the bending penalty lambda * b^T K b, with b in MHz.
  double lambda = 1e-9;
  /// Use every stride-th pixel along each grid axis as an RBF centre.
  int center_stride = 1;
  int max_iterations = 2000;
  double gradient_tolerance = 1e-8;
  /// Relative objective decrease below which the optimizer stops.
  double objective_tolerance = 1e-12;

  void validate() const;
};

/// Weight w = 3 - 2.5 S that ranks strong-contrast pixels above flat ones.
inline double contrast_weight(double s) { return 3.0 - 2.5 * s; }

/// Pixels entering a reconstruction. Only valid entries take part in any sum.
struct FitData {
  Points points;
  Eigen::VectorXd s;
  Eigen::VectorXd f0;
  Eigen::VectorXd weights;
  std::vector<std::uint8_t> valid;
  /// Lattice location of each point and the lattice size, for data taken on
  /// a scan grid (points then sit at ix / (nx - 1), iy / (ny - 1)). Empty for
  /// scattered data. Lattice data is fitted through FFT convolution.
  std::vector<Pixel> pixels;
  int nx = 0;
  int ny = 0;

  std::size_t size() const { return static_cast<std::size_t>(s.size()); }
};

FitData make_fit_data(const Points& points, const Eigen::VectorXd& s, const Eigen::VectorXd& f0,
                      std::vector<std::uint8_t> valid);

/// Fit data from a post-processed scan on the normalized 1x1 scope.
FitData make_fit_data(const ScanRecord& record, const FringeMap& fringes);

double evaluate(const TpsModel& model, double x, double y);
Eigen::VectorXd evaluate(const TpsModel& model, const Points& points);

/// b^T K b over the model's centres.
double bending_energy(const TpsModel& model);

/// sum_i w_i^2 (S_i - g(f(x_i, y_i) - f0_i))^2 + lambda b^T K b over valid pixels.
double objective(const TpsModel& model, const FitData& data, const LineShape& shape,
                 double lambda);

/// Gradient of objective() with respect to (a1, a2, a3, b_1 .. b_n), treating b
/// as unconstrained.
Eigen::VectorXd objective_gradient(const TpsModel& model, const FitData& data,
                                   const LineShape& shape, double lambda);

struct FitDiagnostics {
  int iterations = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double gradient_norm = 0.0;  // max-norm in the optimizer's coordinates
  bool converged = false;
  std::string message;
};

struct FitResult {
  TpsModel model;
  FitDiagnostics diagnostics;
};

/// Centres chosen for `data` under `config.center_stride`, as row indices
/// into the data.
std::vector<std::size_t> select_centers(const FitData& data, int stride);

/// Minimizes objective() over the spline coefficients.
///
/// Starts from the least-squares plane through f0 with b = 0 and searches the
/// null space of the 3 x n side-condition matrix [1; x; y] with L-BFGS, so
/// every iterate satisfies sum b = sum b x = sum b y = 0. Throws FitError when
/// the valid points are collinear. A run that stops on the iteration limit
/// returns its best iterate with diagnostics.converged = false.
FitResult fit(const FitData& data, const LineShape& shape, const FitConfig& config);

/// Evaluates the model on an nx x ny grid over the unit scope and converts to
/// on-axis field (mT).
ScalarGrid reconstruct_field(const TpsModel& model, int nx, int ny, const NvFrame& frame,
                             bool subtract_bias);

/// Model-implied normalized PL g(f(x, y) - f0) at each pixel of `record`.
ScalarGrid predict_fringes(const TpsModel& model, const ScanRecord& record,
                           const LineShape& shape);

/// RMS of (predicted - S) over valid pixels.
double fringe_rms(const ScalarGrid& predicted, const FringeMap& fringes);

}  // namespace nvscan
