#include "nvscan/tps.hpp"

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kernel_operator.hpp"
#include "nvscan/error.hpp"

namespace nvscan {

namespace {
constexpr int kAffineIterations = 200;
}  // namespace

double kernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

namespace {

double distance(double x0, double y0, double x1, double y1) {
  return std::hypot(x0 - x1, y0 - y1);
}

// Optimizer view of a fit. Parameters are (alpha1..3, c) with
//   f = f_ref + scale * (alpha1 + alpha2 x + alpha3 y + K beta),  beta = Q2 c,
// where Q2 spans the null space of the side conditions.
class TpsProblem final : public ceres::FirstOrderFunction {
 public:
  TpsProblem(const FitData& data, const LineShape& shape, const FitConfig& config)
      : shape_(shape), lambda_(config.lambda), scale_(shape.fwhm) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.valid[i]) rows.push_back(i);
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    points_.resize(n, 2);
    s_.resize(n);
    f0_.resize(n);
    w2_.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)]);
      points_.row(k) = data.points.row(i);
      s_[k] = data.s[i];
      f0_[k] = data.f0[i];
      w2_[k] = data.weights[i] * data.weights[i];
    }

    // Centre rows, re-indexed into the compacted valid set.
    std::vector<Eigen::Index> remap(data.size(), -1);
    for (Eigen::Index k = 0; k < n; ++k) remap[rows[static_cast<std::size_t>(k)]] = k;
    for (const std::size_t c : select_centers(data, config.center_stride)) {
      center_rows_.push_back(remap[c]);
    }
    const auto m = static_cast<Eigen::Index>(center_rows_.size());
    if (m < 3) throw FitError("TPS fit needs at least 3 valid centres");
    centers_.resize(m, 2);
    for (Eigen::Index j = 0; j < m; ++j) centers_.row(j) = points_.row(center_rows_[j]);

    Eigen::MatrixXd side(m, 3);
    side.col(0).setOnes();
    side.col(1) = centers_.col(0);
    side.col(2) = centers_.col(1);
    qr_.compute(side);
    const Eigen::MatrixXd r = qr_.matrixQR().topRows(3).triangularView<Eigen::Upper>();
    const double r0 = std::abs(r(0, 0));
    if (!(std::abs(r(1, 1)) > 1e-10 * r0 && std::abs(r(2, 2)) > 1e-10 * r0)) {
      throw FitError("TPS fit: centres are collinear, side conditions are rank deficient");
    }

    f_ref_ = f0_.mean();
    if (!data.pixels.empty()) {
      std::vector<Pixel> data_pixels;
      data_pixels.reserve(rows.size());
      for (const std::size_t i : rows) data_pixels.push_back(data.pixels[i]);
      std::vector<Pixel> center_pixels;
      center_pixels.reserve(center_rows_.size());
      for (const Eigen::Index k : center_rows_) {
        center_pixels.push_back(data_pixels[static_cast<std::size_t>(k)]);
      }
      kernel_ = detail::make_grid_kernel(data.nx, data.ny, std::move(data_pixels),
                                         std::move(center_pixels));
    } else {
      kernel_ = detail::make_dense_kernel(points_, centers_);
    }
  }

  int NumParameters() const override { return static_cast<int>(centers_.rows()); }

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    const auto m = centers_.rows();
    const Eigen::Map<const Eigen::VectorXd> theta(parameters, m);
    const Eigen::VectorXd beta = to_beta(theta.tail(m - 3));
    const Eigen::VectorXd kb = kernel_->apply(beta);

    const Eigen::VectorXd f = surface(theta.head<3>(), kb);
    double data_term = 0.0;
    Eigen::VectorXd q(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      const double d = scale_ * f[i] - (f0_[i] - f_ref_);
      const double res = s_[i] - lineshape_value(shape_, d);
      data_term += w2_[i] * res * res;
      q[i] = -2.0 * w2_[i] * res * lineshape_slope(shape_, d) * scale_;
    }
    double penalty = 0.0;
    Eigen::VectorXd kcc_beta(m);
    for (Eigen::Index j = 0; j < m; ++j) kcc_beta[j] = kb[center_rows_[j]];
    const double pen_scale = lambda_ * scale_ * scale_;
    penalty = pen_scale * beta.dot(kcc_beta);
    *cost = data_term + penalty;

    if (gradient != nullptr) {
      Eigen::Map<Eigen::VectorXd> g(gradient, m);
      g[0] = q.sum();
      g[1] = q.dot(points_.col(0));
      g[2] = q.dot(points_.col(1));
      const Eigen::VectorXd gbeta = kernel_->apply_transpose(q) + 2.0 * pen_scale * kcc_beta;
      g.tail(m - 3) = from_beta(gbeta);
    }
    return true;
  }

  Eigen::VectorXd initial_parameters() const {
    // Unweighted least-squares plane through the excitation frequencies.
    Eigen::MatrixXd design(points_.rows(), 3);
    design.col(0).setOnes();
    design.col(1) = points_.col(0);
    design.col(2) = points_.col(1);
    const Eigen::VectorXd rhs = (f0_.array() - f_ref_).matrix() / scale_;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(centers_.rows());
    theta.head<3>() = design.colPivHouseholderQr().solve(rhs);
    return theta;
  }

  TpsModel to_model(const Eigen::VectorXd& theta) const {
    const auto m = centers_.rows();
    TpsModel model;
    model.a1 = f_ref_ + scale_ * theta[0];
    model.a2 = scale_ * theta[1];
    model.a3 = scale_ * theta[2];
    model.b = scale_ * to_beta(theta.tail(m - 3));
    model.centers = centers_;
    return model;
  }

 private:
  Eigen::VectorXd to_beta(const Eigen::Ref<const Eigen::VectorXd>& c) const {
    Eigen::VectorXd beta(c.size() + 3);
    beta.head<3>().setZero();
    beta.tail(c.size()) = c;
    return qr_.householderQ() * beta;
  }

  Eigen::VectorXd from_beta(const Eigen::VectorXd& gbeta) const {
    const Eigen::VectorXd full = qr_.householderQ().adjoint() * gbeta;
    return full.tail(full.size() - 3);
  }

  Eigen::VectorXd surface(const Eigen::Ref<const Eigen::Vector3d>& alpha,
                          const Eigen::VectorXd& kb) const {
    return (kb.array() + alpha[0] + alpha[1] * points_.col(0).array() +
            alpha[2] * points_.col(1).array())
        .matrix();
  }

  LineShape shape_;
  double lambda_;
  double scale_;
  double f_ref_ = 0.0;
  Points points_;
  Eigen::VectorXd s_;
  Eigen::VectorXd f0_;
  Eigen::VectorXd w2_;
  Points centers_;
  std::vector<Eigen::Index> center_rows_;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
  std::unique_ptr<detail::KernelOperator> kernel_;
};

// The same energy restricted to the affine coefficients, with beta = 0.
class AffineStage final : public ceres::FirstOrderFunction {
 public:
  AffineStage(const TpsProblem& full, Eigen::VectorXd theta)
      : full_(full), theta_(std::move(theta)), grad_(theta_.size()) {}

  int NumParameters() const override { return 3; }

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    theta_.head<3>() = Eigen::Map<const Eigen::Vector3d>(parameters);
    if (!full_.Evaluate(theta_.data(), cost, gradient ? grad_.data() : nullptr)) return false;
    if (gradient) Eigen::Map<Eigen::Vector3d>{gradient} = grad_.head<3>();
    return true;
  }

 private:
  const TpsProblem& full_;
  mutable Eigen::VectorXd theta_;
  mutable Eigen::VectorXd grad_;
};

}  // namespace

double TpsModel::constraint_residual() const {
  const double scale = std::max(b.size() > 0 ? b.cwiseAbs().maxCoeff() : 0.0,
                                std::numeric_limits<double>::min());
  const double s0 = std::abs(b.sum());
  const double sx = std::abs(b.dot(centers.col(0)));
  const double sy = std::abs(b.dot(centers.col(1)));
  return std::max({s0, sx, sy}) / scale;
}

void FitConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (center_stride < 1) throw ConfigError("centre stride must be at least 1");
  if (max_iterations < 1) throw ConfigError("max_iterations must be positive");
  if (!(gradient_tolerance >= 0.0) || !(objective_tolerance >= 0.0)) {
    throw ConfigError("tolerances must be non-negative");
  }
}

FitData make_fit_data(const Points& points, const Eigen::VectorXd& s, const Eigen::VectorXd& f0,
                      std::vector<std::uint8_t> valid) {
  const auto n = points.rows();
  if (s.size() != n || f0.size() != n || static_cast<Eigen::Index>(valid.size()) != n) {
    throw ConfigError("fit data arrays differ in length");
  }
  FitData data{points, s, f0, Eigen::VectorXd(n), std::move(valid), {}};
  for (Eigen::Index i = 0; i < n; ++i) data.weights[i] = contrast_weight(s[i]);
  return data;
}

FitData make_fit_data(const ScanRecord& record, const FringeMap& fringes) {
  const int nx = record.nx();
  const int ny = record.ny();
  const auto n = static_cast<Eigen::Index>(record.f0.size());
  Points points(n, 2);
  Eigen::VectorXd s(n);
  Eigen::VectorXd f0(n);
  std::vector<Pixel> pixels;
  pixels.reserve(static_cast<std::size_t>(n));
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const auto i = static_cast<Eigen::Index>(record.f0.index(ix, iy));
      points(i, 0) = static_cast<double>(ix) / (nx - 1);
      points(i, 1) = static_cast<double>(iy) / (ny - 1);
      s[i] = fringes.s[static_cast<std::size_t>(i)];
      f0[i] = record.f0[static_cast<std::size_t>(i)];
      pixels.push_back({ix, iy});
    }
  }
  FitData data = make_fit_data(points, s, f0, fringes.valid);
  data.pixels = std::move(pixels);
  data.nx = nx;
  data.ny = ny;
  return data;
}

std::vector<std::size_t> select_centers(const FitData& data, int stride) {
  std::vector<std::size_t> out;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.valid[i]) continue;
    bool take = false;
    if (!data.pixels.empty()) {
      take = data.pixels[i].ix % stride == 0 && data.pixels[i].iy % stride == 0;
    } else {
      take = seen % static_cast<std::size_t>(stride) == 0;
    }
    ++seen;
    if (take) out.push_back(i);
  }
  return out;
}

double evaluate(const TpsModel& model, double x, double y) {
  double sum = model.a1 + model.a2 * x + model.a3 * y;
  for (Eigen::Index i = 0; i < model.b.size(); ++i) {
    sum += model.b[i] * kernel(distance(model.centers(i, 0), model.centers(i, 1), x, y));
  }
  return sum;
}

Eigen::VectorXd evaluate(const TpsModel& model, const Points& points) {
  Eigen::VectorXd out(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out[i] = evaluate(model, points(i, 0), points(i, 1));
  }
  return out;
}

double bending_energy(const TpsModel& model) {
  const auto m = model.b.size();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      row += kernel(distance(model.centers(i, 0), model.centers(i, 1), model.centers(j, 0),
                             model.centers(j, 1))) *
             model.b[j];
    }
    sum += model.b[i] * row;
  }
  return sum;
}

double objective(const TpsModel& model, const FitData& data, const LineShape& shape,
                 double lambda) {
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.valid[i]) continue;
    const auto k = static_cast<Eigen::Index>(i);
    const double f = evaluate(model, data.points(k, 0), data.points(k, 1));
    const double r = data.s[k] - lineshape_value(shape, f - data.f0[k]);
    sum += data.weights[k] * data.weights[k] * r * r;
  }
  return sum + lambda * bending_energy(model);
}

Eigen::VectorXd objective_gradient(const TpsModel& model, const FitData& data,
                                   const LineShape& shape, double lambda) {
  const auto m = model.b.size();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m + 3);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.valid[i]) continue;
    const auto k = static_cast<Eigen::Index>(i);
    const double x = data.points(k, 0);
    const double y = data.points(k, 1);
    const double d = evaluate(model, x, y) - data.f0[k];
    const double r = data.s[k] - lineshape_value(shape, d);
    const double q = -2.0 * data.weights[k] * data.weights[k] * r * lineshape_slope(shape, d);
    g[0] += q;
    g[1] += q * x;
    g[2] += q * y;
    for (Eigen::Index j = 0; j < m; ++j) {
      g[3 + j] += q * kernel(distance(model.centers(j, 0), model.centers(j, 1), x, y));
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      row += kernel(distance(model.centers(i, 0), model.centers(i, 1), model.centers(j, 0),
                             model.centers(j, 1))) *
             model.b[j];
    }
    g[3 + i] += 2.0 * lambda * row;
  }
  return g;
}

FitResult fit(const FitData& data, const LineShape& shape, const FitConfig& config) {
  config.validate();
  shape.validate();
  auto* problem = new TpsProblem(data, shape, config);
  Eigen::VectorXd theta = problem->initial_parameters();
  const TpsProblem& view = *problem;
  ceres::GradientProblem gradient_problem(problem);

  FitResult result;
  double start_cost = 0.0;
  view.Evaluate(theta.data(), &start_cost, nullptr);

  {
    ceres::GradientProblem affine(new AffineStage(view, theta));
    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.max_num_iterations = kAffineIterations;
    options.gradient_tolerance = config.gradient_tolerance;
    options.function_tolerance = config.objective_tolerance;
    options.parameter_tolerance = 0.0;
    options.logging_type = ceres::SILENT;
    ceres::GradientProblemSolver::Summary summary;
    Eigen::Vector3d alpha = theta.head<3>();
    ceres::Solve(options, affine, alpha.data(), &summary);
    if (std::isfinite(summary.final_cost) && summary.final_cost <= start_cost) {
      theta.head<3>() = alpha;
    }
  }

  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.max_num_iterations = config.max_iterations;
  options.gradient_tolerance = config.gradient_tolerance;
  options.function_tolerance = config.objective_tolerance;
  options.parameter_tolerance = 0.0;
  options.logging_type = ceres::SILENT;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, gradient_problem, theta.data(), &summary);

  if (summary.termination_type == ceres::FAILURE ||
      summary.termination_type == ceres::USER_FAILURE || !std::isfinite(summary.final_cost)) {
    throw FitError("TPS optimizer failed: " + summary.message);
  }

  Eigen::VectorXd grad(theta.size());
  double cost = 0.0;
  view.Evaluate(theta.data(), &cost, grad.data());

  result.model = view.to_model(theta);
  auto& diag = result.diagnostics;
  diag.iterations = std::max(0, static_cast<int>(summary.iterations.size()) - 1);
  diag.initial_objective = start_cost;
  diag.final_objective = cost;
  diag.gradient_norm = grad.cwiseAbs().maxCoeff();
  diag.converged = summary.termination_type == ceres::CONVERGENCE;
  diag.message = summary.message;
  return result;
}

ScalarGrid reconstruct_field(const TpsModel& model, int nx, int ny, const NvFrame& frame,
                             bool subtract_bias) {
  ScalarGrid out(nx, ny, Unit::MilliTesla);
  for (int iy = 0; iy < ny; ++iy) {
    const double y = static_cast<double>(iy) / (ny - 1);
    for (int ix = 0; ix < nx; ++ix) {
      const double x = static_cast<double>(ix) / (nx - 1);
      out(ix, iy) = frequency_to_field(evaluate(model, x, y), frame, subtract_bias);
    }
  }
  return out;
}

ScalarGrid predict_fringes(const TpsModel& model, const ScanRecord& record,
                           const LineShape& shape) {
  const int nx = record.nx();
  const int ny = record.ny();
  ScalarGrid out(nx, ny, Unit::Dimensionless);
  for (int iy = 0; iy < ny; ++iy) {
    const double y = static_cast<double>(iy) / (ny - 1);
    for (int ix = 0; ix < nx; ++ix) {
      const double x = static_cast<double>(ix) / (nx - 1);
      out(ix, iy) = lineshape_value(shape, evaluate(model, x, y) - record.f0(ix, iy));
    }
  }
  return out;
}

double fringe_rms(const ScalarGrid& predicted, const FringeMap& fringes) {
  double sq = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!fringes.valid[i]) continue;
    const double d = predicted[i] - fringes.s[i];
    sq += d * d;
    ++n;
  }
  return n > 0 ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
}

}  // namespace nvscan
