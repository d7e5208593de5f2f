#include "kernel_operator.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>

namespace nvscan::detail {

namespace {

class DenseKernel final : public KernelOperator {
 public:
  DenseKernel(const Points& points, const Points& centers) : k_(points.rows(), centers.rows()) {
    for (Eigen::Index j = 0; j < centers.rows(); ++j) {
      for (Eigen::Index i = 0; i < points.rows(); ++i) {
        k_(i, j) = kernel(std::hypot(points(i, 0) - centers(j, 0), points(i, 1) - centers(j, 1)));
      }
    }
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& b) const override { return k_ * b; }
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& q) const override {
    return k_.transpose() * q;
  }

 private:
  Eigen::MatrixXd k_;
};

// FFTW's planner is not thread-safe.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class FftBuffer {
 public:
  explicit FftBuffer(std::size_t n) : data_(static_cast<T*>(fftw_malloc(sizeof(T) * n))) {}
  ~FftBuffer() { fftw_free(data_); }
  FftBuffer(const FftBuffer&) = delete;
  FftBuffer& operator=(const FftBuffer&) = delete;

  using T = double;
  double* get() const { return data_; }

 private:
  double* data_;
};

class GridKernel final : public KernelOperator {
 public:
  GridKernel(int nx, int ny, std::vector<Pixel> data_pixels, std::vector<Pixel> center_pixels)
      : px_(2 * nx),
        py_(2 * ny),
        nc_(static_cast<std::size_t>(py_) * static_cast<std::size_t>(px_ / 2 + 1)),
        data_(std::move(data_pixels)),
        centers_(std::move(center_pixels)),
        real_(static_cast<std::size_t>(px_) * static_cast<std::size_t>(py_)),
        spec_(2 * nc_),
        kernel_spec_(nc_) {
    auto* spec = reinterpret_cast<fftw_complex*>(spec_.get());
    {
      std::lock_guard lock(planner_mutex());
      forward_ = fftw_plan_dft_r2c_2d(py_, px_, real_.get(), spec, FFTW_ESTIMATE);
      backward_ = fftw_plan_dft_c2r_2d(py_, px_, spec, real_.get(), FFTW_ESTIMATE);
    }

    // Circulant embedding of phi over all lattice offsets.
    double* r = real_.get();
    for (int jy = 0; jy < py_; ++jy) {
      const int dy = jy < ny ? jy : jy - py_;
      for (int jx = 0; jx < px_; ++jx) {
        const int dx = jx < nx ? jx : jx - px_;
        const bool inside = std::abs(dx) < nx && std::abs(dy) < ny;
        r[at(jx, jy)] = inside ? kernel(std::hypot(static_cast<double>(dx) / (nx - 1),
                                                   static_cast<double>(dy) / (ny - 1)))
                               : 0.0;
      }
    }
    fftw_execute(forward_);
    const double norm = 1.0 / (static_cast<double>(px_) * py_);
    for (std::size_t i = 0; i < nc_; ++i) {
      kernel_spec_[i] = std::complex<double>(spec[i][0], spec[i][1]) * norm;
    }
  }

  ~GridKernel() override {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& b) const override {
    return convolve(centers_, b, data_);
  }
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& q) const override {
    return convolve(data_, q, centers_);
  }

 private:
  std::size_t at(int jx, int jy) const {
    return static_cast<std::size_t>(jy) * static_cast<std::size_t>(px_) +
           static_cast<std::size_t>(jx);
  }

  Eigen::VectorXd convolve(const std::vector<Pixel>& from, const Eigen::VectorXd& values,
                           const std::vector<Pixel>& to) const {
    std::lock_guard lock(exec_mutex_);
    double* r = real_.get();
    std::fill(r, r + static_cast<std::size_t>(px_) * static_cast<std::size_t>(py_), 0.0);
    for (std::size_t k = 0; k < from.size(); ++k) {
      r[at(from[k].ix, from[k].iy)] = values[static_cast<Eigen::Index>(k)];
    }
    fftw_execute(forward_);
    auto* spec = reinterpret_cast<fftw_complex*>(spec_.get());
    for (std::size_t i = 0; i < nc_; ++i) {
      const std::complex<double> v = std::complex<double>(spec[i][0], spec[i][1]) * kernel_spec_[i];
      spec[i][0] = v.real();
      spec[i][1] = v.imag();
    }
    fftw_execute(backward_);
    Eigen::VectorXd out(static_cast<Eigen::Index>(to.size()));
    for (std::size_t k = 0; k < to.size(); ++k) {
      out[static_cast<Eigen::Index>(k)] = r[at(to[k].ix, to[k].iy)];
    }
    return out;
  }

  int px_;
  int py_;
  std::size_t nc_;
  std::vector<Pixel> data_;
  std::vector<Pixel> centers_;
  FftBuffer real_;
  FftBuffer spec_;
  std::vector<std::complex<double>> kernel_spec_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
  mutable std::mutex exec_mutex_;
};

}  // namespace

std::unique_ptr<KernelOperator> make_dense_kernel(const Points& points, const Points& centers) {
  return std::make_unique<DenseKernel>(points, centers);
}

std::unique_ptr<KernelOperator> make_grid_kernel(int nx, int ny, std::vector<Pixel> data_pixels,
                                                 std::vector<Pixel> center_pixels) {
  return std::make_unique<GridKernel>(nx, ny, std::move(data_pixels), std::move(center_pixels));
}

}  // namespace nvscan::detail
