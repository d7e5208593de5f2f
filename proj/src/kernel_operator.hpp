#pragma once

#include <Eigen/Core>

#include <memory>
#include <vector>

#include "nvscan/tps.hpp"

namespace nvscan::detail {

/// Linear map b (at centres) -> sum_j b_j phi(|p_i - c_j|) (at data points).
class KernelOperator {
 public:
  virtual ~KernelOperator() = default;
  virtual Eigen::VectorXd apply(const Eigen::VectorXd& b) const = 0;
  virtual Eigen::VectorXd apply_transpose(const Eigen::VectorXd& q) const = 0;
};

/// Explicit kernel matrix; works for scattered points.
std::unique_ptr<KernelOperator> make_dense_kernel(const Points& points, const Points& centers);

/// Convolution through a zero-padded FFT. Data points and centres must lie on
/// the same nx x ny pixel lattice (coordinates ix / (nx - 1), iy / (ny - 1)).
std::unique_ptr<KernelOperator> make_grid_kernel(int nx, int ny,
                                                 std::vector<Pixel> data_pixels,
                                                 std::vector<Pixel> center_pixels);

}  // namespace nvscan::detail
