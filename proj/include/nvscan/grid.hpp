#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nvscan {

enum class Unit { MilliTesla, MegaHertz, Counts, Dimensionless };

std::string_view to_string(Unit unit);
Unit unit_from_string(std::string_view name);

/// Rectangular map of scalar values over a scan extent.
///
/// Storage is row-major: value (ix, iy) lives at iy * nx + ix. Pixel
/// centres sit at x = width * ix / (nx - 1), y = height * iy / (ny - 1), so
/// the default 1x1 extent places the corner pixels on the unit square.
class ScalarGrid {
 public:
  ScalarGrid(int nx, int ny, Unit unit, double width = 1.0, double height = 1.0);
  ScalarGrid(int nx, int ny, Unit unit, std::vector<double> values, double width = 1.0,
             double height = 1.0);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t size() const { return values_.size(); }
  double width() const { return width_; }
  double height() const { return height_; }
  Unit unit() const { return unit_; }

  double& operator()(int ix, int iy) { return values_[index(ix, iy)]; }
  double operator()(int ix, int iy) const { return values_[index(ix, iy)]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx_) +
           static_cast<std::size_t>(ix);
  }
  double x_at(int ix) const { return width_ * ix / (nx_ - 1); }
  double y_at(int iy) const { return height_ * iy / (ny_ - 1); }

  bool same_shape(const ScalarGrid& other) const {
    return nx_ == other.nx_ && ny_ == other.ny_;
  }

  /// Throws ConfigError when any value is not finite.
  void check_finite() const;

  double min() const;
  double max() const;

  friend bool operator==(const ScalarGrid&, const ScalarGrid&) = default;

 private:
  int nx_;
  int ny_;
  Unit unit_;
  double width_;
  double height_;
  std::vector<double> values_;
};

}  // namespace nvscan
