#pragma once

#include <Eigen/Core>

#include "nvscan/grid.hpp"

namespace nvscan {

using Vec3 = Eigen::Vector3d;

/// Point magnetic dipole below the scanned sample surface.
///
/// The sample surface is the plane z = 0 and the NV sensor rides at
/// z = standoff above it, so field maps are sampled at (x, y, standoff).
struct DipoleSource {
  Vec3 moment{0.0, 0.0, 8.36e-15};      // A m^2
  Vec3 position{0.5e-6, 0.5e-6, 0.0};   // m
  double standoff = 1.15e-6;            // m

  void validate() const;
};

enum class Branch { Upper, Lower };

/// Sensor orientation and the constants of the spin transition being tracked.
struct NvFrame {
  Vec3 axis{0.0, 0.0, 1.0};
  double bias_field = 5.5;          // mT, along axis
  double zero_field_splitting = 2870.0;  // MHz
  double gyromagnetic_ratio = 28.03;     // MHz / mT
  Branch branch = Branch::Upper;

  void validate() const;
};

/// Physical area covered by a scan, in metres.
struct ScanWindow {
  double x0 = 0.0;
  double y0 = 0.0;
  double width = 1.0e-6;
  double height = 1.0e-6;
};

/// Field of a point dipole at `point`, in mT.
Vec3 dipole_field_at(const DipoleSource& src, const Vec3& point);

double project_on_axis(const Vec3& b, const NvFrame& frame);

/// Resonance frequency (MHz) for on-axis field `b_on_axis` (mT, bias excluded).
double field_to_frequency(double b_on_axis, const NvFrame& frame);

/// Inverse of field_to_frequency. With subtract_bias off the result is the
/// total on-axis field, bias included.
double frequency_to_field(double frequency, const NvFrame& frame, bool subtract_bias = false);

/// On-axis dipole field (mT, bias excluded) sampled on an nx x ny grid
/// spanning `window` at the source's standoff height.
ScalarGrid sample_on_axis_field(const DipoleSource& src, const NvFrame& frame,
                                const ScanWindow& window, int nx, int ny);

}  // namespace nvscan
