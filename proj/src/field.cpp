#include "nvscan/field.hpp"

#include <cmath>

#include "nvscan/error.hpp"

namespace nvscan {

namespace {
// mu0 / 4pi in T m / A.
constexpr double kMu0Over4Pi = 1.0e-7;
constexpr double kTeslaToMilliTesla = 1.0e3;
}  // namespace

void DipoleSource::validate() const {
  if (!(standoff > 0.0)) throw ConfigError("dipole standoff must be positive");
  if (!(moment.norm() > 0.0)) throw ConfigError("dipole moment must be non-zero");
  if (!moment.allFinite() || !position.allFinite()) {
    throw ConfigError("dipole moment and position must be finite");
  }
}

void NvFrame::validate() const {
  if (std::abs(axis.norm() - 1.0) > 1e-12) throw ConfigError("NV axis must be a unit vector");
  if (!(gyromagnetic_ratio > 0.0)) throw ConfigError("gyromagnetic ratio must be positive");
  if (!(zero_field_splitting > 0.0)) throw ConfigError("zero-field splitting must be positive");
  if (!std::isfinite(bias_field)) throw ConfigError("bias field must be finite");
}

Vec3 dipole_field_at(const DipoleSource& src, const Vec3& point) {
  const Vec3 r = point - src.position;
  const double dist = r.norm();
  if (!(dist > 0.0)) throw DomainError("dipole field is singular at the source position");
  const Vec3 rhat = r / dist;
  const Vec3 b = kMu0Over4Pi * (3.0 * rhat * rhat.dot(src.moment) - src.moment) /
                 (dist * dist * dist);
  return b * kTeslaToMilliTesla;
}

double project_on_axis(const Vec3& b, const NvFrame& frame) { return b.dot(frame.axis); }

double field_to_frequency(double b_on_axis, const NvFrame& frame) {
  const double shift = frame.gyromagnetic_ratio * (frame.bias_field + b_on_axis);
  return frame.branch == Branch::Upper ? frame.zero_field_splitting + shift
                                       : frame.zero_field_splitting - shift;
}

double frequency_to_field(double frequency, const NvFrame& frame, bool subtract_bias) {
  const double offset = frequency - frame.zero_field_splitting;
  const double total = (frame.branch == Branch::Upper ? offset : -offset) /
                       frame.gyromagnetic_ratio;
  return subtract_bias ? total - frame.bias_field : total;
}

ScalarGrid sample_on_axis_field(const DipoleSource& src, const NvFrame& frame,
                                const ScanWindow& window, int nx, int ny) {
  src.validate();
  frame.validate();
  ScalarGrid out(nx, ny, Unit::MilliTesla);
  for (int iy = 0; iy < ny; ++iy) {
    const double y = window.y0 + window.height * iy / (ny - 1);
    for (int ix = 0; ix < nx; ++ix) {
      const double x = window.x0 + window.width * ix / (nx - 1);
      out(ix, iy) = project_on_axis(dipole_field_at(src, Vec3(x, y, src.standoff)), frame);
    }
  }
  return out;
}

}  // namespace nvscan
