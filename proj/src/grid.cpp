#include "nvscan/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nvscan/error.hpp"

namespace nvscan {

std::string_view to_string(Unit unit) {
  switch (unit) {
    case Unit::MilliTesla:
      return "mT";
    case Unit::MegaHertz:
      return "MHz";
    case Unit::Counts:
      return "counts";
    case Unit::Dimensionless:
      return "dimensionless";
  }
  return "dimensionless";
}

Unit unit_from_string(std::string_view name) {
  if (name == "mT") return Unit::MilliTesla;
  if (name == "MHz") return Unit::MegaHertz;
  if (name == "counts") return Unit::Counts;
  if (name == "dimensionless") return Unit::Dimensionless;
  throw ParseError("unknown unit '" + std::string(name) + "'");
}

ScalarGrid::ScalarGrid(int nx, int ny, Unit unit, double width, double height)
    : ScalarGrid(nx, ny, unit,
                 std::vector<double>(static_cast<std::size_t>(std::max(nx, 0)) *
                                     static_cast<std::size_t>(std::max(ny, 0))),
                 width, height) {}

ScalarGrid::ScalarGrid(int nx, int ny, Unit unit, std::vector<double> values, double width,
                       double height)
    : nx_(nx), ny_(ny), unit_(unit), width_(width), height_(height), values_(std::move(values)) {
  if (nx < 2 || ny < 2) {
    throw ConfigError("grid needs at least 2x2 pixels, got " + std::to_string(nx) + "x" +
                      std::to_string(ny));
  }
  if (!(width > 0.0) || !(height > 0.0)) throw ConfigError("grid extent must be positive");
  if (values_.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny)) {
    throw ConfigError("grid value count does not match dimensions");
  }
}

void ScalarGrid::check_finite() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ConfigError("non-finite grid value at pixel (" + std::to_string(i % nx_) + ", " +
                        std::to_string(i / nx_) + ")");
    }
  }
}

double ScalarGrid::min() const { return *std::min_element(values_.begin(), values_.end()); }
double ScalarGrid::max() const { return *std::max_element(values_.begin(), values_.end()); }

}  // namespace nvscan
