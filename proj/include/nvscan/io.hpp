#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nvscan/grid.hpp"
#include "nvscan/pipeline.hpp"
#include "nvscan/tps.hpp"
#include "nvscan/tracker.hpp"

namespace nvscan {

// ScalarGrid as CSV: '#'-prefixed "key: value" header lines (nx, ny, width,
// height, unit) then ny rows of nx comma-separated values, row iy = 0 first,
// each value printed with 17 significant digits.
std::string format_grid_csv(const ScalarGrid& grid);
ScalarGrid parse_grid_csv(std::string_view text, const std::string& source = "<memory>");
void save_grid_csv(const std::filesystem::path& path, const ScalarGrid& grid);
ScalarGrid load_grid_csv(const std::filesystem::path& path);

/// Binary 16-bit PGM (P5, big-endian samples) mapping [min, max] linearly to
/// [0, 65535]. A constant grid renders as all zeros.
std::vector<std::uint8_t> encode_pgm(const ScalarGrid& grid);
void save_pgm(const std::filesystem::path& path, const ScalarGrid& grid);

// A scan record is a directory: c0.csv, c_minus.csv, c_plus.csv, f0.csv and
// scan.json (parameters, shift log, post-processing flag). scan.json may be
// absent for external data, in which case the record counts as already
// post-processed with no shifts.
void save_scan_record(const std::filesystem::path& dir, const ScanRecord& record);
ScanRecord load_scan_record(const std::filesystem::path& dir);

std::string model_to_json(const TpsModel& model, const FitConfig& config);
TpsModel model_from_json(std::string_view text, FitConfig* config = nullptr);
void save_model(const std::filesystem::path& path, const TpsModel& model, const FitConfig& config);
TpsModel load_model(const std::filesystem::path& path, FitConfig* config = nullptr);

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(std::string_view text);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

std::string line_shape_to_json(const LineShape& shape);
LineShape line_shape_from_json(std::string_view text);

/// Summary statistics of a deviation report (the map itself goes to CSV).
std::string report_to_json(const DeviationReport& report);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace nvscan
