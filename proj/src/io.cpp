#include "nvscan/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "nvscan/error.hpp"

namespace nvscan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_double(std::string_view token, const std::string& where) {
  token = trim(token);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || end != token.data() + token.size()) {
    throw ParseError(where + ": cannot parse number '" + std::string(token) + "'");
  }
  return v;
}

// Reads `key` from `obj` into `out` when present; type mismatches become
// ParseError naming the field.
template <typename T>
void read_opt(const json& obj, const char* key, T& out, const std::string& ctx) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(ctx + "." + key + ": " + e.what());
  }
}

template <typename T>
T read_req(const json& obj, const char* key, const std::string& ctx) {
  if (!obj.contains(key)) throw ParseError(ctx + ": missing field '" + key + "'");
  T out{};
  read_opt(obj, key, out, ctx);
  return out;
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

void read_vec3(const json& obj, const char* key, Vec3& out, const std::string& ctx) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_array() || it->size() != 3) {
    throw ParseError(ctx + "." + key + ": expected an array of 3 numbers");
  }
  std::array<double, 3> v{};
  read_opt(obj, key, v, ctx);
  out = Vec3(v[0], v[1], v[2]);
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

const char* order_name(ScanOrder o) { return o == ScanOrder::Raster ? "raster" : "serpentine"; }

ScanOrder order_from(const std::string& s, const std::string& ctx) {
  if (s == "raster") return ScanOrder::Raster;
  if (s == "serpentine") return ScanOrder::Serpentine;
  throw ParseError(ctx + ": unknown scan order '" + s + "'");
}

const char* shift_name(Shift s) {
  switch (s) {
    case Shift::Down:
      return "down";
    case Shift::Up:
      return "up";
    case Shift::None:
      break;
  }
  return "none";
}

Shift shift_from(const std::string& s, const std::string& ctx) {
  if (s == "none") return Shift::None;
  if (s == "down") return Shift::Down;
  if (s == "up") return Shift::Up;
  throw ParseError(ctx + ": unknown shift '" + s + "'");
}

json scan_params_json(const ScanParams& p) {
  return {{"delta", p.delta},
          {"threshold", p.threshold},
          {"order", order_name(p.order)},
          {"f_init", p.f_init}};
}

ScanParams scan_params_from(const json& j, const std::string& ctx) {
  ScanParams p;
  read_opt(j, "delta", p.delta, ctx);
  read_opt(j, "threshold", p.threshold, ctx);
  read_opt(j, "f_init", p.f_init, ctx);
  std::string order = order_name(p.order);
  read_opt(j, "order", order, ctx);
  p.order = order_from(order, ctx + ".order");
  return p;
}

json fit_config_json(const FitConfig& c) {
  return {{"lambda", c.lambda},
          {"center_stride", c.center_stride},
          {"max_iterations", c.max_iterations},
          {"gradient_tolerance", c.gradient_tolerance},
          {"objective_tolerance", c.objective_tolerance}};
}

FitConfig fit_config_from(const json& j, const std::string& ctx) {
  FitConfig c;
  read_opt(j, "lambda", c.lambda, ctx);
  read_opt(j, "center_stride", c.center_stride, ctx);
  read_opt(j, "max_iterations", c.max_iterations, ctx);
  read_opt(j, "gradient_tolerance", c.gradient_tolerance, ctx);
  read_opt(j, "objective_tolerance", c.objective_tolerance, ctx);
  return c;
}

json shape_json(const LineShape& s) {
  return {{"contrast", s.contrast}, {"fwhm", s.fwhm}, {"baseline", s.baseline}};
}

LineShape shape_from(const json& j, const std::string& ctx) {
  LineShape s;
  read_opt(j, "contrast", s.contrast, ctx);
  read_opt(j, "fwhm", s.fwhm, ctx);
  read_opt(j, "baseline", s.baseline, ctx);
  return s;
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed for " + path.string());
}

std::string format_grid_csv(const ScalarGrid& grid) {
  std::string out;
  out += "# nx: " + std::to_string(grid.nx()) + "\n";
  out += "# ny: " + std::to_string(grid.ny()) + "\n";
  out += "# width: " + format_double(grid.width()) + "\n";
  out += "# height: " + format_double(grid.height()) + "\n";
  out += "# unit: " + std::string(to_string(grid.unit())) + "\n";
  for (int iy = 0; iy < grid.ny(); ++iy) {
    for (int ix = 0; ix < grid.nx(); ++ix) {
      if (ix > 0) out += ',';
      out += format_double(grid(ix, iy));
    }
    out += '\n';
  }
  return out;
}

ScalarGrid parse_grid_csv(std::string_view text, const std::string& source) {
  int nx = -1;
  int ny = -1;
  double width = 1.0;
  double height = 1.0;
  Unit unit = Unit::Dimensionless;
  std::vector<double> values;
  int line_no = 0;
  int rows = 0;

  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string_view body = trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon == std::string_view::npos) continue;
      const std::string_view key = trim(body.substr(0, colon));
      const std::string_view val = trim(body.substr(colon + 1));
      if (key == "nx") nx = static_cast<int>(parse_double(val, where));
      else if (key == "ny") ny = static_cast<int>(parse_double(val, where));
      else if (key == "width") width = parse_double(val, where);
      else if (key == "height") height = parse_double(val, where);
      else if (key == "unit") unit = unit_from_string(val);
      continue;
    }
    if (nx < 2 || ny < 2) throw ParseError(where + ": data row before nx/ny header");
    if (rows >= ny) throw ParseError(where + ": more than ny = " + std::to_string(ny) + " rows");
    int cols = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view tok =
          line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
      values.push_back(parse_double(tok, where));
      ++cols;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cols != nx) {
      throw ParseError(where + ": row " + std::to_string(rows) + " has " + std::to_string(cols) +
                       " values, expected " + std::to_string(nx));
    }
    ++rows;
  }
  if (nx < 2 || ny < 2) throw ParseError(source + ": missing nx/ny header");
  if (rows < ny) {
    throw ParseError(source + ": truncated grid, missing row " + std::to_string(rows) + " of " +
                     std::to_string(ny));
  }
  ScalarGrid grid(nx, ny, unit, std::move(values), width, height);
  grid.check_finite();
  return grid;
}

void save_grid_csv(const fs::path& path, const ScalarGrid& grid) {
  write_text(path, format_grid_csv(grid));
}

ScalarGrid load_grid_csv(const fs::path& path) {
  return parse_grid_csv(read_text(path), path.string());
}

std::vector<std::uint8_t> encode_pgm(const ScalarGrid& grid) {
  const std::string header = "P5\n" + std::to_string(grid.nx()) + " " +
                             std::to_string(grid.ny()) + "\n65535\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const double lo = grid.min();
  const double hi = grid.max();
  const double range = hi - lo;
  out.reserve(out.size() + 2 * grid.size());
  for (int iy = 0; iy < grid.ny(); ++iy) {
    for (int ix = 0; ix < grid.nx(); ++ix) {
      const double t = range > 0.0 ? (grid(ix, iy) - lo) / range : 0.0;
      const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
      out.push_back(static_cast<std::uint8_t>(v >> 8));
      out.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
  }
  return out;
}

void save_pgm(const fs::path& path, const ScalarGrid& grid) {
  const auto bytes = encode_pgm(grid);
  write_text(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void save_scan_record(const fs::path& dir, const ScanRecord& record) {
  record.validate();
  fs::create_directories(dir);
  save_grid_csv(dir / "c0.csv", record.c0);
  save_grid_csv(dir / "c_minus.csv", record.c_minus);
  save_grid_csv(dir / "c_plus.csv", record.c_plus);
  save_grid_csv(dir / "f0.csv", record.f0);
  json shifts = json::array();
  for (const Shift s : record.shifts) shifts.push_back(shift_name(s));
  const json meta = {{"params", scan_params_json(record.params)},
                     {"post_processed", record.post_processed},
                     {"shifts", shifts}};
  write_text(dir / "scan.json", meta.dump(2) + "\n");
}

ScanRecord load_scan_record(const fs::path& dir) {
  ScalarGrid c0 = load_grid_csv(dir / "c0.csv");
  ScalarGrid cm = load_grid_csv(dir / "c_minus.csv");
  ScalarGrid cp = load_grid_csv(dir / "c_plus.csv");
  ScalarGrid f0 = load_grid_csv(dir / "f0.csv");
  if (!c0.same_shape(f0) || !cm.same_shape(f0) || !cp.same_shape(f0)) {
    throw ParseError(dir.string() + ": record grids differ in shape");
  }
  const std::size_t n = f0.size();
  ScanRecord rec{std::move(c0), std::move(cm), std::move(cp), std::move(f0), ScanParams{},
                 std::vector<Shift>(n, Shift::None), true};
  const fs::path meta_path = dir / "scan.json";
  if (fs::exists(meta_path)) {
    const std::string ctx = meta_path.string();
    const json meta = parse_json(read_text(meta_path), ctx);
    if (meta.contains("params")) rec.params = scan_params_from(meta.at("params"), ctx + ".params");
    rec.post_processed = read_req<bool>(meta, "post_processed", ctx);
    const auto shifts = read_req<std::vector<std::string>>(meta, "shifts", ctx);
    if (shifts.size() != rec.shifts.size()) {
      throw ParseError(ctx + ": shift log has " + std::to_string(shifts.size()) +
                       " entries, expected " + std::to_string(rec.shifts.size()));
    }
    for (std::size_t i = 0; i < shifts.size(); ++i) {
      rec.shifts[i] = shift_from(shifts[i], ctx + ".shifts[" + std::to_string(i) + "]");
    }
  }
  try {
    rec.validate();
  } catch (const ConfigError& e) {
    throw ParseError(dir.string() + ": " + e.what());
  }
  return rec;
}

std::string model_to_json(const TpsModel& model, const FitConfig& config) {
  json centers = json::array();
  for (Eigen::Index i = 0; i < model.centers.rows(); ++i) {
    centers.push_back({model.centers(i, 0), model.centers(i, 1)});
  }
  const json j = {{"version", NVSCAN_VERSION},
                  {"a", {model.a1, model.a2, model.a3}},
                  {"b", std::vector<double>(model.b.data(), model.b.data() + model.b.size())},
                  {"centers", centers},
                  {"config", fit_config_json(config)}};
  return j.dump(1) + "\n";
}

TpsModel model_from_json(std::string_view text, FitConfig* config) {
  const std::string ctx = "model";
  const json j = parse_json(text, ctx);
  const auto a = read_req<std::array<double, 3>>(j, "a", ctx);
  const auto b = read_req<std::vector<double>>(j, "b", ctx);
  const auto c = read_req<std::vector<std::array<double, 2>>>(j, "centers", ctx);
  if (b.size() != c.size()) {
    throw ParseError(ctx + ": " + std::to_string(b.size()) + " coefficients but " +
                     std::to_string(c.size()) + " centres");
  }
  TpsModel m;
  m.a1 = a[0];
  m.a2 = a[1];
  m.a3 = a[2];
  m.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  m.centers.resize(static_cast<Eigen::Index>(c.size()), 2);
  for (std::size_t i = 0; i < c.size(); ++i) {
    m.centers(static_cast<Eigen::Index>(i), 0) = c[i][0];
    m.centers(static_cast<Eigen::Index>(i), 1) = c[i][1];
  }
  if (config != nullptr && j.contains("config")) {
    *config = fit_config_from(j.at("config"), ctx + ".config");
  }
  return m;
}

void save_model(const fs::path& path, const TpsModel& model, const FitConfig& config) {
  write_text(path, model_to_json(model, config));
}

TpsModel load_model(const fs::path& path, FitConfig* config) {
  return model_from_json(read_text(path), config);
}

std::string line_shape_to_json(const LineShape& shape) { return shape_json(shape).dump(2) + "\n"; }

LineShape line_shape_from_json(std::string_view text) {
  return shape_from(parse_json(text, "line_shape"), "line_shape");
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json source = std::visit(
      [](const auto& src) -> json {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, DipoleField>) {
          return {{"type", "dipole"},
                  {"moment", vec3_json(src.dipole.moment)},
                  {"position", vec3_json(src.dipole.position)},
                  {"standoff", src.dipole.standoff},
                  {"window",
                   {{"x0", src.window.x0},
                    {"y0", src.window.y0},
                    {"width", src.window.width},
                    {"height", src.window.height}}}};
        } else if constexpr (std::is_same_v<T, RampField>) {
          return {{"type", "ramp"},
                  {"gradient", src.gradient},
                  {"direction", src.direction},
                  {"offset", src.offset}};
        } else {
          return {{"type", "uniform"}, {"value", src.value}};
        }
      },
      cfg.source);
  const json j = {
      {"grid", {{"nx", cfg.nx}, {"ny", cfg.ny}}},
      {"source", source},
      {"frame",
       {{"axis", vec3_json(cfg.frame.axis)},
        {"bias_field", cfg.frame.bias_field},
        {"zero_field_splitting", cfg.frame.zero_field_splitting},
        {"gyromagnetic_ratio", cfg.frame.gyromagnetic_ratio},
        {"branch", cfg.frame.branch == Branch::Upper ? "upper" : "lower"}}},
      {"line_shape", shape_json(cfg.shape)},
      {"scan", scan_params_json(cfg.scan)},
      {"fit", fit_config_json(cfg.fit)},
      {"sweep",
       {{"center_offset", cfg.sweep.center_offset},
        {"span", cfg.sweep.span},
        {"points", cfg.sweep.points}}},
      {"shot_noise", cfg.shot_noise},
      {"corner_margin", cfg.corner_margin},
      {"loss_limit", cfg.loss_limit},
      {"seed", cfg.seed}};
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(std::string_view text) {
  const std::string ctx = "config";
  const json j = parse_json(text, ctx);
  if (!j.is_object()) throw ParseError(ctx + ": expected a JSON object");
  ExperimentConfig cfg;
  if (const auto it = j.find("grid"); it != j.end()) {
    read_opt(*it, "nx", cfg.nx, ctx + ".grid");
    read_opt(*it, "ny", cfg.ny, ctx + ".grid");
  }
  if (const auto it = j.find("source"); it != j.end()) {
    const std::string sctx = ctx + ".source";
    const auto type = read_req<std::string>(*it, "type", sctx);
    if (type == "dipole") {
      DipoleField d;
      read_vec3(*it, "moment", d.dipole.moment, sctx);
      read_vec3(*it, "position", d.dipole.position, sctx);
      read_opt(*it, "standoff", d.dipole.standoff, sctx);
      if (const auto w = it->find("window"); w != it->end()) {
        read_opt(*w, "x0", d.window.x0, sctx + ".window");
        read_opt(*w, "y0", d.window.y0, sctx + ".window");
        read_opt(*w, "width", d.window.width, sctx + ".window");
        read_opt(*w, "height", d.window.height, sctx + ".window");
      }
      cfg.source = d;
    } else if (type == "ramp") {
      RampField r;
      read_opt(*it, "gradient", r.gradient, sctx);
      read_opt(*it, "direction", r.direction, sctx);
      read_opt(*it, "offset", r.offset, sctx);
      cfg.source = r;
    } else if (type == "uniform") {
      UniformField u;
      read_opt(*it, "value", u.value, sctx);
      cfg.source = u;
    } else {
      throw ParseError(sctx + ".type: unknown source '" + type + "'");
    }
  }
  if (const auto it = j.find("frame"); it != j.end()) {
    const std::string fctx = ctx + ".frame";
    read_vec3(*it, "axis", cfg.frame.axis, fctx);
    read_opt(*it, "bias_field", cfg.frame.bias_field, fctx);
    read_opt(*it, "zero_field_splitting", cfg.frame.zero_field_splitting, fctx);
    read_opt(*it, "gyromagnetic_ratio", cfg.frame.gyromagnetic_ratio, fctx);
    std::string branch = cfg.frame.branch == Branch::Upper ? "upper" : "lower";
    read_opt(*it, "branch", branch, fctx);
    if (branch == "upper") cfg.frame.branch = Branch::Upper;
    else if (branch == "lower") cfg.frame.branch = Branch::Lower;
    else throw ParseError(fctx + ".branch: unknown branch '" + branch + "'");
  }
  if (const auto it = j.find("line_shape"); it != j.end()) {
    cfg.shape = shape_from(*it, ctx + ".line_shape");
  }
  if (const auto it = j.find("scan"); it != j.end()) {
    cfg.scan = scan_params_from(*it, ctx + ".scan");
  }
  if (const auto it = j.find("fit"); it != j.end()) cfg.fit = fit_config_from(*it, ctx + ".fit");
  if (const auto it = j.find("sweep"); it != j.end()) {
    read_opt(*it, "center_offset", cfg.sweep.center_offset, ctx + ".sweep");
    read_opt(*it, "span", cfg.sweep.span, ctx + ".sweep");
    read_opt(*it, "points", cfg.sweep.points, ctx + ".sweep");
  }
  read_opt(j, "shot_noise", cfg.shot_noise, ctx);
  read_opt(j, "corner_margin", cfg.corner_margin, ctx);
  read_opt(j, "loss_limit", cfg.loss_limit, ctx);
  read_opt(j, "seed", cfg.seed, ctx);
  return cfg;
}

void save_config(const fs::path& path, const ExperimentConfig& cfg) {
  write_text(path, config_to_json(cfg));
}

ExperimentConfig load_config(const fs::path& path) {
  try {
    return config_from_json(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string report_to_json(const DeviationReport& report) {
  const json j = {{"max_all", report.max_all},
                  {"max_interior", report.max_interior},
                  {"rms_interior", report.rms_interior},
                  {"fraction_below", report.fraction_below},
                  {"threshold", report.threshold},
                  {"margin", report.margin}};
  return j.dump(2) + "\n";
}

}  // namespace nvscan
