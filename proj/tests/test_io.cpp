#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <string>

#include "nvscan/error.hpp"
#include "nvscan/io.hpp"

using namespace nvscan;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nvscan_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ScalarGrid random_grid(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(2, 9);
  std::uniform_real_distribution<double> mag(-300.0, 300.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Unit units[] = {Unit::MilliTesla, Unit::MegaHertz, Unit::Counts, Unit::Dimensionless};
  ScalarGrid g(dim(rng), dim(rng), units[rng() % 4], 0.5 + std::abs(u(rng)), 1.0 + std::abs(u(rng)));
  for (double& v : g.values()) v = u(rng) * std::pow(10.0, mag(rng));
  g[0] = std::numeric_limits<double>::denorm_min();
  g[1] = -0.0;
  return g;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("grid CSV round-trips bit for bit") {
  std::mt19937_64 rng(42);
  const fs::path dir = scratch_dir("grid");
  for (int t = 0; t < 100; ++t) {
    const ScalarGrid g = random_grid(rng);
    const ScalarGrid back = parse_grid_csv(format_grid_csv(g));
    REQUIRE(back.same_shape(g));
    CHECK(back.unit() == g.unit());
    CHECK(back.width() == g.width());
    CHECK(back.height() == g.height());
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(std::signbit(back[i]) == std::signbit(g[i]));
      CHECK(back[i] == g[i]);
    }
    if (t < 5) {
      save_grid_csv(dir / "g.csv", g);
      CHECK(load_grid_csv(dir / "g.csv") == g);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("grid CSV header and diagnostics") {
  ScalarGrid g(2, 3, Unit::MilliTesla);
  g(1, 2) = 0.1;
  const std::string text = format_grid_csv(g);
  CHECK(text.find("# nx: 2") != std::string::npos);
  CHECK(text.find("# unit: mT") != std::string::npos);
  CHECK(text.find("0.10000000000000001") != std::string::npos);

  const std::string truncated = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  try {
    parse_grid_csv(truncated, "cut.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("cut.csv") != std::string::npos);
    CHECK(msg.find("missing row 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_grid_csv("# nx: 2\n# ny: 2\n1,2\n3,x\n"), ParseError);
  CHECK_THROWS_AS(parse_grid_csv("# nx: 2\n# ny: 2\n1,2\n3\n"), ParseError);
  CHECK_THROWS_AS(parse_grid_csv("1,2\n3,4\n"), ParseError);
  CHECK_THROWS_AS(load_grid_csv("/nonexistent/nowhere.csv"), ParseError);
}

TEST_CASE("PGM rendering") {
  ScalarGrid g(3, 2, Unit::MilliTesla, {-1.0, 0.0, 1.0, 0.5, -0.5, 0.25});
  const auto bytes = encode_pgm(g);
  const std::string header = "P5\n3 2\n65535\n";
  REQUIRE(bytes.size() == header.size() + 12);
  CHECK(std::string(bytes.begin(), bytes.begin() + header.size()) == header);
  auto sample = [&](int i) {
    return (bytes[header.size() + 2 * i] << 8) | bytes[header.size() + 2 * i + 1];
  };
  CHECK(sample(0) == 0);
  CHECK(sample(1) == 32768);
  CHECK(sample(2) == 65535);
  CHECK(sample(3) == 49151);
  CHECK(sample(5) == std::lround(0.625 * 65535));

  ScalarGrid flat(4, 4, Unit::Counts);
  std::fill(flat.values().begin(), flat.values().end(), 7.0);
  const auto fb = encode_pgm(flat);
  for (std::size_t i = std::string("P5\n4 4\n65535\n").size(); i < fb.size(); ++i) CHECK(fb[i] == 0);
}

TEST_CASE("scan record round-trip") {
  std::mt19937_64 rng(7);
  ScanParams params;
  params.f_init = 3024.165;
  params.threshold = 0.93;
  params.order = ScanOrder::Raster;
  ScanRecord rec{ScalarGrid(5, 4, Unit::Counts), ScalarGrid(5, 4, Unit::Counts),
                 ScalarGrid(5, 4, Unit::Counts), ScalarGrid(5, 4, Unit::MegaHertz),
                 params, std::vector<Shift>(20, Shift::None)};
  std::uniform_real_distribution<double> u(0.0, 5000.0);
  for (std::size_t i = 0; i < 20; ++i) {
    rec.c0[i] = std::round(u(rng));
    rec.c_minus[i] = std::round(u(rng));
    rec.c_plus[i] = std::round(u(rng));
    rec.f0[i] = 3000.0 + u(rng) / 7.0;
    rec.shifts[i] = static_cast<Shift>(rng() % 3);
  }
  const fs::path dir = scratch_dir("record");
  save_scan_record(dir, rec);
  const ScanRecord back = load_scan_record(dir);
  CHECK(back.c0 == rec.c0);
  CHECK(back.c_minus == rec.c_minus);
  CHECK(back.c_plus == rec.c_plus);
  CHECK(back.f0 == rec.f0);
  CHECK(back.shifts == rec.shifts);
  CHECK(back.post_processed == rec.post_processed);
  CHECK(back.params.delta == params.delta);
  CHECK(back.params.threshold == params.threshold);
  CHECK(back.params.order == params.order);
  CHECK(back.params.f_init == params.f_init);

  fs::remove(dir / "scan.json");
  const ScanRecord external = load_scan_record(dir);
  CHECK(external.post_processed);
  for (Shift s : external.shifts) CHECK(s == Shift::None);
  fs::remove(dir / "c_plus.csv");
  CHECK_THROWS_AS(load_scan_record(dir), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("model JSON round-trip") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  TpsModel m;
  m.a1 = 3024.0 + z(rng);
  m.a2 = z(rng) / 3.0;
  m.a3 = z(rng) / 7.0;
  m.b = Eigen::VectorXd(9);
  m.centers = Points(9, 2);
  for (int i = 0; i < 9; ++i) {
    m.b[i] = z(rng) * 1e-3;
    m.centers.row(i) << z(rng), z(rng);
  }
  FitConfig cfg;
  cfg.lambda = 3.3e-9;
  cfg.center_stride = 2;
  const std::string text = model_to_json(m, cfg);
  CHECK(text.find("\"version\"") != std::string::npos);
  FitConfig back_cfg;
  const TpsModel back = model_from_json(text, &back_cfg);
  CHECK(back == m);
  CHECK(back_cfg.lambda == cfg.lambda);
  CHECK(back_cfg.center_stride == 2);

  const fs::path dir = scratch_dir("model");
  save_model(dir / "m.json", m, cfg);
  CHECK(load_model(dir / "m.json") == m);
  fs::remove_all(dir);
  CHECK_THROWS_AS(model_from_json("{\"a\": [1, 2]}"), ParseError);
  CHECK_THROWS_AS(model_from_json("not json"), ParseError);
}

TEST_CASE("config JSON round-trip") {
  ExperimentConfig cfg = wide_range_scan(77);
  cfg.nx = 40;
  cfg.frame.axis = Vec3(1.0, 2.0, 2.0) / 3.0;
  cfg.frame.branch = Branch::Lower;
  cfg.scan.order = ScanOrder::Raster;
  cfg.fit.lambda = 1.234567890123e-10;
  cfg.shot_noise = false;
  const std::string text = config_to_json(cfg);
  const ExperimentConfig back = config_from_json(text);
  CHECK(config_to_json(back) == text);
  CHECK(back.seed == 77);
  CHECK(back.frame.axis == cfg.frame.axis);
  CHECK(back.fit.lambda == cfg.fit.lambda);
  CHECK(std::get<DipoleField>(back.source).dipole.moment ==
        std::get<DipoleField>(cfg.source).dipole.moment);

  ExperimentConfig ramp = reference_scan(1);
  ramp.source = RampField{0.3, 0.25, -0.1};
  const ExperimentConfig rb = config_from_json(config_to_json(ramp));
  CHECK(std::get<RampField>(rb.source).direction == 0.25);
  ramp.source = UniformField{0.75};
  CHECK(std::get<UniformField>(config_from_json(config_to_json(ramp)).source).value == 0.75);

  const ExperimentConfig defaults = config_from_json("{}");
  CHECK(config_to_json(defaults) == config_to_json(reference_scan(1)));

  try {
    config_from_json(R"({"scan": {"delta": "twelve"}})");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("delta") != std::string::npos);
  }
  CHECK_THROWS_AS(config_from_json(R"({"source": {"type": "coil"}})"), ParseError);
}

TEST_CASE("line shape and report JSON") {
  LineShape s{0.123, 9.87, 4321.5};
  const LineShape b = line_shape_from_json(line_shape_to_json(s));
  CHECK(b.contrast == s.contrast);
  CHECK(b.fwhm == s.fwhm);
  CHECK(b.baseline == s.baseline);
  DeviationReport r{ScalarGrid(2, 2, Unit::MilliTesla)};
  r.max_all = 0.5;
  CHECK(report_to_json(r).find("max_all") != std::string::npos);
}

}
