#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "nvscan/error.hpp"
#include "nvscan/odmr.hpp"
#include "oracles.hpp"

using namespace nvscan;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

template <class Draw>
Moments moments(int n, Draw draw) {
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = static_cast<double>(draw());
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  return {mean, (s2 - n * mean * mean) / (n - 1)};
}

std::vector<double> synth(const LineShape& shape, double f_res, const std::vector<double>& f) {
  std::vector<double> c;
  for (double x : f) c.push_back(shape.baseline * lineshape_value(shape, x - f_res));
  return c;
}

}  // namespace

TEST_SUITE("odmr") {

TEST_CASE("line shape landmarks") {
  const LineShape s;
  CHECK(lineshape_value(s, 0.0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(lineshape_value(s, 6.0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(lineshape_value(s, -6.0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(std::abs(lineshape_value(s, 120.0) - 1.0) < 1e-12);
  double prev = lineshape_value(s, 0.0);
  for (double x = 0.5; x < 60.0; x += 0.5) {
    const double g = lineshape_value(s, x);
    CHECK(g == lineshape_value(s, -x));
    CHECK(g >= prev);
    CHECK(g == doctest::Approx(oracle::gauss_dip(0.2, 12.0, x)).epsilon(1e-15));
    CHECK(lineshape_slope(s, x) ==
          doctest::Approx((lineshape_value(s, x + 1e-6) - lineshape_value(s, x - 1e-6)) / 2e-6)
              .epsilon(1e-6));
    prev = g;
  }
  LineShape bad;
  bad.contrast = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = LineShape{};
  bad.fwhm = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("shot noise on a flat spectrum is Poisson(N0)") {
  LineShape s;
  s.contrast = 1e-12;
  Rng rng(5);
  const int n = 100000;
  const auto m = moments(n, [&] { return sample_pl(s, 3000.0, 3000.0, rng); });
  CHECK(std::abs(m.mean - s.baseline) < 3.0 * std::sqrt(s.baseline / n));
  CHECK(m.var == doctest::Approx(m.mean).epsilon(0.05));
}

TEST_CASE("shot noise at resonance matches an independent Poisson sampler") {
  const LineShape s;
  const int n = 100000;
  Rng rng(17);
  const auto lib = moments(n, [&] { return sample_pl(s, 2990.0, 2990.0, rng); });
  std::mt19937_64 orng(99);
  const auto ref = moments(n, [&] { return oracle::poisson(4000.0, orng); });
  const double sigma = std::sqrt(4000.0 / n);
  CHECK(std::abs(lib.mean - 4000.0) < 3.0 * sigma);
  CHECK(std::abs(ref.mean - 4000.0) < 3.0 * sigma);
  CHECK(std::abs(lib.mean - ref.mean) < 3.0 * std::sqrt(2.0) * sigma);
  CHECK(lib.var == doctest::Approx(lib.mean).epsilon(0.05));
  CHECK(lib.var == doctest::Approx(ref.var).epsilon(0.05));
}

TEST_CASE("sampling is reproducible for a fixed seed") {
  const LineShape s;
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    const double f = 2990.0 + 0.1 * i;
    CHECK(sample_pl(s, f, 3000.0, a) == sample_pl(s, f, 3000.0, b));
  }
}

TEST_CASE("noise-free spectrum fit recovers the parameters") {
  LineShape truth;
  truth.contrast = 0.17;
  truth.fwhm = 9.5;
  truth.baseline = 4200.0;
  const auto f = sweep_frequencies(3020.0, 80.0, 61);
  const auto fit = fit_spectrum(f, synth(truth, 3023.7, f));
  CHECK(fit.resonance == doctest::Approx(3023.7).epsilon(1e-6));
  CHECK(fit.shape.contrast == doctest::Approx(0.17).epsilon(1e-6));
  CHECK(fit.shape.fwhm == doctest::Approx(9.5).epsilon(1e-6));
  CHECK(fit.shape.baseline == doctest::Approx(4200.0).epsilon(1e-6));
  CHECK(fit.residual_rms < 1e-8);
}

TEST_CASE("Poisson spectrum fit locates the resonance within w/10") {
  const LineShape s;
  const auto f = sweep_frequencies(3024.0, 100.0, 50);
  std::vector<double> err;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const double f_res = 3024.0 + 4.0 * std::uniform_real_distribution<double>(-1, 1)(rng);
    std::vector<double> c;
    for (double x : f) c.push_back(static_cast<double>(sample_pl(s, x, f_res, rng)));
    err.push_back(std::abs(fit_spectrum(f, c).resonance - f_res));
  }
  std::sort(err.begin(), err.end());
  CHECK(err[94] < s.fwhm / 10.0);
}

TEST_CASE("spectrum fit rejects data without a dip") {
  std::vector<double> f, c;
  for (int i = 0; i < 20; ++i) {
    f.push_back(3000.0 + i);
    c.push_back(4000.0 + 10.0 * i);
  }
  CHECK_THROWS_AS(fit_spectrum(f, c), FitError);
  CHECK_THROWS_AS(fit_spectrum(std::vector<double>{1, 2, 3}, std::vector<double>{3, 1, 3}),
                  FitError);
}

TEST_CASE("sweep frequencies") {
  const auto f = sweep_frequencies(100.0, 10.0, 11);
  REQUIRE(f.size() == 11);
  CHECK(f.front() == 95.0);
  CHECK(f.back() == 105.0);
  CHECK(f[5] == 100.0);
}

}
