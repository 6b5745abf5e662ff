#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "carenet/error.hpp"
#include "carenet/spectral.hpp"
#include "carenet/stats.hpp"

using namespace carenet;

TEST_CASE("axis: biofingerprint grid has 467 descending points") {
  const double step = 900.0 / 466.0;
  const auto raw = build_axis(900.0 + 1579.0 * step, 900.0, 1580);
  const auto [first, last] = raw.band_indices(1800.0, 900.0);
  CHECK(last - first + 1 == 467);
  const auto sub = raw.sub_axis(first, last);
  CHECK(sub.size() == 467);
  CHECK(sub[0] == doctest::Approx(1800.0).epsilon(1e-9));
  CHECK(sub[466] == doctest::Approx(900.0).epsilon(1e-9));
  for (std::size_t i = 1; i < sub.size(); ++i) CHECK(sub[i] < sub[i - 1]);
}

TEST_CASE("axis: invalid construction and bands") {
  CHECK_THROWS_AS(build_axis(900.0, 1800.0, 10), InvalidArgument);
  CHECK_THROWS_AS(build_axis(1800.0, 900.0, 1), InvalidArgument);
  const auto ax = build_axis(1800.0, 900.0, 467);
  CHECK_THROWS_AS(ax.band_indices(4000.0, 3500.0), InvalidArgument);
}

TEST_CASE("integrate_band: trapezoid of a linear ramp is exact") {
  const auto ax = build_axis(1800.0, 900.0, 901);
  Spectrum s{ax, std::vector<double>(ax.size())};
  for (std::size_t i = 0; i < ax.size(); ++i) s.intensities[i] = 2.0 + 0.01 * ax[i];
  // integral of 2 + 0.01 x over [1500, 1700]
  const double expected = 2.0 * 200.0 + 0.005 * (1700.0 * 1700.0 - 1500.0 * 1500.0);
  CHECK(integrate_band(s, {1700.0, 1500.0}) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("savitzky-golay: centre weights match the tabulated convolution kernels") {
  SavitzkyGolay sg5(5, 2);
  std::vector<double> impulse(21, 0.0);
  impulse[10] = 1.0;
  const auto r5 = sg5.apply(impulse);
  const double k5[] = {-3, 12, 17, 12, -3};
  for (int j = 0; j < 5; ++j) CHECK(r5[8 + j] == doctest::Approx(k5[4 - j] / 35.0).epsilon(1e-12));

  SavitzkyGolay sg11(11, 2);
  const auto r11 = sg11.apply(impulse);
  const double k11[] = {-36, 9, 44, 69, 84, 89, 84, 69, 44, 9, -36};
  for (int j = 0; j < 11; ++j) CHECK(r11[5 + j] == doctest::Approx(k11[10 - j] / 429.0).epsilon(1e-12));
}

TEST_CASE("savitzky-golay: quadratics reproduced everywhere including the edges") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SavitzkyGolay sg(11, 2);
  for (int trial = 0; trial < 25; ++trial) {
    const double a = u(rng), b = u(rng), c = u(rng);
    std::vector<double> y(467);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double t = static_cast<double>(i) / 466.0;
      y[i] = a + b * t + c * t * t;
    }
    const auto out = sg.apply(y);
    double worst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(out[i] - y[i]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("savitzky-golay: smoothing lowers noise variance and keeps length") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> y(467);
  for (auto& v : y) v = n(rng);
  const auto out = SavitzkyGolay(11, 2).apply(y);
  CHECK(out.size() == y.size());
  CHECK(stddev(out) < 0.7 * stddev(y));
}

TEST_CASE("savitzky-golay: rejects even windows and too-short input") {
  CHECK_THROWS_AS(SavitzkyGolay(10, 2), InvalidArgument);
  CHECK_THROWS_AS(SavitzkyGolay(3, 3), InvalidArgument);
  std::vector<double> y(5, 1.0);
  CHECK_THROWS_AS(SavitzkyGolay(11, 2).apply(y), InvalidArgument);
}

TEST_CASE("minmax: output spans [0, 1]; constant spectra are degenerate") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 7.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> y(50);
    for (auto& v : y) v = u(rng);
    minmax_normalize_inplace(y);
    CHECK(*std::min_element(y.begin(), y.end()) == 0.0);
    CHECK(*std::max_element(y.begin(), y.end()) == 1.0);
  }
  std::vector<double> flat(10, 0.25);
  CHECK_THROWS_AS(minmax_normalize_inplace(flat), DegenerateInput);
}

TEST_CASE("stats: type-7 quantile and population std") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({10, 0, 5}, 0.25) == doctest::Approx(2.5));
  CHECK(quantile({1, 2, 3, 4, 5}, 0.95) == doctest::Approx(4.8));
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  CHECK(stddev(v) == doctest::Approx(2.0));
  CHECK(mean(v) == doctest::Approx(5.0));
}
