#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/SVD>

#include "carenet/chemometrics.hpp"
#include "carenet/error.hpp"

using namespace carenet;

namespace {

RowMatrix gaussian_matrix(Eigen::Index n, Eigen::Index p, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  RowMatrix m(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) m(i, j) = g(rng);
  return m;
}

std::vector<double> gauss_bands(const WavenumberAxis& ax, const std::vector<std::array<double, 3>>& bands) {
  std::vector<double> y(ax.size(), 0.0);
  for (const auto& b : bands)
    for (std::size_t i = 0; i < ax.size(); ++i) {
      const double z = (ax[i] - b[0]) / b[1];
      y[i] += b[2] * std::exp(-0.5 * z * z);
    }
  return y;
}

}  // namespace

TEST_CASE("pca: variances and subspace agree with an SVD oracle, tall and wide") {
  for (auto [n, p] : {std::pair<Eigen::Index, Eigen::Index>{60, 8}, {12, 40}}) {
    RowMatrix x = gaussian_matrix(n, p, static_cast<std::uint64_t>(n * p));
    // Give the data some structure so the leading variances are distinct.
    for (Eigen::Index j = 0; j < p; ++j) x.col(j) *= 1.0 + 0.3 * static_cast<double>(j % 5);
    const PcaModel m = pca_fit(x, PcaSelector::fixed(5));
    REQUIRE(m.components() == 5);

    const RowMatrix centred = x.rowwise() - x.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();
    for (Eigen::Index k = 0; k < 5; ++k) {
      CHECK(m.variances(k) == doctest::Approx(s(k) * s(k) / static_cast<double>(n - 1)).epsilon(1e-9));
      const double dot = std::abs(m.loadings.row(k).dot(svd.matrixV().col(k)));
      CHECK(dot == doctest::Approx(1.0).epsilon(1e-8));
      // Sign convention: largest-magnitude entry positive.
      Eigen::Index arg;
      m.loadings.row(k).cwiseAbs().maxCoeff(&arg);
      CHECK(m.loadings(k, arg) > 0.0);
    }
    const Eigen::MatrixXd gram = m.loadings * m.loadings.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(m.total_variance == doctest::Approx(s.squaredNorm() / static_cast<double>(n - 1)));
    CHECK(m.rank == static_cast<std::size_t>(std::min(n - 1, p)));
  }
}

TEST_CASE("pca: variance threshold keeps the smallest sufficient count") {
  RowMatrix x = gaussian_matrix(200, 6, 3);
  x.col(0) *= 10.0;
  x.col(1) *= 5.0;
  const PcaModel m = pca_fit(x, PcaSelector::variance(0.8));
  const auto ratio = m.explained_ratio();
  double cum = 0.0;
  for (Eigen::Index k = 0; k < ratio.size(); ++k) cum += ratio(k);
  CHECK(cum >= 0.8);
  CHECK(cum - ratio(ratio.size() - 1) < 0.8);
}

TEST_CASE("pca: bad input") {
  CHECK_THROWS_AS(pca_fit(RowMatrix::Ones(1, 4), PcaSelector::fixed(1)), InvalidArgument);
  RowMatrix x = gaussian_matrix(5, 3, 1);
  x(2, 1) = std::nan("");
  CHECK_THROWS_AS(pca_fit(x, PcaSelector::fixed(1)), InvalidArgument);
}

TEST_CASE("T2 and Q match a hand computation") {
  const RowMatrix x = gaussian_matrix(40, 10, 17);
  const PcaModel m = pca_fit(x, PcaSelector::fixed(3));
  for (Eigen::Index i = 0; i < 5; ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    const ProjectionStats st = scores_and_residuals(m, {x.row(i).data(), 10});
    const Eigen::VectorXd c = row - m.mean;
    const Eigen::VectorXd s = m.loadings * c;
    double t2 = 0.0;
    for (int k = 0; k < 3; ++k) t2 += s(k) * s(k) / m.variances(k);
    const double q = (c - m.loadings.transpose() * s).squaredNorm();
    CHECK(st.t2 == doctest::Approx(t2).epsilon(1e-10));
    CHECK(st.q == doctest::Approx(q).epsilon(1e-10));
  }
}

TEST_CASE("outliers: gross spikes are always rejected") {
  RowMatrix x = gaussian_matrix(300, 80, 5, 0.01);
  const auto signal = gauss_bands(build_axis(1800, 900, 80), {{1650, 40, 1.0}, {1240, 30, 0.4}});
  for (Eigen::Index i = 0; i < 300; ++i)
    for (Eigen::Index j = 0; j < 80; ++j) x(i, j) += signal[static_cast<std::size_t>(j)];
  const std::vector<Eigen::Index> spiked{7, 150, 299};
  for (auto i : spiked) x(i, 60) += 10.0;
  const auto r = remove_outliers(x, 10, 0.95);
  for (auto i : spiked) CHECK(r.report.kept[static_cast<std::size_t>(i)] == 0);
  CHECK(r.kept.rows() == static_cast<Eigen::Index>(r.kept_indices.size()));
  CHECK(r.report.rejected() + r.kept_indices.size() == 300);
}

TEST_CASE("outliers: clean gaussian rejection rate sits near 1 - confidence") {
  double total = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto r = remove_outliers(gaussian_matrix(400, 30, 100 + s), 10, 0.95);
    total += static_cast<double>(r.report.rejected()) / 400.0;
  }
  const double rate = total / 10.0;
  CHECK(rate >= 0.05);
  CHECK(rate <= 0.12);
}

TEST_CASE("outliers: degenerate and undersized input") {
  CHECK_THROWS_AS(remove_outliers(RowMatrix::Ones(20, 5), 3), DegenerateInput);
  CHECK_THROWS_AS(remove_outliers(gaussian_matrix(5, 5, 1), 10), InvalidArgument);
}

TEST_CASE("outliers: re-applying the thresholds reproduces the kept mask") {
  const RowMatrix x = gaussian_matrix(200, 20, 8);
  const auto r = remove_outliers(x, 5, 0.9);
  const auto kept = apply_outlier_thresholds(r.model, x, r.report.t2_threshold, r.report.q_threshold);
  CHECK(kept == r.report.kept);
}

TEST_CASE("baseline basis: descending axis maps to [+1, -1]") {
  const auto b = baseline_basis(build_axis(1800, 900, 11), 3);
  CHECK(b(0, 1) == doctest::Approx(1.0));
  CHECK(b(10, 1) == doctest::Approx(-1.0));
  CHECK(b(5, 1) == doctest::Approx(0.0));
  CHECK(b(10, 3) == doctest::Approx(-1.0));
  CHECK((b.col(0).array() == 1.0).all());
}

TEST_CASE("emsc: exact recovery of noiseless mixtures of the model columns") {
  const auto ax = build_axis(1800, 900, 467);
  const auto ref = gauss_bands(ax, {{1655, 25, 1.0}, {1545, 20, 0.7}, {1240, 30, 0.3}, {1080, 25, 0.4}});
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RowMatrix par(30, 467), wat(30, 467);
  for (int i = 0; i < 30; ++i) {
    const auto p = gauss_bands(ax, {{1462, 8, 0.5 + u(rng)}, {1373, 6, 0.2 + u(rng)}, {1420, 10, u(rng)}});
    const auto w = gauss_bands(ax, {{1700 - 40 * u(rng), 2, u(rng)}, {1500, 2, u(rng)}, {1400, 3, u(rng)}});
    // A little noise keeps the interferent means out of their PC spans.
    for (int j = 0; j < 467; ++j) par(i, j) = p[j] + 1e-3 * (u(rng) - 0.5), wat(i, j) = w[j] + 1e-3 * (u(rng) - 0.5);
  }
  const EmscModel model = emsc_build_model(ref, par, wat, ax);
  CHECK(model.baseline_columns() == 5);
  // Interferent columns vanish outside their bands.
  const auto [pf, pl] = ax.band_indices(1500, 1350);
  const auto& d = model.design();
  for (Eigen::Index j = 6; j < 6 + static_cast<Eigen::Index>(model.paraffin_columns()); ++j) {
    CHECK(d.col(j).head(static_cast<Eigen::Index>(pf)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(d.col(j).tail(466 - static_cast<Eigen::Index>(pl)).cwiseAbs().maxCoeff() == 0.0);
  }

  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd c(static_cast<Eigen::Index>(model.columns()));
    for (Eigen::Index k = 0; k < c.size(); ++k) c(k) = u(rng) - 0.5;
    c(0) = 0.5 + 1.5 * u(rng);
    const Eigen::VectorXd x = d * c;
    const auto r = emsc_correct({x.data(), 467}, model);
    CHECK((r.coefficients - c).cwiseAbs().maxCoeff() <= 1e-6);
    double worst = 0.0;
    for (int j = 0; j < 467; ++j) worst = std::max(worst, std::abs(r.corrected[j] - ref[j]));
    CHECK(worst <= 1e-6);
    CHECK(r.residual_norm < 1e-8);
  }
}

TEST_CASE("emsc: a spectrum with no reference component is degenerate") {
  const auto ax = build_axis(1800, 900, 200);
  const auto ref = gauss_bands(ax, {{1655, 25, 1.0}, {1240, 30, 0.3}});
  RowMatrix par(3, 200), wat(3, 200);
  for (int i = 0; i < 3; ++i) {
    const auto p = gauss_bands(ax, {{1462, 8, 1.0 + i}, {1373, 6, 0.5}});
    const auto w = gauss_bands(ax, {{1650, 3, 0.1 * (i + 1)}, {1520, 3, 0.3}});
    for (int j = 0; j < 200; ++j) par(i, j) = p[j], wat(i, j) = w[j];
  }
  const EmscModel model = emsc_build_model(ref, par, wat, ax);
  const Eigen::VectorXd flat = baseline_basis(ax, 4).col(1) * 0.3;
  CHECK_THROWS_AS(emsc_correct({flat.data(), 200}, model), DegenerateInput);
  std::vector<double> wrong(100, 1.0);
  CHECK_THROWS_AS(emsc_correct(wrong, model), InvalidArgument);
}
