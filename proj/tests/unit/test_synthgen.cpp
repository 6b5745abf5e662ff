#include <doctest.h>

#include <cmath>
#include <random>

#include "carenet/dataset.hpp"
#include "carenet/error.hpp"
#include "carenet/synthgen.hpp"

using namespace carenet;

TEST_CASE("synth axis: 1580 points from 3950 to 900 cm-1") {
  const SynthConfig cfg;
  const auto ax = cfg.axis();
  CHECK(ax.size() == 1580);
  CHECK(ax.spacing() == doctest::Approx(900.0 / 466.0));
  CHECK(ax[0] == doctest::Approx(3950.0).epsilon(1e-3));
  CHECK(ax[1579] == doctest::Approx(900.0));
}

TEST_CASE("panel: patients per subtype, two cores each, labels consistent") {
  SynthConfig cfg;
  cfg.patients_per_subtype = {2, 2, 1, 1};
  cfg.rows = cfg.cols = 8;
  const SynthPanel panel = gen_panel(cfg);
  CHECK(cfg.total_patients() == 6);
  REQUIRE(panel.patients.size() == 6);
  CHECK(panel.cores.size() == 12);
  for (const auto& p : panel.patients) {
    const auto& ca = panel.cores[p.ca_core].cube;
    const auto& at = panel.cores[p.at_core].cube;
    CHECK(ca.core_type == CoreType::CA);
    CHECK(ca.subtype == p.subtype);
    CHECK(at.core_type == CoreType::AT);
    CHECK(at.subtype == Subtype::None);
    CHECK(ca.patient_id == p.patient_id);
    CHECK(at.patient_id == p.patient_id);
    CHECK_NOTHROW(ca.validate());
  }
  CHECK(panel.patients[0].subtype == Subtype::LA);
  CHECK(panel.patients[5].subtype == Subtype::TNBC);
}

TEST_CASE("panel: deterministic per seed") {
  SynthConfig cfg;
  cfg.patients_per_subtype = {1, 1, 1, 1};
  cfg.rows = cfg.cols = 6;
  cfg.seed = 5;
  const auto a = gen_panel(cfg);
  const auto b = gen_panel(cfg);
  for (std::size_t i = 0; i < a.cores.size(); ++i) CHECK(a.cores[i].cube.intensities == b.cores[i].cube.intensities);
  CHECK(a.environment.intensities == b.environment.intensities);
  cfg.seed = 6;
  const auto c = gen_panel(cfg);
  CHECK(a.cores[0].cube.intensities != c.cores[0].cube.intensities);
}

TEST_CASE("geometry: disc of tissue, ring of paraffin, slide outside") {
  SynthConfig cfg;
  const auto gt = core_geometry(32, 32, cfg);
  REQUIRE(gt.size() == 1024);
  CHECK(gt[0] == static_cast<std::uint8_t>(PixelClass::Slide));
  CHECK(gt[16 * 32 + 16] == static_cast<std::uint8_t>(PixelClass::Tissue));
  std::size_t tissue = 0, paraffin = 0;
  for (auto v : gt) {
    tissue += v == static_cast<std::uint8_t>(PixelClass::Tissue);
    paraffin += v == static_cast<std::uint8_t>(PixelClass::Paraffin);
  }
  // Disc area pi (0.6 * 16)^2 ~ 290, ring pi 16^2 (0.85^2 - 0.6^2) ~ 291.
  CHECK(tissue == doctest::Approx(290).epsilon(0.05));
  CHECK(paraffin == doctest::Approx(291).epsilon(0.08));
}

TEST_CASE("class separation 0 makes every class share the same tissue bands") {
  SynthConfig cfg;
  cfg.class_separation = 0.0;
  const auto bands = role_bands(cfg, SpectrumRole::Tissue);
  const auto ax = cfg.axis();
  const auto ref = band_sum(ax, bands, 0);
  for (std::size_t c = 1; c < kNumSynthClasses; ++c) CHECK(band_sum(ax, bands, c) == ref);
  cfg.class_separation = 1.0;
  const auto b1 = role_bands(cfg, SpectrumRole::Tissue);
  CHECK(band_sum(ax, b1, 0) != band_sum(ax, b1, 1));
  CHECK(band_sum(ax, b1, 1) != band_sum(ax, b1, 2));
}

TEST_CASE("discriminative band: classes differ only near the configured band") {
  SynthConfig cfg;
  cfg.discriminative_band = Band{1550.0, 1510.0};
  const auto bands = role_bands(cfg, SpectrumRole::Tissue);
  const auto ax = cfg.axis();
  const auto at = band_sum(ax, bands, 0);
  const auto ca = band_sum(ax, bands, 1);
  double inside = 0.0, outside = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) {
    const double d = std::abs(at[i] - ca[i]);
    if (std::abs(ax[i] - 1530.0) <= 40.0) inside = std::max(inside, d);
    else outside = std::max(outside, d);
  }
  CHECK(inside > 0.01);
  // Only the Gaussian tail (sigma 10, at least 4 sigma out) leaks outside.
  CHECK(outside < 1e-3 * inside);
  for (std::size_t c = 2; c < kNumSynthClasses; ++c) CHECK(band_sum(ax, bands, c) == ca);
}

TEST_CASE("spikes: only on tissue pixels, between 1440 and 900, ten times the pixel max") {
  SynthConfig cfg;
  cfg.rows = cfg.cols = 16;
  cfg.spike_fraction = 0.2;
  std::mt19937_64 rng(3);
  const auto eff = draw_patient_effects(cfg, rng);
  const SynthCore spiked = gen_core(cfg, 1, 0, CoreType::CA, Subtype::LB, eff);
  cfg.spike_fraction = 0.0;
  REQUIRE_FALSE(spiked.spiked_pixels.empty());
  const auto& ax = spiked.cube.axis;
  const auto [first, last] = ax.band_indices(1440.0, 900.0);
  for (auto p : spiked.spiked_pixels) {
    CHECK(spiked.ground_truth[p] == static_cast<std::uint8_t>(PixelClass::Tissue));
    const auto px = spiked.cube.pixel(p);
    const auto peak = std::max_element(px.begin(), px.end()) - px.begin();
    CHECK(static_cast<std::size_t>(peak) >= first);
    CHECK(static_cast<std::size_t>(peak) <= last);
  }
}

TEST_CASE("gen_spectrum: slide pixels are weak, tissue shows amide I") {
  SynthConfig cfg;
  std::mt19937_64 rng(8);
  const auto tissue = gen_spectrum(cfg, SpectrumRole::Tissue, CoreType::CA, Subtype::LA, rng);
  const auto slide = gen_spectrum(cfg, SpectrumRole::Slide, CoreType::CA, Subtype::LA, rng);
  const auto& ax = tissue.spectrum.axis;
  const auto [a1, a2] = ax.band_indices(1660.0, 1650.0);
  double tmax = 0.0, smax = 0.0;
  for (std::size_t i = a1; i <= a2; ++i) tmax = std::max(tmax, tissue.spectrum.intensities[i]);
  for (double v : slide.spectrum.intensities) smax = std::max(smax, std::abs(v));
  CHECK(tmax > 0.5);
  CHECK(smax < 0.1);
  CHECK(tissue.scale >= cfg.scale_min);
  CHECK(tissue.scale <= cfg.scale_max);
}

TEST_CASE("config validation") {
  SynthConfig cfg;
  cfg.scale_min = 2.0;
  cfg.scale_max = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  SynthConfig c2;
  c2.tissue_radius = 0.9;
  c2.paraffin_radius = 0.5;
  CHECK_THROWS_AS(c2.validate(), InvalidArgument);
  SynthConfig c3;
  c3.discriminative_band = Band{1500.0, 1600.0};
  CHECK_THROWS_AS(c3.validate(), InvalidArgument);
}
