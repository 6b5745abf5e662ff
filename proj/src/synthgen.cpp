#include "carenet/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include "carenet/dataset.hpp"
#include "carenet/error.hpp"

namespace carenet {

namespace {

constexpr double kDeltaAmplitude = 0.15;
constexpr double kSingleBandAmplitude = 0.2;

std::uint32_t lo32(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
std::uint32_t hi32(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint32_t a, std::uint32_t b,
                            std::uint32_t salt) {
  std::seed_seq seq{lo32(seed), hi32(seed), a, b, salt};
  return std::mt19937_64(seq);
}

BandSpec band(double center, double width, double amplitude) {
  return {center, width, amplitude, {1.0, 1.0, 1.0, 1.0, 1.0}};
}

BandSpec class_band(double center, double width, double amplitude,
                    std::array<double, kNumSynthClasses> modulation) {
  return {center, width, amplitude, modulation};
}

std::vector<double> scaled_axis(const WavenumberAxis& axis) {
  const std::size_t n = axis.size();
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = 1.0 - 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return u;
}

}  // namespace

std::size_t class_index(CoreType type, Subtype subtype) {
  encode_labels(type, subtype);
  return type == CoreType::AT ? 0 : 1 + static_cast<std::size_t>(subtype);
}

int SynthConfig::total_patients() const {
  int n = 0;
  for (int p : patients_per_subtype) n += p;
  return n;
}

void SynthConfig::validate() const {
  for (int p : patients_per_subtype) {
    if (p < 0) throw InvalidArgument("patients per subtype must be non-negative");
  }
  if (rows < 1 || cols < 1) throw InvalidArgument("image size must be at least 1x1");
  (void)axis();
  if (noise_sigma < 0 || baseline_max < 0 || patient_jitter < 0 || pixel_jitter < 0 ||
      tissue_paraffin_max < 0 || h2o_max < 0 || env_h2o_max < 0 || class_separation < 0) {
    throw InvalidArgument("synthetic generator amplitudes must be non-negative");
  }
  if (!(scale_min > 0) || scale_max < scale_min) {
    throw InvalidArgument("scale range must satisfy 0 < scale_min <= scale_max");
  }
  if (baseline_order < 0 || baseline_order > 4) throw InvalidArgument("baseline order must be 0..4");
  if (!(tissue_radius > 0) || paraffin_radius < tissue_radius) {
    throw InvalidArgument("geometry needs 0 < tissue_radius <= paraffin_radius");
  }
  if (spike_fraction < 0 || spike_fraction > 1) throw InvalidArgument("spike fraction must be in [0, 1]");
  if (discriminative_band && !(discriminative_band->high_wn > discriminative_band->low_wn)) {
    throw InvalidArgument("discriminative band must have high > low");
  }
}

std::vector<BandSpec> role_bands(const SynthConfig& cfg, SpectrumRole role) {
  switch (role) {
    case SpectrumRole::Tissue: {
      std::vector<BandSpec> b{
          band(3300, 60, 0.35), band(3070, 30, 0.05), band(2960, 10, 0.10),
          band(2920, 10, 0.12), band(2850, 8, 0.07),  band(1740, 10, 0.05),
          band(1655, 14, 1.00), band(1545, 14, 0.55), band(1450, 10, 0.12),
          band(1400, 12, 0.10), band(1310, 12, 0.06), band(1240, 14, 0.12),
          band(1160, 12, 0.07), band(1080, 14, 0.15), band(1030, 14, 0.10),
          band(970, 10, 0.04)};
      const double s = cfg.class_separation;
      if (cfg.discriminative_band) {
        const Band& d = *cfg.discriminative_band;
        const double at = std::max(0.0, 1.0 - 0.5 * s);
        const double ca = 1.0 + 0.5 * s;
        b.push_back(class_band(0.5 * (d.high_wn + d.low_wn), 0.25 * (d.high_wn - d.low_wn),
                               kSingleBandAmplitude, {at, ca, ca, ca, ca}));
        return b;
      }
      const std::array<double, kNumSynthClasses> type{0, s, s, s, s};
      b.push_back(class_band(1620, 8, kDeltaAmplitude, type));
      b.push_back(class_band(1530, 8, kDeltaAmplitude, type));
      b.push_back(class_band(1300, 8, kDeltaAmplitude, type));
      b.push_back(class_band(1030, 20, kDeltaAmplitude, type));
      b.push_back(class_band(1715, 14, kDeltaAmplitude, {0, s, 0, 0, 0}));
      b.push_back(class_band(1580, 4, kDeltaAmplitude, {0, 0, s, 0, 0}));
      b.push_back(class_band(1530, 8, kDeltaAmplitude, {0, 0, 0, s, 0}));
      b.push_back(class_band(1635, 10, kDeltaAmplitude, {0, 0, 0, 0, s}));
      return b;
    }
    case SpectrumRole::Paraffin:
      return {band(2955, 8, 0.5), band(2920, 8, 1.0), band(2850, 7, 0.7), band(1462, 6, 0.5),
              band(1373, 4, 0.2)};
    case SpectrumRole::Slide:
    case SpectrumRole::H2O:
      return {};
  }
  return {};
}

// Gaussian tails below exp(-40) are dropped.
constexpr double kGaussCutoff = 40.0;

std::vector<double> band_sum(const WavenumberAxis& axis, const std::vector<BandSpec>& bands,
                             std::size_t cls, const std::vector<double>* factors) {
  if (factors && factors->size() != bands.size()) {
    throw InvalidArgument("band factor count does not match band count");
  }
  std::vector<double> y(axis.size(), 0.0);
  for (std::size_t k = 0; k < bands.size(); ++k) {
    const BandSpec& b = bands[k];
    const double a = b.amplitude_for(cls) * (factors ? (*factors)[k] : 1.0);
    if (a == 0.0) continue;
    const double inv = 1.0 / (2.0 * b.width * b.width);
    for (std::size_t i = 0; i < axis.size(); ++i) {
      const double z = (axis[i] - b.center) * (axis[i] - b.center) * inv;
      if (z < kGaussCutoff) y[i] += a * std::exp(-z);
    }
  }
  return y;
}

std::array<std::vector<double>, 2> h2o_patterns(const WavenumberAxis& axis) {
  std::array<std::vector<double>, 2> out;
  for (std::size_t p = 0; p < 2; ++p) {
    std::mt19937_64 rng(0x48324f00u + p);
    std::vector<BandSpec> lines;
    for (const auto& [lo, hi] : {std::pair{1300.0, 1800.0}, std::pair{3500.0, 3900.0}}) {
      std::uniform_real_distribution<double> pos(lo, hi);
      std::uniform_real_distribution<double> amp(0.2, 1.0);
      for (int k = 0; k < 30; ++k) lines.push_back(band(pos(rng), 1.2, amp(rng)));
    }
    out[p] = band_sum(axis, lines, 0);
    const double mx = *std::max_element(out[p].begin(), out[p].end());
    if (mx > 0) {
      for (double& v : out[p]) v /= mx;
    }
  }
  return out;
}

PatientEffects draw_patient_effects(const SynthConfig& cfg, std::mt19937_64& rng) {
  const auto bands = role_bands(cfg, SpectrumRole::Tissue);
  std::normal_distribution<double> n(0.0, 1.0);
  PatientEffects e;
  for (std::size_t k = 0; k < bands.size(); ++k) {
    e.band_factors.push_back(std::max(0.0, 1.0 + cfg.patient_jitter * n(rng)));
  }
  return e;
}

namespace {

struct Cache {
  WavenumberAxis axis;
  std::vector<double> u;
  std::array<std::vector<double>, 2> h2o;
  std::vector<BandSpec> tissue;
  std::vector<double> paraffin;
};

Cache make_cache(const SynthConfig& cfg) {
  Cache c;
  c.axis = cfg.axis();
  c.u = scaled_axis(c.axis);
  c.h2o = h2o_patterns(c.axis);
  c.tissue = role_bands(cfg, SpectrumRole::Tissue);
  c.paraffin = band_sum(c.axis, role_bands(cfg, SpectrumRole::Paraffin), 0);
  return c;
}

GeneratedSpectrum gen_with_cache(const SynthConfig& cfg, const Cache& c, SpectrumRole role,
                                 std::size_t cls, std::mt19937_64& rng,
                                 const PatientEffects* effects) {
  const std::size_t n = c.axis.size();
  GeneratedSpectrum g;
  g.spectrum.axis = c.axis;
  std::vector<double>& y = g.spectrum.intensities;
  y.assign(n, 0.0);

  std::uniform_real_distribution<double> base(-cfg.baseline_max, cfg.baseline_max);
  g.baseline_coefficients.resize(static_cast<std::size_t>(cfg.baseline_order) + 1);
  for (double& b : g.baseline_coefficients) b = base(rng);
  std::normal_distribution<double> normal(0.0, 1.0);

  switch (role) {
    case SpectrumRole::Tissue: {
      std::vector<double> factors(c.tissue.size(), 1.0);
      for (std::size_t k = 0; k < factors.size(); ++k) {
        const double pf = effects ? effects->band_factors.at(k) : 1.0;
        factors[k] = std::max(0.0, pf * (1.0 + cfg.pixel_jitter * normal(rng)));
      }
      g.scale = std::uniform_real_distribution<double>(cfg.scale_min, cfg.scale_max)(rng);
      g.paraffin_amount = std::uniform_real_distribution<double>(0.0, cfg.tissue_paraffin_max)(rng);
      const auto t = band_sum(c.axis, c.tissue, cls, &factors);
      for (std::size_t i = 0; i < n; ++i) y[i] = g.scale * t[i] + g.paraffin_amount * c.paraffin[i];
      break;
    }
    case SpectrumRole::Paraffin:
      g.scale = std::uniform_real_distribution<double>(0.7, 1.3)(rng);
      for (std::size_t i = 0; i < n; ++i) y[i] = g.scale * c.paraffin[i];
      break;
    case SpectrumRole::Slide:
      g.scale = 0.0;
      for (double& b : g.baseline_coefficients) b *= 0.1;
      break;
    case SpectrumRole::H2O:
      g.scale = 0.0;
      for (double& b : g.baseline_coefficients) b *= 0.1;
      break;
  }

  const double h2o_max = role == SpectrumRole::H2O ? cfg.env_h2o_max : cfg.h2o_max;
  std::uniform_real_distribution<double> h(0.0, h2o_max);
  g.h2o_amounts = {h(rng), h(rng)};
  for (std::size_t i = 0; i < n; ++i) {
    double b = 0.0;
    for (std::size_t k = g.baseline_coefficients.size(); k-- > 0;) b = b * c.u[i] + g.baseline_coefficients[k];
    y[i] += b + g.h2o_amounts[0] * c.h2o[0][i] + g.h2o_amounts[1] * c.h2o[1][i];
  }
  if (cfg.noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (double& v : y) v += noise(rng);
  }
  return g;
}

}  // namespace

GeneratedSpectrum gen_spectrum(const SynthConfig& cfg, SpectrumRole role, CoreType type,
                               Subtype subtype, std::mt19937_64& rng,
                               const PatientEffects* effects) {
  cfg.validate();
  return gen_with_cache(cfg, make_cache(cfg), role, class_index(type, subtype), rng, effects);
}

std::vector<std::uint8_t> core_geometry(std::size_t rows, std::size_t cols, const SynthConfig& cfg) {
  std::vector<std::uint8_t> gt(rows * cols);
  const double cr = 0.5 * static_cast<double>(rows - 1);
  const double cc = 0.5 * static_cast<double>(cols - 1);
  const double radius = 0.5 * static_cast<double>(std::min(rows, cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = std::hypot(static_cast<double>(r) - cr, static_cast<double>(c) - cc) / radius;
      gt[r * cols + c] = static_cast<std::uint8_t>(
          d < cfg.tissue_radius ? PixelClass::Tissue
                                : (d < cfg.paraffin_radius ? PixelClass::Paraffin : PixelClass::Slide));
    }
  }
  return gt;
}

namespace {

SynthCore gen_core_cached(const SynthConfig& cfg, const Cache& cache, int patient_id, int core_id,
                          CoreType type, Subtype subtype, const PatientEffects& effects) {
  const std::size_t cls = class_index(type, subtype);
  std::mt19937_64 rng = derived_rng(cfg.seed, static_cast<std::uint32_t>(patient_id),
                                    static_cast<std::uint32_t>(type), 0x636f7265u);
  SynthCore out;
  HyperCube& cube = out.cube;
  cube.rows = cfg.rows;
  cube.cols = cfg.cols;
  cube.axis = cache.axis;
  cube.core_id = core_id;
  cube.patient_id = patient_id;
  cube.core_type = type;
  cube.subtype = subtype;
  const std::size_t n = cache.axis.size();
  cube.intensities.resize(cube.pixels() * n);
  out.ground_truth = core_geometry(cfg.rows, cfg.cols, cfg);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> spike_pos(900.0, 1440.0);
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    const auto pc = static_cast<PixelClass>(out.ground_truth[p]);
    const SpectrumRole role = pc == PixelClass::Tissue     ? SpectrumRole::Tissue
                              : pc == PixelClass::Paraffin ? SpectrumRole::Paraffin
                                                           : SpectrumRole::Slide;
    GeneratedSpectrum g = gen_with_cache(cfg, cache, role, cls, rng, &effects);
    auto& y = g.spectrum.intensities;
    if (role == SpectrumRole::Tissue && cfg.spike_fraction > 0 && unit(rng) < cfg.spike_fraction) {
      const double mx = *std::max_element(y.begin(), y.end());
      const double centre = spike_pos(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = cache.axis[i] - centre;
        y[i] += cfg.spike_factor * mx * std::exp(-d * d / 8.0);
      }
      out.spiked_pixels.push_back(p);
    }
    std::transform(y.begin(), y.end(), cube.intensities.begin() + static_cast<std::ptrdiff_t>(p * n),
                   [](double v) { return static_cast<float>(v); });
  }
  return out;
}

}  // namespace

SynthCore gen_core(const SynthConfig& cfg, int patient_id, int core_id, CoreType type,
                   Subtype subtype, const PatientEffects& effects) {
  cfg.validate();
  return gen_core_cached(cfg, make_cache(cfg), patient_id, core_id, type, subtype, effects);
}

HyperCube gen_environment(const SynthConfig& cfg) {
  cfg.validate();
  const Cache cache = make_cache(cfg);
  std::mt19937_64 rng = derived_rng(cfg.seed, 0xffffffffu, 0, 0x656e7600u);
  HyperCube cube;
  cube.rows = cfg.rows;
  cube.cols = cfg.cols;
  cube.axis = cache.axis;
  cube.core_id = -1;
  cube.patient_id = -1;
  const std::size_t n = cache.axis.size();
  cube.intensities.resize(cube.pixels() * n);
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    const auto g = gen_with_cache(cfg, cache, SpectrumRole::H2O, 0, rng, nullptr);
    std::transform(g.spectrum.intensities.begin(), g.spectrum.intensities.end(),
                   cube.intensities.begin() + static_cast<std::ptrdiff_t>(p * n),
                   [](double v) { return static_cast<float>(v); });
  }
  return cube;
}

SynthPanel gen_panel(const SynthConfig& cfg) {
  cfg.validate();
  const Cache cache = make_cache(cfg);
  SynthPanel panel;
  int pid = 0;
  for (int s = 0; s < kNumSubtypes; ++s) {
    for (int k = 0; k < cfg.patients_per_subtype[static_cast<std::size_t>(s)]; ++k) {
      ++pid;
      const auto subtype = static_cast<Subtype>(s);
      std::mt19937_64 prng = derived_rng(cfg.seed, static_cast<std::uint32_t>(pid), 0, 0x70617400u);
      const PatientEffects effects = draw_patient_effects(cfg, prng);
      SynthPatient rec{pid, subtype, panel.cores.size(), panel.cores.size() + 1};
      panel.cores.push_back(gen_core_cached(cfg, cache, pid, 2 * pid, CoreType::CA, subtype, effects));
      panel.cores.push_back(
          gen_core_cached(cfg, cache, pid, 2 * pid + 1, CoreType::AT, Subtype::None, effects));
      panel.patients.push_back(rec);
    }
  }
  panel.environment = gen_environment(cfg);
  return panel;
}

}  // namespace carenet
