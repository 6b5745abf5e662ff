#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "carenet/hypercube.hpp"
#include "carenet/labels.hpp"
#include "carenet/spectral.hpp"

namespace carenet {

/// Classes indexed AT, LA, LB, HER2, TNBC.
inline constexpr std::size_t kNumSynthClasses = 5;
std::size_t class_index(CoreType type, Subtype subtype);

/// Gaussian absorption band. The amplitude for class c is
/// amplitude * modulation[c].
struct BandSpec {
  double center = 0.0;
  double width = 1.0;  // sigma, cm^-1
  double amplitude = 0.0;
  std::array<double, kNumSynthClasses> modulation{1.0, 1.0, 1.0, 1.0, 1.0};

  double amplitude_for(std::size_t cls) const { return amplitude * modulation[cls]; }
};

enum class SpectrumRole { Tissue, Paraffin, Slide, H2O };

struct SynthConfig {
  std::array<int, 4> patients_per_subtype{8, 8, 7, 7};
  std::size_t rows = 32;
  std::size_t cols = 32;
  /// Raw acquisition axis, 3950-900 cm^-1 at 900/466 spacing.
  double axis_start = 900.0 + 1579.0 * 900.0 / 466.0;
  double axis_end = 900.0;
  std::size_t axis_points = 1580;

  double noise_sigma = 0.002;
  /// Polynomial baseline coefficients (order 4, axis scaled to [-1, 1]) are
  /// drawn from U(-baseline_max, baseline_max) per coefficient.
  double baseline_max = 0.02;
  int baseline_order = 4;
  double scale_min = 0.8;
  double scale_max = 1.2;
  /// Multiplier on every class-dependent band; 0 makes all classes
  /// identically distributed.
  double class_separation = 1.0;
  /// Relative per-band amplitude jitter per patient and per pixel.
  double patient_jitter = 0.05;
  double pixel_jitter = 0.05;
  /// Paraffin embedded in tissue pixels, amplitude U(0, max).
  double tissue_paraffin_max = 0.3;
  /// Per-pattern water-vapour amplitude U(0, max) on sample pixels; the
  /// environment image uses env_h2o_max.
  double h2o_max = 0.02;
  double env_h2o_max = 0.1;
  /// Disc and ring radii as fractions of half the shorter image side.
  double tissue_radius = 0.6;
  double paraffin_radius = 0.85;
  /// Fraction of tissue pixels that receive a gross spike (amplitude
  /// spike_factor times the pixel maximum) between 1440 and 900 cm^-1.
  double spike_fraction = 0.0;
  double spike_factor = 10.0;
  /// When set, classes differ only by one band centred here: AT carries
  /// it at reduced and CA at increased amplitude.
  std::optional<Band> discriminative_band;
  std::uint64_t seed = 0;

  WavenumberAxis axis() const { return build_axis(axis_start, axis_end, axis_points); }
  int total_patients() const;
  /// Throws InvalidArgument on inconsistent ranges.
  void validate() const;
};

/// Bands of one role. Tissue bands include every class-dependent band
/// (zero modulation for classes that lack it).
std::vector<BandSpec> role_bands(const SynthConfig& cfg, SpectrumRole role);

/// The two fixed water-vapour line patterns, evaluated on `axis`.
std::array<std::vector<double>, 2> h2o_patterns(const WavenumberAxis& axis);

/// Per-patient, per-band multiplicative factors on the tissue bands.
struct PatientEffects {
  std::vector<double> band_factors;
};
PatientEffects draw_patient_effects(const SynthConfig& cfg, std::mt19937_64& rng);

struct GeneratedSpectrum {
  Spectrum spectrum;
  std::vector<double> baseline_coefficients;
  double scale = 1.0;
  double paraffin_amount = 0.0;
  std::array<double, 2> h2o_amounts{0.0, 0.0};
};

/// One pixel spectrum on cfg.axis(): scale * (class-modulated bands) +
/// embedded paraffin + water vapour + polynomial baseline + noise. Slide
/// pixels carry a tenth of the baseline and noise only.
GeneratedSpectrum gen_spectrum(const SynthConfig& cfg, SpectrumRole role, CoreType type,
                               Subtype subtype, std::mt19937_64& rng,
                               const PatientEffects* effects = nullptr);

/// Sum of Gaussians for the given bands and class.
std::vector<double> band_sum(const WavenumberAxis& axis, const std::vector<BandSpec>& bands,
                             std::size_t cls, const std::vector<double>* factors = nullptr);

struct SynthCore {
  HyperCube cube;
  std::vector<std::uint8_t> ground_truth;  // PixelClass per pixel
  std::vector<std::size_t> spiked_pixels;
};

struct SynthPatient {
  int patient_id = 0;
  Subtype subtype = Subtype::LA;
  std::size_t ca_core = 0;  // index into SynthPanel::cores
  std::size_t at_core = 0;
};

struct SynthPanel {
  std::vector<SynthCore> cores;
  std::vector<SynthPatient> patients;
  HyperCube environment;
};

/// Ground-truth geometry: tissue disc, paraffin ring, slide outside.
std::vector<std::uint8_t> core_geometry(std::size_t rows, std::size_t cols,
                                        const SynthConfig& cfg);

SynthCore gen_core(const SynthConfig& cfg, int patient_id, int core_id, CoreType type,
                   Subtype subtype, const PatientEffects& effects);

/// Clean-slide image with strong water-vapour variation.
HyperCube gen_environment(const SynthConfig& cfg);

/// Patients 1..N grouped by subtype; each has a CA and an AT core.
/// Every cube draws from its own generator seeded by (seed, patient, type).
SynthPanel gen_panel(const SynthConfig& cfg);

}  // namespace carenet
