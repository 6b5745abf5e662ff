#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "carenet/model.hpp"
#include "carenet/spectral.hpp"

namespace carenet {

struct Heatmap1D {
  std::vector<double> values;
  int cls = 0;
  WavenumberAxis axis;
  std::string provenance;
  /// Set when the class average was constant and could not be normalized.
  bool degenerate = false;
};

/// Linear resampling to n points with both endpoints kept in place.
std::vector<double> upsample_linear(std::span<const double> in, std::size_t n);

/// Raw (unnormalized, non-negative) importance for each spectrum of x
/// (n, points, 1) towards its target class. The score is the logit; for the
/// binary head class 0 uses the negated logit. Runs in batches.
std::vector<std::vector<double>> gradcam_batch(CarenetModel& model, const nn::Tensor<float>& x,
                                               const std::vector<int>& targets, std::size_t batch = 64);

std::vector<double> gradcam_spectrum(CarenetModel& model, std::span<const float> spectrum, int target);

/// Mean of the maps, min-max normalized. A constant mean comes back all
/// zero with `degenerate` set. Throws InvalidArgument when maps is empty.
Heatmap1D class_average(const std::vector<std::vector<double>>& maps, int cls, const WavenumberAxis& axis);

/// One averaged heatmap per class from maps grouped by true class.
std::vector<Heatmap1D> class_averages(const std::vector<std::vector<double>>& maps,
                                      const std::vector<int>& classes, int n_classes,
                                      const WavenumberAxis& axis);

struct BandInterval {
  double high_wn = 0.0;
  double low_wn = 0.0;
  double peak = 0.0;
};

/// Maximal runs with value >= threshold.
std::vector<BandInterval> top_bands(std::span<const double> heatmap, const WavenumberAxis& axis,
                                    double threshold);

/// Share of the mass of the top `fraction` of points that lies within
/// +-half_width of `centre`.
double top_mass_near(std::span<const double> heatmap, const WavenumberAxis& axis, double centre,
                     double half_width, double fraction = 0.1);

/// wavenumber,importance
void write_heatmap_csv(const Heatmap1D& h, const std::filesystem::path& path);
/// Line plot per heatmap with shaded regions above `threshold`.
void write_heatmap_svg(const std::vector<Heatmap1D>& maps, const std::vector<std::string>& names,
                       double threshold, const std::filesystem::path& path);

}  // namespace carenet
