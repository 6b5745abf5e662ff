#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace carenet {

/// Uniform, strictly descending wavenumber grid (cm^-1), FTIR convention.
class WavenumberAxis {
 public:
  WavenumberAxis() = default;

  double start() const { return start_; }
  double end() const { return end_; }
  std::size_t size() const { return n_; }
  double spacing() const { return (start_ - end_) / static_cast<double>(n_ - 1); }
  double operator[](std::size_t i) const {
    return start_ - static_cast<double>(i) * spacing();
  }
  std::vector<double> values() const;

  /// Index range [first, last] of grid points inside [low, high], where a
  /// boundary point is kept when it lies within half a spacing of the bound.
  /// Throws InvalidArgument when the band falls outside the axis.
  std::pair<std::size_t, std::size_t> band_indices(double high, double low) const;

  /// Axis restricted to grid indices [first, last].
  WavenumberAxis sub_axis(std::size_t first, std::size_t last) const;

  /// Grids agree point-for-point within `rel_tol` of the spacing.
  bool matches(const WavenumberAxis& other, double rel_tol = 1e-6) const;

  friend bool operator==(const WavenumberAxis&, const WavenumberAxis&) = default;

 private:
  friend WavenumberAxis build_axis(double, double, std::size_t);
  double start_ = 1.0;
  double end_ = 0.0;
  std::size_t n_ = 2;
};

WavenumberAxis build_axis(double start_wn, double end_wn, std::size_t n_points);

struct Band {
  double high_wn;
  double low_wn;
};

struct Spectrum {
  WavenumberAxis axis;
  std::vector<double> intensities;

  std::size_t size() const { return intensities.size(); }
};

/// Throws InvalidArgument unless intensities match the axis and are finite.
void validate(const Spectrum& s);

Spectrum truncate(const Spectrum& s, Band band);

/// Trapezoidal area over the band (absorbance * cm^-1), positive spacing.
double integrate_band(const Spectrum& s, Band band);

/// Trapezoid over a raw slice with the given positive spacing.
double trapezoid(std::span<const double> y, double spacing);

/// Precomputed Savitzky-Golay smoothing weights for one (window, order).
/// Row `t` (0..window-1) holds the weights that evaluate the local fit at
/// offset t inside a window; the centre row is the usual convolution kernel.
class SavitzkyGolay {
 public:
  SavitzkyGolay(std::size_t window, std::size_t poly_order);

  std::size_t window() const { return window_; }
  std::size_t poly_order() const { return order_; }

  /// Length-preserving smoothing; edges reuse the first/last full window.
  std::vector<double> apply(std::span<const double> y) const;
  void apply_inplace(std::span<double> y) const;

 private:
  std::size_t window_;
  std::size_t order_;
  std::vector<double> weights_;  // window x window, row-major
};

Spectrum savitzky_golay(const Spectrum& s, std::size_t window = 11, std::size_t poly_order = 2);

/// (x - min) / (max - min). Throws DegenerateInput on a constant spectrum.
Spectrum minmax_normalize(const Spectrum& s);
void minmax_normalize_inplace(std::span<double> y);

}  // namespace carenet
