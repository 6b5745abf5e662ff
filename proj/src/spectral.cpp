#include "carenet/spectral.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "carenet/error.hpp"

namespace carenet {

namespace {
// Slack on the half-spacing inclusion rule so grid points that sit exactly on
// a band edge survive floating-point round-off.
constexpr double kEdgeSlack = 1e-9;
}  // namespace

WavenumberAxis build_axis(double start_wn, double end_wn, std::size_t n_points) {
  if (!(start_wn > end_wn)) {
    throw InvalidArgument("wavenumber axis must descend: start " + std::to_string(start_wn) +
                          " <= end " + std::to_string(end_wn));
  }
  if (n_points < 2) throw InvalidArgument("wavenumber axis needs at least 2 points");
  if (!std::isfinite(start_wn) || !std::isfinite(end_wn)) {
    throw InvalidArgument("wavenumber axis bounds must be finite");
  }
  WavenumberAxis a;
  a.start_ = start_wn;
  a.end_ = end_wn;
  a.n_ = n_points;
  return a;
}

std::vector<double> WavenumberAxis::values() const {
  std::vector<double> v(n_);
  for (std::size_t i = 0; i < n_; ++i) v[i] = (*this)[i];
  return v;
}

std::pair<std::size_t, std::size_t> WavenumberAxis::band_indices(double high, double low) const {
  if (!(high > low)) throw InvalidArgument("band must have high_wn > low_wn");
  const double sp = spacing();
  const double half = 0.5 * sp * (1.0 + kEdgeSlack);
  if (high > start_ + half || low < end_ - half) {
    throw InvalidArgument("band " + std::to_string(high) + "-" + std::to_string(low) +
                          " lies outside axis " + std::to_string(start_) + "-" +
                          std::to_string(end_));
  }
  // Index of the first point <= high + half, last point >= low - half.
  const double fi = std::ceil((start_ - (high + half)) / sp);
  const double li = std::floor((start_ - (low - half)) / sp);
  const auto first = static_cast<std::size_t>(std::max(0.0, fi));
  const auto last = static_cast<std::size_t>(std::min(static_cast<double>(n_ - 1), li));
  if (last < first) throw InvalidArgument("band contains no grid points");
  return {first, last};
}

WavenumberAxis WavenumberAxis::sub_axis(std::size_t first, std::size_t last) const {
  if (last >= n_ || last <= first) throw InvalidArgument("sub-axis needs at least 2 points");
  return build_axis((*this)[first], (*this)[last], last - first + 1);
}

bool WavenumberAxis::matches(const WavenumberAxis& other, double rel_tol) const {
  if (n_ != other.n_) return false;
  const double tol = rel_tol * spacing();
  return std::abs(start_ - other.start_) <= tol && std::abs(end_ - other.end_) <= tol;
}

void validate(const Spectrum& s) {
  if (s.intensities.size() != s.axis.size()) {
    throw InvalidArgument("spectrum has " + std::to_string(s.intensities.size()) +
                          " values but axis has " + std::to_string(s.axis.size()));
  }
  for (double v : s.intensities) {
    if (!std::isfinite(v)) throw InvalidArgument("spectrum contains non-finite values");
  }
}

Spectrum truncate(const Spectrum& s, Band band) {
  validate(s);
  const auto [first, last] = s.axis.band_indices(band.high_wn, band.low_wn);
  Spectrum out;
  out.axis = s.axis.sub_axis(first, last);
  out.intensities.assign(s.intensities.begin() + static_cast<std::ptrdiff_t>(first),
                         s.intensities.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  return out;
}

double trapezoid(std::span<const double> y, double spacing) {
  if (y.size() < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 1; i + 1 < y.size(); ++i) sum += y[i];
  sum += 0.5 * (y.front() + y.back());
  return sum * std::abs(spacing);
}

double integrate_band(const Spectrum& s, Band band) {
  const Spectrum t = truncate(s, band);
  return trapezoid(t.intensities, t.axis.spacing());
}

SavitzkyGolay::SavitzkyGolay(std::size_t window, std::size_t poly_order)
    : window_(window), order_(poly_order) {
  if (window % 2 == 0) throw InvalidArgument("Savitzky-Golay window must be odd");
  if (window <= poly_order) throw InvalidArgument("Savitzky-Golay window must exceed order");
  const auto w = static_cast<Eigen::Index>(window);
  const auto p = static_cast<Eigen::Index>(poly_order) + 1;
  const double half = static_cast<double>(window / 2);
  // Vandermonde on centred offsets; hat matrix V (V^T V)^-1 V^T maps window
  // samples to fitted values at every offset.
  Eigen::MatrixXd v(w, p);
  for (Eigen::Index i = 0; i < w; ++i) {
    const double t = static_cast<double>(i) - half;
    double pw = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      v(i, j) = pw;
      pw *= t;
    }
  }
  const Eigen::MatrixXd pinv = v.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(w, w));
  const Eigen::MatrixXd hat = v * pinv;
  weights_.resize(window * window);
  for (Eigen::Index r = 0; r < w; ++r)
    for (Eigen::Index c = 0; c < w; ++c) weights_[static_cast<std::size_t>(r * w + c)] = hat(r, c);
}

std::vector<double> SavitzkyGolay::apply(std::span<const double> y) const {
  const std::size_t n = y.size();
  if (n < window_) {
    throw InvalidArgument("spectrum length " + std::to_string(n) +
                          " shorter than Savitzky-Golay window " + std::to_string(window_));
  }
  const std::size_t h = window_ / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = std::clamp(i, h, n - 1 - h) - h;
    const double* row = &weights_[(i - s) * window_];
    double acc = 0.0;
    for (std::size_t k = 0; k < window_; ++k) acc += row[k] * y[s + k];
    out[i] = acc;
  }
  return out;
}

void SavitzkyGolay::apply_inplace(std::span<double> y) const {
  auto out = apply(y);
  std::copy(out.begin(), out.end(), y.begin());
}

Spectrum savitzky_golay(const Spectrum& s, std::size_t window, std::size_t poly_order) {
  validate(s);
  SavitzkyGolay sg(window, poly_order);
  return Spectrum{s.axis, sg.apply(s.intensities)};
}

void minmax_normalize_inplace(std::span<double> y) {
  if (y.empty()) throw DegenerateInput("cannot normalize an empty spectrum");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double mn = *lo;
  const double mx = *hi;
  if (!(mx > mn)) throw DegenerateInput("constant spectrum cannot be min-max normalized");
  const double range = mx - mn;
  for (double& v : y) v = (v - mn) / range;
}

Spectrum minmax_normalize(const Spectrum& s) {
  validate(s);
  Spectrum out = s;
  minmax_normalize_inplace(out.intensities);
  return out;
}

}  // namespace carenet
