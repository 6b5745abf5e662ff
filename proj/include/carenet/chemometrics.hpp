#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "carenet/linalg.hpp"
#include "carenet/spectral.hpp"

namespace carenet {

/// How many principal components to keep.
struct PcaSelector {
  enum class Kind { FixedCount, VarianceThreshold };
  Kind kind = Kind::FixedCount;
  std::size_t count = 0;
  double threshold = 0.0;

  static PcaSelector fixed(std::size_t n) { return {Kind::FixedCount, n, 0.0}; }
  static PcaSelector variance(double t) { return {Kind::VarianceThreshold, 0, t}; }
};

struct PcaModel {
  Eigen::VectorXd mean;
  /// n_components x n_points, orthonormal rows. The largest-magnitude entry of
  /// every row is positive so fits are sign-stable.
  RowMatrix loadings;
  /// Per-component variance (squared singular value / (n - 1)), non-increasing.
  Eigen::VectorXd variances;
  double total_variance = 0.0;
  /// Numerical rank of the centred training data.
  std::size_t rank = 0;

  std::size_t components() const { return static_cast<std::size_t>(loadings.rows()); }
  Eigen::VectorXd explained_ratio() const;
};

PcaModel pca_fit(const RowMatrix& data, PcaSelector selector);

struct ProjectionStats {
  Eigen::VectorXd scores;
  double t2 = 0.0;
  double q = 0.0;
  /// Components left out of T^2 because their variance is below 1e-12.
  std::size_t excluded_components = 0;
};

ProjectionStats scores_and_residuals(const PcaModel& model, std::span<const double> x);

struct OutlierReport {
  std::vector<double> t2;
  std::vector<double> q;
  std::vector<std::uint8_t> kept;
  double t2_threshold = 0.0;
  double q_threshold = 0.0;
  std::size_t components = 0;

  std::size_t rejected() const;
};

struct OutlierResult {
  RowMatrix kept;
  std::vector<std::size_t> kept_indices;
  OutlierReport report;
  PcaModel model;
};

/// Single-pass Hotelling T^2 / Q-residual screen. Thresholds are the
/// empirical `confidence` quantiles of both statistics; a spectrum is
/// rejected when it exceeds either one.
OutlierResult remove_outliers(const RowMatrix& data, std::size_t n_pcs = 10,
                              double confidence = 0.95);

/// Re-screens `data` against a fitted model and fixed thresholds.
std::vector<std::uint8_t> apply_outlier_thresholds(const PcaModel& model, const RowMatrix& data,
                                                   double t2_threshold, double q_threshold);

void write_outlier_report_csv(const OutlierReport& report, const std::filesystem::path& path);

struct EmscOptions {
  int baseline_order = 4;
  Band paraffin_band{1500.0, 1350.0};
  Band h2o_band{1800.0, 1300.0};
  double variance_threshold = 0.99;
  /// Upper bound on interferent principal components per interferent.
  std::size_t max_interferent_components = 20;
};

struct EmscResult {
  std::vector<double> corrected;
  Eigen::VectorXd coefficients;
  double residual_norm = 0.0;

  double reference_coefficient() const { return coefficients(0); }
};

/// Design matrix columns: [reference | baseline (order+1) | paraffin mean,
/// paraffin PCs | H2O mean, H2O PCs]; interferent columns are zero outside
/// their bands.
class EmscModel {
 public:
  EmscModel(WavenumberAxis axis, RowMatrix design, std::size_t n_baseline,
            std::size_t n_paraffin, std::size_t n_h2o);

  const WavenumberAxis& axis() const { return axis_; }
  const Eigen::MatrixXd& design() const { return design_; }
  Eigen::VectorXd reference() const { return design_.col(0); }
  std::size_t baseline_columns() const { return n_baseline_; }
  std::size_t paraffin_columns() const { return n_paraffin_; }
  std::size_t h2o_columns() const { return n_h2o_; }
  std::size_t columns() const { return static_cast<std::size_t>(design_.cols()); }

  /// Least-squares coefficients for x.
  Eigen::VectorXd solve(std::span<const double> x) const;

 private:
  WavenumberAxis axis_;
  Eigen::MatrixXd design_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  std::size_t n_baseline_;
  std::size_t n_paraffin_;
  std::size_t n_h2o_;
};

/// Builds the model from the tissue reference spectrum and interferent
/// spectra (rows), all on `axis`. Interferent PCA is fitted on the full
/// spectra; mean and loadings are then zeroed outside their bands.
EmscModel emsc_build_model(std::span<const double> tissue_mean, const RowMatrix& paraffin,
                           const RowMatrix& h2o, const WavenumberAxis& axis,
                           const EmscOptions& opts = {});

/// Throws DegenerateInput when |reference coefficient| < 1e-6.
EmscResult emsc_correct(std::span<const double> spectrum, const EmscModel& model);

/// Polynomial baseline basis on the axis rescaled to [-1, 1]; n x (order+1).
Eigen::MatrixXd baseline_basis(const WavenumberAxis& axis, int order);

}  // namespace carenet
