#include "carenet/chemometrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>

#include "carenet/error.hpp"
#include "carenet/stats.hpp"

namespace carenet {

namespace {
constexpr double kMinComponentVariance = 1e-12;
constexpr double kMinReferenceCoefficient = 1e-6;
}  // namespace

Eigen::VectorXd PcaModel::explained_ratio() const {
  if (total_variance <= 0.0) return Eigen::VectorXd::Zero(variances.size());
  return variances / total_variance;
}

PcaModel pca_fit(const RowMatrix& data, PcaSelector selector) {
  const Eigen::Index n = data.rows();
  const Eigen::Index p = data.cols();
  if (n < 2) throw InvalidArgument("PCA needs at least 2 rows");
  if (!data.allFinite()) throw InvalidArgument("PCA input contains non-finite values");
  if (selector.kind == PcaSelector::Kind::FixedCount &&
      selector.count > static_cast<std::size_t>(std::min(n, p))) {
    throw InvalidArgument("PCA: requested " + std::to_string(selector.count) +
                          " components from " + std::to_string(n) + " x " + std::to_string(p) +
                          " data");
  }

  PcaModel m;
  m.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centred = data.rowwise() - m.mean.transpose();
  m.total_variance = centred.squaredNorm() / static_cast<double>(n - 1);

  // Eigen-decomposition of the smaller Gram matrix; much cheaper than an SVD
  // of the data for the tall or wide blocks seen here.
  const bool wide = n < p;
  const Eigen::Index g = std::min(n, p);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(g, g);
  if (wide) {
    gram.selfadjointView<Eigen::Lower>().rankUpdate(centred);
  } else {
    gram.selfadjointView<Eigen::Lower>().rankUpdate(centred.transpose());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram.selfadjointView<Eigen::Lower>());
  if (eig.info() != Eigen::Success) throw NumericalError("PCA eigen-decomposition failed");
  const Eigen::VectorXd lam = eig.eigenvalues().reverse().cwiseMax(0.0);
  const Eigen::MatrixXd vecs = eig.eigenvectors().rowwise().reverse();
  const Eigen::VectorXd all_var = lam / static_cast<double>(n - 1);

  const double rank_tol = (lam.size() > 0 ? lam(0) : 0.0) * static_cast<double>(std::max(n, p)) *
                          std::numeric_limits<double>::epsilon() * 16.0;
  m.rank = 0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) > rank_tol && lam(i) > 0.0) ++m.rank;
  }

  std::size_t keep = 0;
  if (selector.kind == PcaSelector::Kind::FixedCount) {
    keep = selector.count;
  } else if (m.total_variance > 0.0) {
    double cum = 0.0;
    for (std::size_t i = 0; i < m.rank; ++i) {
      cum += all_var(static_cast<Eigen::Index>(i)) / m.total_variance;
      keep = i + 1;
      if (cum >= selector.threshold - 1e-12) break;
    }
  }

  const auto k = static_cast<Eigen::Index>(keep);
  if (!wide) {
    m.loadings = vecs.leftCols(k).transpose();
  } else if (keep <= m.rank) {
    m.loadings = (centred.transpose() * vecs.leftCols(k)).transpose();
    for (Eigen::Index r = 0; r < k; ++r) m.loadings.row(r) /= std::sqrt(lam(r));
  } else {
    // Directions past the rank are arbitrary; take them from an SVD.
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
    m.loadings = svd.matrixV().leftCols(k).transpose();
  }
  m.variances = all_var.head(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    Eigen::Index arg = 0;
    m.loadings.row(r).cwiseAbs().maxCoeff(&arg);
    if (m.loadings(r, arg) < 0.0) m.loadings.row(r) *= -1.0;
  }
  return m;
}

ProjectionStats scores_and_residuals(const PcaModel& model, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != model.mean.size()) {
    throw InvalidArgument("spectrum length does not match PCA model");
  }
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::VectorXd c = xv - model.mean;
  ProjectionStats st;
  st.scores = model.loadings * c;
  for (Eigen::Index i = 0; i < st.scores.size(); ++i) {
    const double lam = model.variances(i);
    if (lam < kMinComponentVariance) {
      ++st.excluded_components;
      continue;
    }
    st.t2 += st.scores(i) * st.scores(i) / lam;
  }
  const Eigen::VectorXd resid = c - model.loadings.transpose() * st.scores;
  st.q = resid.squaredNorm();
  return st;
}

std::size_t OutlierReport::rejected() const {
  return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), std::uint8_t{0}));
}

OutlierResult remove_outliers(const RowMatrix& data, std::size_t n_pcs, double confidence) {
  const auto n = static_cast<std::size_t>(data.rows());
  if (n <= n_pcs) {
    throw InvalidArgument("outlier removal needs more than " + std::to_string(n_pcs) +
                          " spectra, got " + std::to_string(n));
  }
  bool identical = true;
  for (Eigen::Index i = 1; i < data.rows() && identical; ++i) {
    identical = (data.row(i).array() == data.row(0).array()).all();
  }
  if (identical) throw DegenerateInput("outlier removal: all spectra are identical");

  OutlierResult r;
  const auto max_components = static_cast<std::size_t>(std::min(data.rows(), data.cols()));
  r.model = pca_fit(data, PcaSelector::fixed(std::min(n_pcs, max_components)));
  if (r.model.total_variance <= 0.0 || r.model.rank == 0) {
    throw DegenerateInput("outlier removal: data has no variance");
  }
  const auto keep = static_cast<Eigen::Index>(std::min(n_pcs, r.model.rank));
  r.model.loadings = RowMatrix(r.model.loadings.topRows(keep));
  r.model.variances = Eigen::VectorXd(r.model.variances.head(keep));

  OutlierReport& rep = r.report;
  rep.components = r.model.components();
  rep.t2.resize(n);
  rep.q.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = data.row(static_cast<Eigen::Index>(i));
    const ProjectionStats st =
        scores_and_residuals(r.model, {row.data(), static_cast<std::size_t>(row.size())});
    rep.t2[i] = st.t2;
    rep.q[i] = st.q;
  }
  rep.t2_threshold = quantile(rep.t2, confidence);
  rep.q_threshold = quantile(rep.q, confidence);
  rep.kept.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rep.kept[i] = (rep.t2[i] > rep.t2_threshold || rep.q[i] > rep.q_threshold) ? 0 : 1;
    if (rep.kept[i]) r.kept_indices.push_back(i);
  }
  if (r.kept_indices.empty()) throw DegenerateInput("outlier removal rejected every spectrum");
  r.kept.resize(static_cast<Eigen::Index>(r.kept_indices.size()), data.cols());
  for (std::size_t j = 0; j < r.kept_indices.size(); ++j) {
    r.kept.row(static_cast<Eigen::Index>(j)) = data.row(static_cast<Eigen::Index>(r.kept_indices[j]));
  }
  return r;
}

std::vector<std::uint8_t> apply_outlier_thresholds(const PcaModel& model, const RowMatrix& data,
                                                   double t2_threshold, double q_threshold) {
  std::vector<std::uint8_t> kept(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const auto row = data.row(i);
    const ProjectionStats st =
        scores_and_residuals(model, {row.data(), static_cast<std::size_t>(row.size())});
    kept[static_cast<std::size_t>(i)] = (st.t2 > t2_threshold || st.q > q_threshold) ? 0 : 1;
  }
  return kept;
}

void write_outlier_report_csv(const OutlierReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  out << "# t2_threshold=" << report.t2_threshold << " q_threshold=" << report.q_threshold
      << " components=" << report.components << "\n";
  out << "spectrum_index,T2,Q,kept\n";
  for (std::size_t i = 0; i < report.t2.size(); ++i) {
    out << i << ',' << report.t2[i] << ',' << report.q[i] << ',' << int{report.kept[i]} << '\n';
  }
}

Eigen::MatrixXd baseline_basis(const WavenumberAxis& axis, int order) {
  if (order < 0) throw InvalidArgument("baseline order must be non-negative");
  const auto n = static_cast<Eigen::Index>(axis.size());
  Eigen::MatrixXd b(n, order + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Descending axis: first point maps to +1, last to -1.
    const double s = 1.0 - 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    double pw = 1.0;
    for (int j = 0; j <= order; ++j) {
      b(i, j) = pw;
      pw *= s;
    }
  }
  return b;
}

EmscModel::EmscModel(WavenumberAxis axis, RowMatrix design, std::size_t n_baseline,
                     std::size_t n_paraffin, std::size_t n_h2o)
    : axis_(std::move(axis)),
      design_(std::move(design)),
      qr_(design_),
      n_baseline_(n_baseline),
      n_paraffin_(n_paraffin),
      n_h2o_(n_h2o) {
  if (!design_.allFinite()) throw NumericalError("EMSC design matrix is not finite");
  if (static_cast<std::size_t>(design_.cols()) != 1 + n_baseline_ + n_paraffin_ + n_h2o_) {
    throw InvalidArgument("EMSC column layout does not match design matrix");
  }
}

Eigen::VectorXd EmscModel::solve(std::span<const double> x) const {
  if (static_cast<Eigen::Index>(x.size()) != design_.rows()) {
    throw InvalidArgument("spectrum length does not match EMSC model axis");
  }
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), design_.rows());
  return qr_.solve(xv);
}

namespace {

// Masked mean + masked PCA loadings for one interferent, as columns.
Eigen::MatrixXd interferent_columns(const RowMatrix& spectra, const WavenumberAxis& axis,
                                    Band band, const EmscOptions& opts, const char* what) {
  if (spectra.rows() == 0) {
    throw InvalidArgument(std::string("EMSC: empty ") + what + " spectra set");
  }
  if (static_cast<std::size_t>(spectra.cols()) != axis.size()) {
    throw InvalidArgument(std::string("EMSC: ") + what + " spectra are not on the model axis");
  }
  const auto [first, last] = axis.band_indices(band.high_wn, band.low_wn);
  Eigen::VectorXd mean = spectra.colwise().mean().transpose();
  RowMatrix loadings(0, spectra.cols());
  if (spectra.rows() >= 2) {
    PcaModel pca = pca_fit(spectra, PcaSelector::variance(opts.variance_threshold));
    const auto k = std::min<Eigen::Index>(pca.loadings.rows(),
                                          static_cast<Eigen::Index>(opts.max_interferent_components));
    loadings = pca.loadings.topRows(k);
  }
  Eigen::MatrixXd cols(spectra.cols(), 1 + loadings.rows());
  cols.col(0) = mean;
  for (Eigen::Index j = 0; j < loadings.rows(); ++j) cols.col(1 + j) = loadings.row(j).transpose();
  for (Eigen::Index i = 0; i < cols.rows(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (ui < first || ui > last) cols.row(i).setZero();
  }
  return cols;
}

}  // namespace

EmscModel emsc_build_model(std::span<const double> tissue_mean, const RowMatrix& paraffin,
                           const RowMatrix& h2o, const WavenumberAxis& axis,
                           const EmscOptions& opts) {
  if (tissue_mean.size() != axis.size()) {
    throw InvalidArgument("EMSC: reference spectrum is not on the model axis");
  }
  const Eigen::MatrixXd base = baseline_basis(axis, opts.baseline_order);
  const Eigen::MatrixXd par = interferent_columns(paraffin, axis, opts.paraffin_band, opts, "paraffin");
  const Eigen::MatrixXd wat = interferent_columns(h2o, axis, opts.h2o_band, opts, "H2O");

  const auto n = static_cast<Eigen::Index>(axis.size());
  RowMatrix d(n, 1 + base.cols() + par.cols() + wat.cols());
  d.col(0) = Eigen::Map<const Eigen::VectorXd>(tissue_mean.data(), n);
  d.middleCols(1, base.cols()) = base;
  d.middleCols(1 + base.cols(), par.cols()) = par;
  d.middleCols(1 + base.cols() + par.cols(), wat.cols()) = wat;
  return EmscModel(axis, std::move(d), static_cast<std::size_t>(base.cols()),
                   static_cast<std::size_t>(par.cols()), static_cast<std::size_t>(wat.cols()));
}

EmscResult emsc_correct(std::span<const double> spectrum, const EmscModel& model) {
  EmscResult r;
  r.coefficients = model.solve(spectrum);
  if (!r.coefficients.allFinite()) throw NumericalError("EMSC coefficients are not finite");
  const double b = r.coefficients(0);
  if (std::abs(b) < kMinReferenceCoefficient) {
    throw DegenerateInput("EMSC: reference coefficient " + std::to_string(b) +
                          " too small, spectrum is not tissue-like");
  }
  const Eigen::MatrixXd& d = model.design();
  const auto n = d.rows();
  const Eigen::Map<const Eigen::VectorXd> x(spectrum.data(), n);
  const Eigen::VectorXd fit = d * r.coefficients;
  r.residual_norm = (x - fit).norm();
  // Everything except the reference column is removed, then the scale.
  const Eigen::VectorXd nuisance = d.rightCols(d.cols() - 1) * r.coefficients.tail(d.cols() - 1);
  const Eigen::VectorXd corrected = (x - nuisance) / b;
  r.corrected.assign(corrected.data(), corrected.data() + n);
  return r;
}

}  // namespace carenet
