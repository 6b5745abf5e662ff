#include "carenet/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "carenet/error.hpp"
#include "carenet/stats.hpp"

namespace carenet {

namespace {

std::size_t count_distinct_up_to(const RowMatrix& points, std::size_t limit) {
  std::vector<Eigen::Index> reps;
  for (Eigen::Index i = 0; i < points.rows() && reps.size() < limit; ++i) {
    const bool seen = std::any_of(reps.begin(), reps.end(), [&](Eigen::Index r) {
      return (points.row(r).array() == points.row(i).array()).all();
    });
    if (!seen) reps.push_back(i);
  }
  return reps.size();
}

RowMatrix seed_plus_plus(const RowMatrix& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  RowMatrix centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centroids.row(0) = points.row(pick(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    d2[static_cast<std::size_t>(i)] = (points.row(i) - centroids.row(0)).squaredNorm();
  }
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::uniform_real_distribution<double> u(0.0, total);
    const double target = u(rng);
    double acc = 0.0;
    Eigen::Index chosen = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = d2[static_cast<std::size_t>(i)];
      if (w <= 0.0) continue;
      chosen = i;
      acc += w;
      if (acc >= target) break;
    }
    centroids.row(c) = points.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& d = d2[static_cast<std::size_t>(i)];
      d = std::min(d, (points.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

// Nearest centroid per point (ties to the lowest index); returns the WCSS.
double assign(const RowMatrix& points, const RowMatrix& centroids, std::vector<int>& out,
              std::vector<double>& dist) {
  double wcss = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    out[static_cast<std::size_t>(i)] = best;
    dist[static_cast<std::size_t>(i)] = best_d;
    wcss += best_d;
  }
  return wcss;
}

RowMatrix cluster_means(const RowMatrix& points, const std::vector<int>& a, int k,
                        std::vector<Eigen::Index>& counts) {
  RowMatrix sums = RowMatrix::Zero(k, points.cols());
  counts.assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int c = a[static_cast<std::size_t>(i)];
    sums.row(c) += points.row(i);
    ++counts[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) {
      sums.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
  }
  return sums;
}

}  // namespace

KMeansResult kmeans(const RowMatrix& points, int k, std::uint64_t seed, int max_iter, double tol) {
  if (k < 1) throw InvalidArgument("kmeans requires k >= 1");
  if (points.rows() == 0) throw DegenerateInput("kmeans on an empty point set");
  if (!points.allFinite()) throw InvalidArgument("kmeans input contains non-finite values");
  if (count_distinct_up_to(points, static_cast<std::size_t>(k)) < static_cast<std::size_t>(k)) {
    throw DegenerateInput("kmeans: fewer than k=" + std::to_string(k) + " distinct points");
  }

  std::mt19937_64 rng(seed);
  KMeansResult r;
  r.centroids = seed_plus_plus(points, k, rng);
  const auto n = static_cast<std::size_t>(points.rows());
  r.assignments.assign(n, 0);
  std::vector<double> dist(n);
  r.wcss_history.push_back(assign(points, r.centroids, r.assignments, dist));

  std::vector<Eigen::Index> counts;
  for (int iter = 1; iter <= max_iter; ++iter) {
    RowMatrix next = cluster_means(points, r.assignments, k, counts);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      // Empty cluster: take over the point farthest from its centroid,
      // drawn from a cluster that can spare one.
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(r.assignments[i])] > 1 && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      const int donor = r.assignments[far];
      r.assignments[far] = c;
      dist[far] = 0.0;
      --counts[static_cast<std::size_t>(donor)];
      counts[static_cast<std::size_t>(c)] = 1;
      next = cluster_means(points, r.assignments, k, counts);
    }
    const double moved = (next - r.centroids).rowwise().norm().maxCoeff();
    r.centroids = std::move(next);
    r.wcss_history.push_back(assign(points, r.centroids, r.assignments, dist));
    r.iterations = iter;
    if (moved < tol) break;
  }
  return r;
}

double within_cluster_ss(const RowMatrix& points, std::span<const int> assignments,
                         const RowMatrix& centroids) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    s += (points.row(i) - centroids.row(assignments[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return s;
}

namespace {

struct ClusterAreas {
  double mean0 = 0.0;
  double mean1 = 0.0;
  std::size_t n0 = 0;
  std::size_t n1 = 0;
};

ClusterAreas cluster_areas(std::span<const int> a, std::span<const double> areas,
                           std::span<const std::uint8_t> include) {
  ClusterAreas r;
  double s0 = 0.0;
  double s1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!include.empty() && include[i] == 0) continue;
    if (a[i] == 0) {
      s0 += areas[i];
      ++r.n0;
    } else if (a[i] == 1) {
      s1 += areas[i];
      ++r.n1;
    }
  }
  if (r.n0 > 0) r.mean0 = s0 / static_cast<double>(r.n0);
  if (r.n1 > 0) r.mean1 = s1 / static_cast<double>(r.n1);
  return r;
}

}  // namespace

std::vector<int> order_clusters_by_area(std::vector<int> assignments,
                                        std::span<const double> band_areas,
                                        std::span<const std::uint8_t> include) {
  if (band_areas.size() != assignments.size()) {
    throw InvalidArgument("order_clusters_by_area: areas and assignments differ in length");
  }
  if (!include.empty() && include.size() != assignments.size()) {
    throw InvalidArgument("order_clusters_by_area: include mask has the wrong length");
  }
  const ClusterAreas ca = cluster_areas(assignments, band_areas, include);
  if (ca.mean0 > ca.mean1) {
    for (int& v : assignments) {
      if (v == 0 || v == 1) v = 1 - v;
    }
  }
  return assignments;
}

std::size_t PixelMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

double PixelMask::fraction() const {
  return bits.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits.size());
}

namespace {

struct BandPoints {
  RowMatrix points;
  std::vector<double> areas;
  double width = 0.0;
};

BandPoints band_points(const HyperCube& cube, Band band) {
  const auto [first, last] = cube.axis.band_indices(band.high_wn, band.low_wn);
  const auto nb = static_cast<Eigen::Index>(last - first + 1);
  BandPoints bp;
  bp.points.resize(static_cast<Eigen::Index>(cube.pixels()), nb);
  bp.areas.resize(cube.pixels());
  const double sp = cube.axis.spacing();
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    const auto px = cube.pixel(p);
    for (Eigen::Index j = 0; j < nb; ++j) {
      bp.points(static_cast<Eigen::Index>(p), j) = px[first + static_cast<std::size_t>(j)];
    }
    bp.areas[p] = trapezoid({bp.points.row(static_cast<Eigen::Index>(p)).data(),
                             static_cast<std::size_t>(nb)},
                            sp);
  }
  bp.width = static_cast<double>(nb - 1) * sp;
  return bp;
}

double cube_signal_level(const HyperCube& cube) {
  std::vector<double> maxima(cube.pixels());
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    const auto px = cube.pixel(p);
    double m = 0.0;
    for (float v : px) m = std::max(m, static_cast<double>(std::abs(v)));
    maxima[p] = m;
  }
  return quantile(std::move(maxima), 0.99);
}

// Checks that cluster 1 is a real material rather than a split of one
// population; clears the mask and records the reason otherwise.
void check_plausibility(Selection& sel, const ClusterAreas& ca, double band_width,
                        double signal_level, const ClusteringOptions& opts,
                        const char* material) {
  std::string why;
  if (sel.mask.count() == 0) {
    why = "empty cluster";
  } else if (ca.mean0 > 0.0 && ca.mean1 < opts.min_area_contrast * ca.mean0) {
    why = "band area contrast " + std::to_string(ca.mean1 / ca.mean0) + " below " +
          std::to_string(opts.min_area_contrast);
  } else if (ca.mean1 <= 0.0 ||
             ca.mean1 / band_width < opts.min_signal_fraction * signal_level) {
    why = "band absorbance below " + std::to_string(opts.min_signal_fraction) +
          " of cube signal level";
  }
  if (!why.empty()) {
    std::fill(sel.mask.bits.begin(), sel.mask.bits.end(), std::uint8_t{0});
    sel.flagged = true;
    sel.reason = std::string(material) + " not found: " + why;
    return;
  }
  if (sel.mask.fraction() < opts.plausibility_floor) {
    sel.flagged = true;
    sel.reason = std::string(material) + " fraction " + std::to_string(sel.mask.fraction()) +
                 " below plausibility floor";
  }
}

}  // namespace

Selection select_tissue(const HyperCube& cube, const ClusteringOptions& opts) {
  cube.validate();
  BandPoints bp = band_points(cube, opts.tissue_band);
  KMeansResult km = kmeans(bp.points, 2, opts.seed, opts.max_iter, opts.tol);
  const auto a = order_clusters_by_area(std::move(km.assignments), bp.areas);

  Selection sel{PixelMask(cube.rows, cube.cols, MaskRole::Tissue), false, {}};
  for (std::size_t p = 0; p < a.size(); ++p) sel.mask.bits[p] = a[p] == 1 ? 1 : 0;
  check_plausibility(sel, cluster_areas(a, bp.areas, {}), bp.width, cube_signal_level(cube), opts,
                     "tissue");
  return sel;
}

Selection select_paraffin(const HyperCube& cube, const PixelMask& tissue,
                          const ClusteringOptions& opts) {
  cube.validate();
  if (tissue.rows != cube.rows || tissue.cols != cube.cols) {
    throw InvalidArgument("tissue mask shape does not match cube");
  }
  BandPoints bp = band_points(cube, opts.paraffin_band);
  Selection sel{PixelMask(cube.rows, cube.cols, MaskRole::Paraffin), false, {}};
  if (tissue.count() == tissue.bits.size()) {
    sel.flagged = true;
    sel.reason = "paraffin not found: every pixel is tissue";
    return sel;
  }

  std::vector<std::uint8_t> inc(cube.pixels());
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    inc[p] = tissue[p] ? 0 : 1;
    if (tissue[p]) {
      bp.points.row(static_cast<Eigen::Index>(p)).setZero();
      bp.areas[p] = 0.0;
    }
  }

  KMeansResult km = kmeans(bp.points, 2, opts.seed, opts.max_iter, opts.tol);
  const auto a = order_clusters_by_area(std::move(km.assignments), bp.areas, inc);
  for (std::size_t p = 0; p < a.size(); ++p) sel.mask.bits[p] = (a[p] == 1 && !tissue[p]) ? 1 : 0;
  check_plausibility(sel, cluster_areas(a, bp.areas, inc), bp.width, cube_signal_level(cube), opts,
                     "paraffin");
  return sel;
}

void write_mask_pgm(const std::filesystem::path& path, const PixelMask& tissue,
                    const PixelMask& paraffin) {
  if (tissue.rows != paraffin.rows || tissue.cols != paraffin.cols) {
    throw InvalidArgument("mask shapes differ");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << "P5\n" << tissue.cols << ' ' << tissue.rows << "\n255\n";
  std::vector<char> buf(tissue.bits.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    buf[i] = static_cast<char>(tissue[i] ? 255 : (paraffin[i] ? 128 : 0));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace carenet
