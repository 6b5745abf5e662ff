#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <span>
#include <vector>

#include "carenet/hypercube.hpp"
#include "carenet/linalg.hpp"

namespace carenet {

struct KMeansResult {
  std::vector<int> assignments;
  RowMatrix centroids;
  int iterations = 0;
  /// Within-cluster sum of squares after every assignment step.
  std::vector<double> wcss_history;
};

/// Lloyd's algorithm with k-means++ seeding. Deterministic for a fixed seed.
/// Throws DegenerateInput when there are fewer than k distinct points.
KMeansResult kmeans(const RowMatrix& points, int k, std::uint64_t seed, int max_iter = 300,
                    double tol = 1e-6);

double within_cluster_ss(const RowMatrix& points, std::span<const int> assignments,
                         const RowMatrix& centroids);

/// Swap labels 0/1 when cluster 0 has the larger mean area, so the material
/// of interest always ends up as cluster 1. Points with include[i] == 0
/// (e.g. zeroed tissue pixels) do not contribute to the means; a cluster with
/// no contributing points has mean area 0. Ties keep the current labels.
std::vector<int> order_clusters_by_area(std::vector<int> assignments,
                                        std::span<const double> band_areas,
                                        std::span<const std::uint8_t> include = {});

enum class MaskRole { Tissue, Paraffin };

struct PixelMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  MaskRole role = MaskRole::Tissue;
  std::vector<std::uint8_t> bits;

  PixelMask() = default;
  PixelMask(std::size_t r, std::size_t c, MaskRole role_, bool value = false)
      : rows(r), cols(c), role(role_), bits(r * c, value ? 1 : 0) {}

  bool operator[](std::size_t i) const { return bits[i] != 0; }
  std::size_t count() const;
  double fraction() const;
};

struct ClusteringOptions {
  Band tissue_band{1700.0, 1500.0};
  Band paraffin_band{1480.0, 1450.0};
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-6;
  /// Selected material must cover at least this fraction of the cube.
  double plausibility_floor = 0.005;
  /// Selected cluster's mean band area must be this many times the other
  /// cluster's mean area (non-zeroed pixels only).
  double min_area_contrast = 1.5;
  /// Selected cluster's mean band absorbance must reach this fraction of the
  /// cube signal level (99th percentile of per-pixel maxima).
  double min_signal_fraction = 0.1;
};

struct Selection {
  PixelMask mask;
  /// Material judged absent or below the plausibility floor.
  bool flagged = false;
  std::string reason;
};

Selection select_tissue(const HyperCube& cube, const ClusteringOptions& opts = {});
Selection select_paraffin(const HyperCube& cube, const PixelMask& tissue,
                          const ClusteringOptions& opts = {});

/// P5 greyscale export: tissue 255, paraffin 128, everything else 0.
void write_mask_pgm(const std::filesystem::path& path, const PixelMask& tissue,
                    const PixelMask& paraffin);

}  // namespace carenet
