#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "carenet/labels.hpp"
#include "carenet/spectral.hpp"

namespace carenet {

/// One imaged core: rows x cols pixels, each a spectrum on `axis`.
/// Intensities are pixel-major: pixel (r, c) occupies
/// [(r * cols + c) * n, (r * cols + c + 1) * n).
struct HyperCube {
  std::size_t rows = 0;
  std::size_t cols = 0;
  WavenumberAxis axis;
  std::vector<float> intensities;
  int core_id = 0;
  int patient_id = 0;
  CoreType core_type = CoreType::AT;
  Subtype subtype = Subtype::None;

  std::size_t pixels() const { return rows * cols; }
  std::span<const float> pixel(std::size_t idx) const {
    return {intensities.data() + idx * axis.size(), axis.size()};
  }
  std::span<float> pixel(std::size_t idx) {
    return {intensities.data() + idx * axis.size(), axis.size()};
  }

  /// Throws InvalidArgument when shape, axis, or labels disagree.
  void validate() const;
};

}  // namespace carenet
