#pragma once

#include <Eigen/Dense>

namespace carenet {

/// Observations are rows (one spectrum or one pixel per row).
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace carenet
