#pragma once

#include <span>
#include <vector>

namespace carenet {

/// Linear-interpolation quantile (the "type 7" definition), q in [0, 1].
double quantile(std::vector<double> values, double q);

double mean(std::span<const double> v);

/// Population standard deviation.
double stddev(std::span<const double> v);

}  // namespace carenet
