#include "carenet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "carenet/error.hpp"

namespace carenet {

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double mean(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("mean of empty set");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace carenet
