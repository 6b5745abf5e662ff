#include "carenet/gradcam.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "carenet/error.hpp"
#include "carenet/nn/fpenv.hpp"

namespace carenet {

std::vector<double> upsample_linear(std::span<const double> in, std::size_t n) {
  if (in.empty() || n == 0) throw InvalidArgument("upsample_linear: empty input or output");
  std::vector<double> out(n);
  if (in.size() == 1 || n == 1) {
    std::fill(out.begin(), out.end(), in[0]);
    return out;
  }
  const double scale = static_cast<double>(in.size() - 1) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * scale;
    const auto j = std::min(static_cast<std::size_t>(pos), in.size() - 2);
    const double t = pos - static_cast<double>(j);
    out[i] = in[j] * (1.0 - t) + in[j + 1] * t;
  }
  out.back() = in.back();
  return out;
}

std::vector<std::vector<double>> gradcam_batch(CarenetModel& model, const nn::Tensor<float>& x,
                                               const std::vector<int>& targets, std::size_t batch) {
  const std::size_t n = x.dim(0);
  const std::size_t points = x.dim(1);
  if (targets.size() != n) throw InvalidArgument("gradcam: one target class per spectrum is required");
  if (points != model.config().input_length) {
    throw InvalidArgument("gradcam: spectrum length " + std::to_string(points) + ", model expects " +
                          std::to_string(model.config().input_length));
  }
  const int n_classes = model.head() == HeadKind::Type ? 2 : static_cast<int>(model.config().outputs());
  for (int t : targets) {
    if (t < 0 || t >= n_classes) throw InvalidArgument("gradcam: class index " + std::to_string(t) + " out of range");
  }
  if (batch == 0) batch = 1;
  nn::ScopedFlushDenormals ftz;
  auto& net = model.network();
  const std::size_t k = model.config().outputs();
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t b = 0; b < n; b += batch) {
    const std::size_t e = std::min(n, b + batch);
    std::vector<std::size_t> shape = x.shape();
    shape[0] = e - b;
    nn::Tensor<float> xb(shape);
    std::copy_n(x.data() + b * points, (e - b) * points, xb.data());
    const auto logits = model.logits(xb);
    if (!logits.all_finite()) throw NumericalError("gradcam: model produced non-finite logits");

    // Each score depends only on its own sample, so one backward pass gives
    // every per-sample gradient.
    nn::Tensor<float> g({e - b, k});
    g.fill(0.0f);
    for (std::size_t i = b; i < e; ++i) {
      if (model.head() == HeadKind::Type) {
        g[i - b] = targets[i] == 1 ? 1.0f : -1.0f;
      } else {
        g[(i - b) * k + static_cast<std::size_t>(targets[i])] = 1.0f;
      }
    }
    const auto grad = net.backward_range(g, model.logit_layer(), model.feature_layer() + 1);
    const auto& act = net.activation(model.feature_layer());
    const std::size_t len = act.dim(1);
    const std::size_t ch = act.dim(2);
    for (std::size_t i = 0; i < e - b; ++i) {
      const float* a = act.data() + i * len * ch;
      const float* gr = grad.data() + i * len * ch;
      std::vector<double> alpha(ch, 0.0);
      for (std::size_t l = 0; l < len; ++l) {
        for (std::size_t c = 0; c < ch; ++c) alpha[c] += gr[l * ch + c];
      }
      for (double& v : alpha) v /= static_cast<double>(len);
      std::vector<double> cam(len, 0.0);
      for (std::size_t l = 0; l < len; ++l) {
        double s = 0.0;
        for (std::size_t c = 0; c < ch; ++c) s += alpha[c] * a[l * ch + c];
        cam[l] = std::max(s, 0.0);
      }
      out.push_back(upsample_linear(cam, points));
    }
  }
  net.zero_grad();
  return out;
}

std::vector<double> gradcam_spectrum(CarenetModel& model, std::span<const float> spectrum, int target) {
  nn::Tensor<float> x({1, spectrum.size(), 1});
  std::copy(spectrum.begin(), spectrum.end(), x.data());
  return gradcam_batch(model, x, {target}, 1).front();
}

Heatmap1D class_average(const std::vector<std::vector<double>>& maps, int cls, const WavenumberAxis& axis) {
  if (maps.empty()) throw InvalidArgument("class_average: no heatmaps for class " + std::to_string(cls));
  Heatmap1D h;
  h.cls = cls;
  h.axis = axis;
  h.values.assign(maps.front().size(), 0.0);
  for (const auto& m : maps) {
    if (m.size() != h.values.size()) throw InvalidArgument("class_average: heatmap lengths differ");
    for (std::size_t i = 0; i < m.size(); ++i) h.values[i] += m[i];
  }
  for (double& v : h.values) v /= static_cast<double>(maps.size());
  const auto [lo, hi] = std::minmax_element(h.values.begin(), h.values.end());
  const double mn = *lo;
  const double range = *hi - mn;
  if (!(range > 0.0)) {
    std::fill(h.values.begin(), h.values.end(), 0.0);
    h.degenerate = true;
    return h;
  }
  for (double& v : h.values) v = (v - mn) / range;
  return h;
}

std::vector<Heatmap1D> class_averages(const std::vector<std::vector<double>>& maps,
                                      const std::vector<int>& classes, int n_classes,
                                      const WavenumberAxis& axis) {
  if (maps.size() != classes.size()) throw InvalidArgument("class_averages: one class per heatmap is required");
  std::vector<std::vector<std::vector<double>>> groups(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= n_classes) throw InvalidArgument("class_averages: class out of range");
    groups[static_cast<std::size_t>(classes[i])].push_back(maps[i]);
  }
  std::vector<Heatmap1D> out;
  for (int c = 0; c < n_classes; ++c) out.push_back(class_average(groups[static_cast<std::size_t>(c)], c, axis));
  return out;
}

std::vector<BandInterval> top_bands(std::span<const double> heatmap, const WavenumberAxis& axis,
                                    double threshold) {
  if (heatmap.size() != axis.size()) throw InvalidArgument("top_bands: heatmap is not on the axis");
  std::vector<BandInterval> out;
  std::size_t i = 0;
  while (i < heatmap.size()) {
    if (heatmap[i] < threshold) {
      ++i;
      continue;
    }
    std::size_t j = i;
    double peak = heatmap[i];
    while (j + 1 < heatmap.size() && heatmap[j + 1] >= threshold) peak = std::max(peak, heatmap[++j]);
    out.push_back({std::max(axis[i], axis[j]), std::min(axis[i], axis[j]), peak});
    i = j + 1;
  }
  return out;
}

double top_mass_near(std::span<const double> heatmap, const WavenumberAxis& axis, double centre,
                     double half_width, double fraction) {
  if (heatmap.size() != axis.size()) throw InvalidArgument("top_mass_near: heatmap is not on the axis");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("top_mass_near: fraction must be in (0, 1]");
  std::vector<std::size_t> order(heatmap.size());
  std::iota(order.begin(), order.end(), 0);
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(heatmap.size()))));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return heatmap[a] > heatmap[b]; });
  double total = 0.0;
  double near = 0.0;
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t i = order[r];
    total += heatmap[i];
    if (std::abs(axis[i] - centre) <= half_width) near += heatmap[i];
  }
  return total > 0.0 ? near / total : 0.0;
}

namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

}  // namespace

void write_heatmap_csv(const Heatmap1D& h, const std::filesystem::path& path) {
  if (h.values.size() != h.axis.size()) throw InvalidArgument("heatmap is not on its axis");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << "wavenumber,importance\n";
  for (std::size_t i = 0; i < h.values.size(); ++i) out << num(h.axis[i]) << ',' << num(h.values[i]) << '\n';
}

void write_heatmap_svg(const std::vector<Heatmap1D>& maps, const std::vector<std::string>& names,
                       double threshold, const std::filesystem::path& path) {
  if (maps.size() != names.size()) throw InvalidArgument("write_heatmap_svg: one name per heatmap");
  constexpr double kWidth = 800.0;
  constexpr double kRow = 140.0;
  constexpr double kMargin = 40.0;
  const double height = kMargin * 2 + kRow * static_cast<double>(maps.size());
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t m = 0; m < maps.size(); ++m) {
    const Heatmap1D& h = maps[m];
    const double top = kMargin + kRow * static_cast<double>(m);
    const double plot_h = kRow - 30.0;
    const double plot_w = kWidth - 2 * kMargin;
    const auto xpos = [&](double wn) {
      return kMargin + (h.axis.start() - wn) / (h.axis.start() - h.axis.end()) * plot_w;
    };
    const auto ypos = [&](double v) { return top + plot_h * (1.0 - v); };
    for (const auto& band : top_bands(h.values, h.axis, threshold)) {
      s << "<rect x=\"" << xpos(band.high_wn) << "\" y=\"" << top << "\" width=\""
        << std::max(1.0, xpos(band.low_wn) - xpos(band.high_wn)) << "\" height=\"" << plot_h
        << "\" fill=\"#9ecae1\" opacity=\"0.6\"/>\n";
    }
    s << "<polyline fill=\"none\" stroke=\"#08306b\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < h.values.size(); ++i) s << xpos(h.axis[i]) << ',' << ypos(h.values[i]) << ' ';
    s << "\"/>\n";
    s << "<text x=\"" << kMargin << "\" y=\"" << top - 5 << "\" font-size=\"12\">" << names[m]
      << (h.degenerate ? " (constant)" : "") << "</text>\n";
    s << "<text x=\"" << kMargin << "\" y=\"" << top + plot_h + 14 << "\" font-size=\"10\">"
      << num(h.axis.start()) << "</text>\n";
    s << "<text x=\"" << kWidth - kMargin - 20 << "\" y=\"" << top + plot_h + 14 << "\" font-size=\"10\">"
      << num(h.axis.end()) << "</text>\n";
  }
  s << "</svg>\n";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << s.str();
}

}  // namespace carenet
