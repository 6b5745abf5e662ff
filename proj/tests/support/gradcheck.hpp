#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "carenet/model.hpp"
#include "carenet/nn/layers.hpp"
#include "carenet/nn/loss.hpp"
#include "carenet/spectral.hpp"
#include "carenet/synthgen.hpp"

namespace carenet::testing {

inline constexpr double kFdStep = 1e-6;
// Denominator floor: central-difference round-off is about 1e-11 here, so
// entries with gradients below ~1e-6 are compared in absolute terms.
inline constexpr double kRelFloor = 1e-6;
// One-sided slopes of a smooth loss agree to O(h); a larger gap means the
// step crossed a ReLU kink and the central difference is meaningless there.
inline constexpr double kKinkGap = 1e-3;

inline bool crosses_kink(double up, double mid, double down) {
  const double fwd = (up - mid) / kFdStep, bwd = (mid - down) / kFdStep;
  return std::abs(fwd - bwd) > kKinkGap * std::max(std::abs(fwd) + std::abs(bwd), kRelFloor);
}

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), kRelFloor);
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t entries = 0;
  std::string worst;  // "<tensor>[i] analytic vs numeric" of the largest error
  std::size_t kinks = 0;  // probes skipped because a ReLU switched inside the step

  void add(double analytic, double numeric, const std::string& where = "") {
    const double e = rel_error(analytic, numeric);
    if (e > max_rel || entries == 0) {
      max_rel = std::max(max_rel, e);
      worst = where + " " + std::to_string(analytic) + " vs " + std::to_string(numeric);
    }
    ++entries;
  }
};

inline nn::Tensor<double> random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                        double lo = -1.0, double hi = 1.0) {
  nn::Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Indices to probe: everything for small tensors, a random sample otherwise.
inline std::vector<std::size_t> probe_indices(std::size_t n, std::size_t max_probes, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n > max_probes) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_probes);
  }
  return idx;
}

/// Central differences of L = sum(r * layer(x)) against backward() for the
/// input and every parameter.
inline GradCheck check_layer(nn::Layer<double>& layer, nn::Tensor<double> x, std::mt19937_64& rng,
                             std::size_t max_probes = 40) {
  const auto y0 = layer.forward(x);
  const auto r = random_tensor(y0.shape(), rng);
  const auto objective = [&](const nn::Tensor<double>& in) {
    const auto y = layer.forward(in);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
  };
  std::vector<nn::Parameter<double>*> params;
  layer.collect_parameters(params);
  for (auto* p : params) p->grad.fill(0.0);
  layer.forward(x);
  const auto dx = layer.backward(r);
  std::vector<nn::Tensor<double>> dparams;
  for (auto* p : params) dparams.push_back(p->grad);

  GradCheck out;
  for (std::size_t i : probe_indices(x.size(), max_probes, rng)) {
    const double keep = x[i];
    x[i] = keep + kFdStep;
    const double up = objective(x);
    x[i] = keep - kFdStep;
    const double down = objective(x);
    x[i] = keep;
    out.add(dx[i], (up - down) / (2 * kFdStep));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k]->value;
    for (std::size_t i : probe_indices(w.size(), max_probes, rng)) {
      const double keep = w[i];
      w[i] = keep + kFdStep;
      const double up = objective(x);
      w[i] = keep - kFdStep;
      const double down = objective(x);
      w[i] = keep;
      out.add(dparams[k][i], (up - down) / (2 * kFdStep));
    }
  }
  return out;
}

/// Loss gradient against central differences of the loss in the
/// probabilities.
inline GradCheck check_loss(const std::function<double(const nn::Tensor<double>&)>& loss,
                            const nn::Tensor<double>& grad, nn::Tensor<double> probs) {
  GradCheck out;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double keep = probs[i];
    probs[i] = keep + kFdStep;
    const double up = loss(probs);
    probs[i] = keep - kFdStep;
    const double down = loss(probs);
    probs[i] = keep;
    out.add(grad[i], (up - down) / (2 * kFdStep));
  }
  return out;
}

/// Min-max normalized generator tissue spectra on the 467-point
/// biofingerprint grid, (n, 467, 1). Random noise inputs would saturate the
/// output activation and put the loss into its clamp.
inline nn::Tensor<double> spectra_batch(std::size_t n, std::mt19937_64& rng) {
  const SynthConfig cfg;
  nn::Tensor<double> x({n, 467, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const bool ca = i % 2 == 1;
    const auto g = gen_spectrum(cfg, SpectrumRole::Tissue, ca ? CoreType::CA : CoreType::AT,
                                ca ? static_cast<Subtype>(i / 2 % 4) : Subtype::None, rng);
    const auto t = minmax_normalize(truncate(g.spectrum, {1800.0, 900.0}));
    for (std::size_t j = 0; j < 467; ++j) x[i * 467 + j] = t.intensities[j];
  }
  return x;
}

/// Fresh models have zero biases, so a unit fed only by dead ReLUs sits
/// exactly on a kink and central differences straddle it. Small random
/// biases move every unit to a differentiable point.
template <typename T>
void jitter_biases(nn::Network<T>& net, std::mt19937_64& rng, double scale = 0.05) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto* p : net.parameters())
    if (p->name == "bias")
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(u(rng));
}

/// Whole-model check in double precision: the fused logit gradient
/// back-propagated from the logit layer against central differences of the
/// head's loss, over the input and a sample of every parameter tensor.
inline GradCheck check_model(CarenetModelT<double>& model, const nn::Tensor<double>& x,
                             const nn::Tensor<double>& targets, std::mt19937_64& rng,
                             std::size_t probes_per_tensor = 6) {
  const bool binary = model.head() == HeadKind::Type;
  const auto loss = [&](const nn::Tensor<double>& in) {
    const auto p = model.forward(in);
    return binary ? nn::bce_loss(p, targets) : nn::cce_loss(p, targets);
  };
  auto& net = model.network();
  net.zero_grad();
  const auto probs = model.forward(x);
  const auto dx = net.backward_range(nn::logit_grad(probs, targets), model.logit_layer());
  auto params = net.parameters();
  std::vector<nn::Tensor<double>> grads;
  for (auto* p : params) grads.push_back(p->grad);
  const double base = loss(x);

  GradCheck out;
  nn::Tensor<double> xin = x;
  for (std::size_t i : probe_indices(xin.size(), probes_per_tensor * 2, rng)) {
    const double keep = xin[i];
    xin[i] = keep + kFdStep;
    const double up = loss(xin);
    xin[i] = keep - kFdStep;
    const double down = loss(xin);
    xin[i] = keep;
    if (crosses_kink(up, base, down)) {
      ++out.kinks;
      continue;
    }
    out.add(dx[i], (up - down) / (2 * kFdStep), "input[" + std::to_string(i) + "]");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k]->value;
    for (std::size_t i : probe_indices(w.size(), probes_per_tensor, rng)) {
      const double keep = w[i];
      w[i] = keep + kFdStep;
      const double up = loss(x);
      w[i] = keep - kFdStep;
      const double down = loss(x);
      w[i] = keep;
      if (crosses_kink(up, base, down)) {
        ++out.kinks;
        continue;
      }
      out.add(grads[k][i], (up - down) / (2 * kFdStep),
              "param" + std::to_string(k) + "." + params[k]->name + "[" + std::to_string(i) + "]");
    }
  }
  return out;
}

}  // namespace carenet::testing
