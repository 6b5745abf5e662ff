#pragma once

#include <algorithm>
#include <cmath>

#include "carenet/nn/tensor.hpp"

namespace carenet::nn {

inline constexpr double kProbClamp = 1e-7;

namespace detail {

template <typename T>
T clamp_prob(T p) {
  return std::clamp(p, static_cast<T>(kProbClamp), static_cast<T>(1.0 - kProbClamp));
}

template <typename T>
void check_binary_targets(const Tensor<T>& probs, const Tensor<T>& targets) {
  if (probs.shape() != targets.shape() || probs.rank() != 2 || probs.dim(1) != 1) {
    throw InvalidArgument("bce: expected (batch, 1) probabilities and matching targets");
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] != T(0) && targets[i] != T(1)) throw InvalidArgument("bce: target outside {0, 1}");
  }
}

template <typename T>
void check_one_hot(const Tensor<T>& probs, const Tensor<T>& targets) {
  if (probs.shape() != targets.shape() || probs.rank() != 2) {
    throw InvalidArgument("cce: expected (batch, classes) probabilities and matching targets");
  }
  const std::size_t k = targets.dim(1);
  for (std::size_t b = 0; b < targets.dim(0); ++b) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T t = targets[b * k + j];
      if (t == T(1)) {
        ++ones;
      } else if (t != T(0)) {
        throw InvalidArgument("cce: target row is not one-hot");
      }
    }
    if (ones != 1) throw InvalidArgument("cce: target row is not one-hot");
  }
}

}  // namespace detail

/// Mean binary cross-entropy over the batch; probabilities clamped to
/// [1e-7, 1 - 1e-7].
template <typename T>
double bce_loss(const Tensor<T>& probs, const Tensor<T>& targets) {
  detail::check_binary_targets(probs, targets);
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = detail::clamp_prob(static_cast<double>(probs[i]));
    const double t = static_cast<double>(targets[i]);
    s -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return s / static_cast<double>(probs.dim(0));
}

/// d(bce)/dp; zero where the clamp is active.
template <typename T>
Tensor<T> bce_grad(const Tensor<T>& probs, const Tensor<T>& targets) {
  detail::check_binary_targets(probs, targets);
  Tensor<T> g(probs.shape());
  const T n = static_cast<T>(probs.dim(0));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const T p = probs[i];
    if (p != detail::clamp_prob(p)) continue;
    const T t = targets[i];
    g[i] = (-(t / p) + (T(1) - t) / (T(1) - p)) / n;
  }
  return g;
}

/// Mean categorical cross-entropy over the batch.
template <typename T>
double cce_loss(const Tensor<T>& probs, const Tensor<T>& targets) {
  detail::check_one_hot(probs, targets);
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (targets[i] == T(1)) s -= std::log(detail::clamp_prob(static_cast<double>(probs[i])));
  }
  return s / static_cast<double>(probs.dim(0));
}

template <typename T>
Tensor<T> cce_grad(const Tensor<T>& probs, const Tensor<T>& targets) {
  detail::check_one_hot(probs, targets);
  Tensor<T> g(probs.shape());
  const T n = static_cast<T>(probs.dim(0));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const T p = probs[i];
    if (targets[i] == T(1) && p == detail::clamp_prob(p)) g[i] = -T(1) / (p * n);
  }
  return g;
}

/// Gradient w.r.t. the logits for sigmoid+BCE and softmax+CCE alike:
/// (p - t) / batch.
template <typename T>
Tensor<T> logit_grad(const Tensor<T>& probs, const Tensor<T>& targets) {
  if (probs.shape() != targets.shape()) throw InvalidArgument("logit_grad: shape mismatch");
  Tensor<T> g(probs.shape());
  const T n = static_cast<T>(probs.dim(0));
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = (probs[i] - targets[i]) / n;
  return g;
}

}  // namespace carenet::nn
