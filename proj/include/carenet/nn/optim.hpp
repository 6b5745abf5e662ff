#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "carenet/nn/tensor.hpp"

namespace carenet::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moments are kept per parameter in the parameter's
/// own precision.
template <typename T>
class Adam {
 public:
  explicit Adam(std::vector<Parameter<T>*> params, AdamOptions opts = {})
      : params_(std::move(params)), opts_(opts) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  double lr() const { return opts_.lr; }
  void set_lr(double lr) { opts_.lr = lr; }
  std::uint64_t steps() const { return t_; }
  const AdamOptions& options() const { return opts_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(opts_.beta1);
    const T b2 = static_cast<T>(opts_.beta2);
    const T step_size = static_cast<T>(opts_.lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(opts_.eps);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter<T>& p = *params_[k];
      if (p.grad.shape() != p.value.shape() || m_[k].shape() != p.value.shape()) {
        throw InvalidArgument("adam: parameter/gradient shape mismatch for " + p.name);
      }
      T* w = p.value.data();
      const T* g = p.grad.data();
      T* m = m_[k].data();
      T* v = v_[k].data();
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.fill(T(0));
  }

 private:
  std::vector<Parameter<T>*> params_;
  AdamOptions opts_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::uint64_t t_ = 0;
};

struct PlateauOptions {
  double initial_lr = 1e-3;
  std::size_t patience = 4;
  double factor = 0.5;
  double min_lr = 1e-4;
  double min_delta = 1e-8;
};

/// Reduce-on-plateau: a loss below best - min_delta is an improvement;
/// once more than `patience` calls pass without one, lr is scaled by
/// `factor` (floored at min_lr) and the wait counter restarts.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(PlateauOptions opts = {}) : opts_(opts), lr_(opts.initial_lr) {}

  double step(double monitored_loss) {
    if (monitored_loss < best_ - opts_.min_delta) {
      best_ = monitored_loss;
      wait_ = 0;
    } else if (++wait_ > opts_.patience) {
      lr_ = std::max(lr_ * opts_.factor, opts_.min_lr);
      wait_ = 0;
    }
    return lr_;
  }

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t wait() const { return wait_; }

 private:
  PlateauOptions opts_;
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t wait_ = 0;
};

}  // namespace carenet::nn
