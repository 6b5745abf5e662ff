#pragma once

#include <memory>
#include <vector>

#include "carenet/nn/layers.hpp"

namespace carenet::nn {

/// Sequential stack of layers. Every forward() caches the per-layer outputs
/// so callers can read intermediate activations and run partial backward
/// passes (Grad-CAM reads the last residual block this way).
template <typename T>
class Network {
 public:
  Network() = default;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

  Tensor<T> forward(const Tensor<T>& x) { return forward_until(x, layers_.size()); }

  /// Runs layers [0, end) and returns the output of layer end-1.
  Tensor<T> forward_until(const Tensor<T>& x, std::size_t end) {
    if (end > layers_.size()) throw InvalidArgument("forward_until: layer index out of range");
    outputs_.clear();
    Tensor<T> h = x;
    for (std::size_t i = 0; i < end; ++i) {
      h = layers_[i]->forward(h);
      outputs_.push_back(h);
    }
    forwarded_ = end;
    return h;
  }

  /// Output of layer i from the most recent forward pass.
  const Tensor<T>& activation(std::size_t i) const {
    if (i >= outputs_.size()) throw InvalidArgument("activation: layer has not run forward");
    return outputs_[i];
  }

  /// Back-propagates `grad` (gradient w.r.t. the output of layer `from`)
  /// down to layer `stop` inclusive; returns the gradient w.r.t. the input
  /// of layer `stop`.
  Tensor<T> backward_range(const Tensor<T>& grad, std::size_t from, std::size_t stop = 0) {
    if (from >= forwarded_ || stop > from) {
      throw InvalidArgument("backward called before forward for the requested layers");
    }
    Tensor<T> g = grad;
    for (std::size_t i = from + 1; i-- > stop;) g = layers_[i]->backward(g);
    return g;
  }

  Tensor<T> backward(const Tensor<T>& grad) {
    if (forwarded_ == 0) throw InvalidArgument("backward called before forward");
    return backward_range(grad, forwarded_ - 1, 0);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_) l->collect_parameters(out);
    return out;
  }

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) l->append_specs(out);
    return out;
  }

  std::vector<std::size_t> output_shape(std::vector<std::size_t> in) const {
    for (const auto& l : layers_) in = l->output_shape(in);
    return in;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->grad.fill(T(0));
  }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<Tensor<T>> outputs_;
  std::size_t forwarded_ = 0;
};

}  // namespace carenet::nn
