#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carenet/nn/tensor.hpp"

namespace carenet::nn {

enum class LayerKind { Conv1d, Dense, Relu, Sigmoid, Softmax, GlobalAvgPool, ResidualAdd };

std::string to_string(LayerKind k);

/// Flat description of one layer; the architecture descriptor stored in
/// checkpoints is a list of these.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

nlohmann::json to_json(const LayerSpec& s);

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  /// Caches what backward() needs.
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  /// Accumulates parameter gradients and returns the input gradient.
  /// Throws InvalidArgument when forward() has not run.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual void collect_parameters(std::vector<Parameter<T>*>& /*out*/) {}
  virtual void append_specs(std::vector<LayerSpec>& out) const = 0;
  virtual std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const = 0;

 protected:
  void require_forward(const char* name) const {
    if (!has_forward_) throw InvalidArgument(std::string(name) + ": backward called before forward");
  }
  bool has_forward_ = false;
};

/// "Same" zero padding: output length ceil(L / stride); the left pad is
/// half the total (rounded down).
std::size_t same_output_length(std::size_t length, std::size_t stride);
std::size_t same_pad_left(std::size_t length, std::size_t kernel, std::size_t stride);

template <typename T>
class Conv1d final : public Layer<T> {
 public:
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride = 1);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void append_specs(std::vector<LayerSpec>& out) const override;
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override;

  Parameter<T>& weight() { return weight_; }  // (kernel, in, out)
  Parameter<T>& bias() { return bias_; }
  std::size_t fan_in() const { return in_ * kernel_; }

 private:
  std::size_t in_;
  std::size_t out_;
  std::size_t kernel_;
  std::size_t stride_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  AlignedVector<T> padded_;
  std::size_t batch_ = 0;
  std::size_t length_ = 0;
  std::size_t out_len_ = 0;
  std::size_t pad_left_ = 0;
  std::size_t rows_ = 0;
  std::size_t padded_len_ = 0;
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t in_features, std::size_t out_features);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void append_specs(std::vector<LayerSpec>& out) const override;
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override;

  Parameter<T>& weight() { return weight_; }  // (out, in)
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t in_;
  std::size_t out_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void append_specs(std::vector<LayerSpec>& out) const override;
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
    return in;
  }

 private:
  Tensor<T> output_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void append_specs(std::vector<LayerSpec>& out) const override;
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
    return in;
  }

 private:
  Tensor<T> output_;
};

/// Softmax over the feature axis of a (batch, features) tensor.
template <typename T>
class Softmax final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void append_specs(std::vector<LayerSpec>& out) const override;
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
    return in;
  }

 private:
  Tensor<T> output_;
};

/// (batch, length, channels) -> (batch, channels), mean over length.
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void append_specs(std::vector<LayerSpec>& out) const override;
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override;

 private:
  std::vector<std::size_t> in_shape_;
};

/// conv(k) -> ReLU -> conv(k), plus identity or 1x1 projection shortcut,
/// residual add, ReLU. Stride applies to the first conv and the projection.
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                std::size_t stride);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void append_specs(std::vector<LayerSpec>& out) const override;
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override;

  std::vector<Conv1d<T>*> convolutions();

 private:
  Conv1d<T> conv1_;
  Relu<T> relu1_;
  Conv1d<T> conv2_;
  std::unique_ptr<Conv1d<T>> projection_;
  Relu<T> relu_out_;
};

/// Adds two equally shaped tensors; exposed for completeness and tests.
template <typename T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b);

/// He-normal samples: N(0, 2 / fan_in).
template <typename T>
std::vector<T> he_normal(std::size_t fan_in, std::size_t count, std::mt19937_64& rng);
template <typename T>
std::vector<T> he_normal(std::size_t fan_in, std::size_t count, std::uint64_t seed);

/// Glorot-uniform samples: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
std::vector<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t count,
                              std::mt19937_64& rng);

}  // namespace carenet::nn
