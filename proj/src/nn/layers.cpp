#include "carenet/nn/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <sstream>

namespace carenet::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedView = Eigen::Map<const RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

void check_rank(const std::vector<std::size_t>& shape, std::size_t rank, const char* layer) {
  if (shape.size() != rank) {
    throw InvalidArgument(std::string(layer) + ": expected rank-" + std::to_string(rank) +
                          " input, got " + shape_string(shape));
  }
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv1d: return "conv1d";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
    case LayerKind::ResidualAdd: return "residual_add";
  }
  return "unknown";
}

nlohmann::json to_json(const LayerSpec& s) {
  nlohmann::json j{{"kind", to_string(s.kind)}};
  if (s.kind == LayerKind::Conv1d) {
    j["in"] = s.in_channels;
    j["out"] = s.out_channels;
    j["kernel"] = s.kernel;
    j["stride"] = s.stride;
    j["padding"] = "same_zero";
  } else if (s.kind == LayerKind::Dense) {
    j["in"] = s.in_channels;
    j["out"] = s.out_channels;
  }
  return j;
}

std::size_t same_output_length(std::size_t length, std::size_t stride) {
  return (length + stride - 1) / stride;
}

std::size_t same_pad_left(std::size_t length, std::size_t kernel, std::size_t stride) {
  const std::size_t out = same_output_length(length, stride);
  const std::size_t needed = (out - 1) * stride + kernel;
  return needed > length ? (needed - length) / 2 : 0;
}

// ---------------------------------------------------------------- Conv1d

template <typename T>
Conv1d<T>::Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  std::size_t stride)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      weight_("kernel", {kernel, in_channels, out_channels}),
      bias_("bias", {out_channels}) {
  if (kernel % 2 == 0) throw InvalidArgument("conv1d kernel size must be odd");
  if (stride < 1) throw InvalidArgument("conv1d stride must be >= 1");
  if (in_channels == 0 || out_channels == 0) throw InvalidArgument("conv1d needs channels");
}

template <typename T>
std::vector<std::size_t> Conv1d<T>::output_shape(const std::vector<std::size_t>& in) const {
  check_rank(in, 3, "conv1d");
  if (in[2] != in_) throw InvalidArgument("conv1d: channel mismatch, got " + shape_string(in));
  return {in[0], same_output_length(in[1], stride_), out_};
}

// Padded samples sit back to back, rows_ * stride positions each. Row r of
// the strided view is the receptive field of output r, so the batch is a
// single GEMM; rows past out_len_ in a sample are dropped.
template <typename T>
Tensor<T> Conv1d<T>::forward(const Tensor<T>& x) {
  const auto oshape = output_shape(x.shape());
  batch_ = x.dim(0);
  length_ = x.dim(1);
  out_len_ = oshape[1];
  pad_left_ = same_pad_left(length_, kernel_, stride_);
  const std::size_t needed = std::max((out_len_ - 1) * stride_ + kernel_, pad_left_ + length_);
  rows_ = (needed + stride_ - 1) / stride_;
  padded_len_ = rows_ * stride_;
  const std::size_t kc = kernel_ * in_;

  padded_.assign(batch_ * padded_len_ * in_ + kc, T(0));
  for (std::size_t b = 0; b < batch_; ++b) {
    std::copy_n(x.data() + b * length_ * in_, length_ * in_,
                padded_.data() + (b * padded_len_ + pad_left_) * in_);
  }

  const auto total_rows = static_cast<Eigen::Index>(batch_ * rows_);
  const StridedView<T> view(padded_.data(), total_rows, static_cast<Eigen::Index>(kc),
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(stride_ * in_)));
  const Eigen::Map<const RowMat<T>> w(weight_.value.data(), static_cast<Eigen::Index>(kc),
                                      static_cast<Eigen::Index>(out_));
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(bias_.value.data(),
                                                                   static_cast<Eigen::Index>(out_));
  Tensor<T> y(oshape);
  if (rows_ == out_len_) {
    Eigen::Map<RowMat<T>> ym(y.data(), total_rows, static_cast<Eigen::Index>(out_));
    ym.noalias() = view * w;
    ym.rowwise() += bias;
  } else {
    RowMat<T> full = view * w;
    full.rowwise() += bias;
    for (std::size_t b = 0; b < batch_; ++b) {
      std::copy_n(full.data() + b * rows_ * out_, out_len_ * out_, y.data() + b * out_len_ * out_);
    }
  }
  this->has_forward_ = true;
  return y;
}

template <typename T>
Tensor<T> Conv1d<T>::backward(const Tensor<T>& grad_out) {
  this->require_forward("conv1d");
  if (grad_out.shape() != std::vector<std::size_t>{batch_, out_len_, out_}) {
    throw InvalidArgument("conv1d backward: gradient shape " + shape_string(grad_out.shape()));
  }
  const std::size_t kc = kernel_ * in_;
  const auto total_rows = static_cast<Eigen::Index>(batch_ * rows_);

  RowMat<T> g;
  if (rows_ == out_len_) {
    g = Eigen::Map<const RowMat<T>>(grad_out.data(), total_rows, static_cast<Eigen::Index>(out_));
  } else {
    g = RowMat<T>::Zero(total_rows, static_cast<Eigen::Index>(out_));
    for (std::size_t b = 0; b < batch_; ++b) {
      std::copy_n(grad_out.data() + b * out_len_ * out_, out_len_ * out_,
                  g.data() + b * rows_ * out_);
    }
  }

  const StridedView<T> view(padded_.data(), total_rows, static_cast<Eigen::Index>(kc),
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(stride_ * in_)));
  Eigen::Map<RowMat<T>> dw(weight_.grad.data(), static_cast<Eigen::Index>(kc),
                           static_cast<Eigen::Index>(out_));
  dw.noalias() += view.transpose() * g;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad.data(),
                                                     static_cast<Eigen::Index>(out_));
  db += g.colwise().sum();

  const Eigen::Map<const RowMat<T>> w(weight_.value.data(), static_cast<Eigen::Index>(kc),
                                      static_cast<Eigen::Index>(out_));
  const RowMat<T> dview = g * w.transpose();  // total_rows x kc

  std::vector<T> dpad(padded_.size(), T(0));
  for (Eigen::Index r = 0; r < total_rows; ++r) {
    T* dst = dpad.data() + static_cast<std::size_t>(r) * stride_ * in_;
    const T* src = dview.data() + static_cast<std::size_t>(r) * kc;
    for (std::size_t j = 0; j < kc; ++j) dst[j] += src[j];
  }
  Tensor<T> dx({batch_, length_, in_});
  for (std::size_t b = 0; b < batch_; ++b) {
    std::copy_n(dpad.data() + (b * padded_len_ + pad_left_) * in_, length_ * in_,
                dx.data() + b * length_ * in_);
  }
  return dx;
}

template <typename T>
void Conv1d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
void Conv1d<T>::append_specs(std::vector<LayerSpec>& out) const {
  out.push_back({LayerKind::Conv1d, in_, out_, kernel_, stride_});
}

// ----------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(std::size_t in_features, std::size_t out_features)
    : in_(in_features),
      out_(out_features),
      weight_("weight", {out_features, in_features}),
      bias_("bias", {out_features}) {
  if (in_features == 0 || out_features == 0) throw InvalidArgument("dense layer needs features");
}

template <typename T>
std::vector<std::size_t> Dense<T>::output_shape(const std::vector<std::size_t>& in) const {
  check_rank(in, 2, "dense");
  if (in[1] != in_) throw InvalidArgument("dense: feature mismatch, got " + shape_string(in));
  return {in[0], out_};
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x) {
  const auto oshape = output_shape(x.shape());
  input_ = x;
  const auto b = static_cast<Eigen::Index>(x.dim(0));
  const Eigen::Map<const RowMat<T>> xm(x.data(), b, static_cast<Eigen::Index>(in_));
  const Eigen::Map<const RowMat<T>> w(weight_.value.data(), static_cast<Eigen::Index>(out_),
                                      static_cast<Eigen::Index>(in_));
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(bias_.value.data(),
                                                                   static_cast<Eigen::Index>(out_));
  Tensor<T> y(oshape);
  Eigen::Map<RowMat<T>> ym(y.data(), b, static_cast<Eigen::Index>(out_));
  ym.noalias() = xm * w.transpose();
  ym.rowwise() += bias;
  this->has_forward_ = true;
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& grad_out) {
  this->require_forward("dense");
  const auto b = static_cast<Eigen::Index>(input_.dim(0));
  if (grad_out.shape() != std::vector<std::size_t>{input_.dim(0), out_}) {
    throw InvalidArgument("dense backward: gradient shape " + shape_string(grad_out.shape()));
  }
  const Eigen::Map<const RowMat<T>> g(grad_out.data(), b, static_cast<Eigen::Index>(out_));
  const Eigen::Map<const RowMat<T>> xm(input_.data(), b, static_cast<Eigen::Index>(in_));
  const Eigen::Map<const RowMat<T>> w(weight_.value.data(), static_cast<Eigen::Index>(out_),
                                      static_cast<Eigen::Index>(in_));
  Eigen::Map<RowMat<T>> dw(weight_.grad.data(), static_cast<Eigen::Index>(out_),
                           static_cast<Eigen::Index>(in_));
  dw.noalias() += g.transpose() * xm;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad.data(),
                                                     static_cast<Eigen::Index>(out_));
  db += g.colwise().sum();
  Tensor<T> dx(input_.shape());
  Eigen::Map<RowMat<T>> dxm(dx.data(), b, static_cast<Eigen::Index>(in_));
  dxm.noalias() = g * w;
  return dx;
}

template <typename T>
void Dense<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
void Dense<T>::append_specs(std::vector<LayerSpec>& out) const {
  out.push_back({LayerKind::Dense, in_, out_, 0, 1});
}

// ----------------------------------------------------------- activations

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x) {
  output_ = x;
  for (T& v : output_.values()) v = v > T(0) ? v : T(0);
  this->has_forward_ = true;
  return output_;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_out) {
  this->require_forward("relu");
  if (grad_out.shape() != output_.shape()) throw InvalidArgument("relu backward: shape mismatch");
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(output_[i] > T(0))) dx[i] = T(0);
  }
  return dx;
}

template <typename T>
void Relu<T>::append_specs(std::vector<LayerSpec>& out) const {
  out.push_back({LayerKind::Relu});
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x) {
  output_ = x;
  for (T& v : output_.values()) {
    v = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  this->has_forward_ = true;
  return output_;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& grad_out) {
  this->require_forward("sigmoid");
  if (grad_out.shape() != output_.shape()) throw InvalidArgument("sigmoid backward: shape mismatch");
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= output_[i] * (T(1) - output_[i]);
  return dx;
}

template <typename T>
void Sigmoid<T>::append_specs(std::vector<LayerSpec>& out) const {
  out.push_back({LayerKind::Sigmoid});
}

template <typename T>
Tensor<T> Softmax<T>::forward(const Tensor<T>& x) {
  check_rank(x.shape(), 2, "softmax");
  output_ = x;
  const std::size_t k = x.dim(1);
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    T* row = output_.data() + b * k;
    const T mx = *std::max_element(row, row + k);
    T sum = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
  }
  this->has_forward_ = true;
  return output_;
}

template <typename T>
Tensor<T> Softmax<T>::backward(const Tensor<T>& grad_out) {
  this->require_forward("softmax");
  if (grad_out.shape() != output_.shape()) throw InvalidArgument("softmax backward: shape mismatch");
  const std::size_t k = output_.dim(1);
  Tensor<T> dx(output_.shape());
  for (std::size_t b = 0; b < output_.dim(0); ++b) {
    const T* p = output_.data() + b * k;
    const T* g = grad_out.data() + b * k;
    T dot = T(0);
    for (std::size_t j = 0; j < k; ++j) dot += p[j] * g[j];
    for (std::size_t j = 0; j < k; ++j) dx[b * k + j] = p[j] * (g[j] - dot);
  }
  return dx;
}

template <typename T>
void Softmax<T>::append_specs(std::vector<LayerSpec>& out) const {
  out.push_back({LayerKind::Softmax});
}

template <typename T>
std::vector<std::size_t> GlobalAvgPool<T>::output_shape(const std::vector<std::size_t>& in) const {
  check_rank(in, 3, "global_avg_pool");
  return {in[0], in[2]};
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
  Tensor<T> y(output_shape(x.shape()));
  in_shape_ = x.shape();
  const std::size_t len = x.dim(1);
  const std::size_t ch = x.dim(2);
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    const Eigen::Map<const RowMat<T>> xb(x.data() + b * len * ch, static_cast<Eigen::Index>(len),
                                         static_cast<Eigen::Index>(ch));
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> yb(y.data() + b * ch,
                                                       static_cast<Eigen::Index>(ch));
    yb = xb.colwise().sum() / static_cast<T>(len);
  }
  this->has_forward_ = true;
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  this->require_forward("global_avg_pool");
  if (grad_out.shape() != std::vector<std::size_t>{in_shape_[0], in_shape_[2]}) {
    throw InvalidArgument("global_avg_pool backward: shape mismatch");
  }
  Tensor<T> dx(in_shape_);
  const std::size_t len = in_shape_[1];
  const std::size_t ch = in_shape_[2];
  for (std::size_t b = 0; b < in_shape_[0]; ++b) {
    for (std::size_t l = 0; l < len; ++l) {
      for (std::size_t c = 0; c < ch; ++c) {
        dx[(b * len + l) * ch + c] = grad_out[b * ch + c] / static_cast<T>(len);
      }
    }
  }
  return dx;
}

template <typename T>
void GlobalAvgPool<T>::append_specs(std::vector<LayerSpec>& out) const {
  out.push_back({LayerKind::GlobalAvgPool});
}

// --------------------------------------------------------- ResidualBlock

template <typename T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument("residual_add: shapes " + shape_string(a.shape()) + " and " +
                          shape_string(b.shape()) + " differ");
  }
  Tensor<T> y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

template <typename T>
ResidualBlock<T>::ResidualBlock(std::size_t in_channels, std::size_t out_channels,
                                std::size_t kernel, std::size_t stride)
    : conv1_(in_channels, out_channels, kernel, stride),
      conv2_(out_channels, out_channels, kernel, 1) {
  if (stride != 1 || in_channels != out_channels) {
    projection_ = std::make_unique<Conv1d<T>>(in_channels, out_channels, 1, stride);
  }
}

template <typename T>
std::vector<std::size_t> ResidualBlock<T>::output_shape(const std::vector<std::size_t>& in) const {
  return conv2_.output_shape(conv1_.output_shape(in));
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x) {
  Tensor<T> main = conv2_.forward(relu1_.forward(conv1_.forward(x)));
  Tensor<T> sum = residual_add(main, projection_ ? projection_->forward(x) : x);
  this->has_forward_ = true;
  return relu_out_.forward(sum);
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
  this->require_forward("residual_block");
  const Tensor<T> dsum = relu_out_.backward(grad_out);
  Tensor<T> dx = conv1_.backward(relu1_.backward(conv2_.backward(dsum)));
  const Tensor<T> dshort = projection_ ? projection_->backward(dsum) : dsum;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dshort[i];
  return dx;
}

template <typename T>
void ResidualBlock<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  conv1_.collect_parameters(out);
  conv2_.collect_parameters(out);
  if (projection_) projection_->collect_parameters(out);
}

template <typename T>
void ResidualBlock<T>::append_specs(std::vector<LayerSpec>& out) const {
  conv1_.append_specs(out);
  relu1_.append_specs(out);
  conv2_.append_specs(out);
  if (projection_) projection_->append_specs(out);
  out.push_back({LayerKind::ResidualAdd});
  relu_out_.append_specs(out);
}

template <typename T>
std::vector<Conv1d<T>*> ResidualBlock<T>::convolutions() {
  std::vector<Conv1d<T>*> v{&conv1_, &conv2_};
  if (projection_) v.push_back(projection_.get());
  return v;
}

// ---------------------------------------------------------- initializers

template <typename T>
std::vector<T> he_normal(std::size_t fan_in, std::size_t count, std::mt19937_64& rng) {
  if (fan_in == 0) throw InvalidArgument("he_normal: fan_in must be >= 1");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<T> out(count);
  for (T& v : out) v = static_cast<T>(dist(rng));
  return out;
}

template <typename T>
std::vector<T> he_normal(std::size_t fan_in, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return he_normal<T>(fan_in, count, rng);
}

template <typename T>
std::vector<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t count,
                              std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<T> out(count);
  for (T& v : out) v = static_cast<T>(dist(rng));
  return out;
}

#define CARENET_INSTANTIATE_LAYERS(T)                                                        \
  template class Conv1d<T>;                                                                  \
  template class Dense<T>;                                                                   \
  template class Relu<T>;                                                                    \
  template class Sigmoid<T>;                                                                 \
  template class Softmax<T>;                                                                 \
  template class GlobalAvgPool<T>;                                                           \
  template class ResidualBlock<T>;                                                           \
  template Tensor<T> residual_add<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template std::vector<T> he_normal<T>(std::size_t, std::size_t, std::mt19937_64&);          \
  template std::vector<T> he_normal<T>(std::size_t, std::size_t, std::uint64_t);             \
  template std::vector<T> glorot_uniform<T>(std::size_t, std::size_t, std::size_t,           \
                                            std::mt19937_64&);

CARENET_INSTANTIATE_LAYERS(float)
CARENET_INSTANTIATE_LAYERS(double)

#undef CARENET_INSTANTIATE_LAYERS

}  // namespace carenet::nn
