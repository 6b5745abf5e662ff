#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carenet/nn/network.hpp"

namespace carenet {

enum class HeadKind { Type, Subtype };

std::string_view to_string(HeadKind h);
HeadKind parse_head(std::string_view s);

/// Residual 1D CNN layout. Defaults are the reference architecture.
struct CarenetConfig {
  HeadKind head = HeadKind::Type;
  std::size_t input_length = 467;
  std::size_t stem_filters = 16;
  std::size_t stem_kernel = 7;
  std::size_t stem_stride = 2;
  std::vector<std::size_t> stage_filters{16, 32, 64, 128};
  std::size_t blocks_per_stage = 2;
  std::size_t kernel = 3;

  std::size_t outputs() const { return head == HeadKind::Type ? 1 : 4; }
  friend bool operator==(const CarenetConfig&, const CarenetConfig&) = default;
};

nlohmann::json to_json(const CarenetConfig& c);
CarenetConfig config_from_json(const nlohmann::json& j);

template <typename T>
class CarenetModelT;

template <typename T>
CarenetModelT<T> build_carenet(const CarenetConfig& config, std::uint64_t seed);

/// Network plus the indices Grad-CAM and training need: the last residual
/// block (feature map), the dense head (logits) and the output activation.
template <typename T>
class CarenetModelT {
 public:
  CarenetModelT(CarenetConfig config, nn::Network<T> net, std::size_t feature_layer);

  const CarenetConfig& config() const { return config_; }
  HeadKind head() const { return config_.head; }
  nn::Network<T>& network() { return net_; }

  std::size_t feature_layer() const { return feature_layer_; }
  std::size_t logit_layer() const { return net_.size() - 2; }
  std::size_t output_layer() const { return net_.size() - 1; }

  /// (batch, 1, length) -> probabilities (batch, outputs).
  nn::Tensor<T> forward(const nn::Tensor<T>& x) { return net_.forward(x); }
  /// Pre-activation scores; leaves the forward cache valid up to the head.
  nn::Tensor<T> logits(const nn::Tensor<T>& x) { return net_.forward_until(x, net_.size() - 1); }

  std::size_t parameter_count() { return net_.parameter_count(); }
  std::size_t trunk_parameter_count();

  std::vector<T> flat_parameters();
  void set_flat_parameters(const std::vector<T>& flat);

  template <typename U>
  CarenetModelT<U> cast() {
    auto out = build_carenet<U>(config_, 0);
    const auto src = flat_parameters();
    out.set_flat_parameters(std::vector<U>(src.begin(), src.end()));
    return out;
  }

 private:
  CarenetConfig config_;
  nn::Network<T> net_;
  std::size_t feature_layer_;
};

using CarenetModel = CarenetModelT<float>;

/// Stem conv + ReLU, residual stages, global average pool, dense head and
/// sigmoid (type) or softmax (subtype). Convs are He-normal, the dense head
/// is Glorot-uniform, biases start at zero. Defined for float and double.

/// Parameter count from the configuration alone.
std::size_t count_params(const CarenetConfig& config);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int fold = -1;
  int epoch = 0;
  nlohmann::json extra = nlohmann::json::object();
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(CarenetModel& model, const std::filesystem::path& path,
                     const CheckpointMeta& meta = {});

struct LoadedCheckpoint {
  CarenetModel model;
  CheckpointMeta meta;
};

/// Throws FormatError on bad magic, version, truncation, checksum, a layer
/// list that disagrees with the stored configuration, or (architecture
/// mismatch) a head other than `expected_head`.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 std::optional<HeadKind> expected_head = std::nullopt);

}  // namespace carenet
