#include "carenet/model.hpp"

#include <random>

#include "binio.hpp"

namespace carenet {

using nn::Conv1d;
using nn::Dense;
using nn::GlobalAvgPool;
using nn::Relu;
using nn::ResidualBlock;

std::string_view to_string(HeadKind h) { return h == HeadKind::Type ? "type" : "subtype"; }

HeadKind parse_head(std::string_view s) {
  if (s == "type") return HeadKind::Type;
  if (s == "subtype") return HeadKind::Subtype;
  throw InvalidArgument("unknown head '" + std::string(s) + "' (expected type or subtype)");
}

nlohmann::json to_json(const CarenetConfig& c) {
  return {{"head", to_string(c.head)},
          {"input_length", c.input_length},
          {"stem_filters", c.stem_filters},
          {"stem_kernel", c.stem_kernel},
          {"stem_stride", c.stem_stride},
          {"stage_filters", c.stage_filters},
          {"blocks_per_stage", c.blocks_per_stage},
          {"kernel", c.kernel}};
}

CarenetConfig config_from_json(const nlohmann::json& j) {
  try {
    CarenetConfig c;
    c.head = parse_head(j.at("head").get<std::string>());
    c.input_length = j.at("input_length").get<std::size_t>();
    c.stem_filters = j.at("stem_filters").get<std::size_t>();
    c.stem_kernel = j.at("stem_kernel").get<std::size_t>();
    c.stem_stride = j.at("stem_stride").get<std::size_t>();
    c.stage_filters = j.at("stage_filters").get<std::vector<std::size_t>>();
    c.blocks_per_stage = j.at("blocks_per_stage").get<std::size_t>();
    c.kernel = j.at("kernel").get<std::size_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model configuration: ") + e.what());
  }
}

template <typename T>
CarenetModelT<T>::CarenetModelT(CarenetConfig config, nn::Network<T> net,
                                std::size_t feature_layer)
    : config_(std::move(config)), net_(std::move(net)), feature_layer_(feature_layer) {}

template <typename T>
std::size_t CarenetModelT<T>::trunk_parameter_count() {
  std::size_t n = 0;
  for (std::size_t i = 0; i <= feature_layer_; ++i) {
    std::vector<nn::Parameter<T>*> ps;
    net_.layer(i).collect_parameters(ps);
    for (auto* p : ps) n += p->value.size();
  }
  return n;
}

template <typename T>
std::vector<T> CarenetModelT<T>::flat_parameters() {
  std::vector<T> out;
  for (auto* p : net_.parameters()) {
    out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  }
  return out;
}

template <typename T>
void CarenetModelT<T>::set_flat_parameters(const std::vector<T>& flat) {
  auto params = net_.parameters();
  std::size_t total = 0;
  for (auto* p : params) total += p->value.size();
  if (total != flat.size()) {
    throw InvalidArgument("parameter blob has " + std::to_string(flat.size()) +
                          " values, model needs " + std::to_string(total));
  }
  std::size_t off = 0;
  for (auto* p : params) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), p->value.size(), p->value.data());
    off += p->value.size();
  }
}

template <typename T>
CarenetModelT<T> build_carenet(const CarenetConfig& config, std::uint64_t seed) {
  if (config.input_length < 1 || config.stage_filters.empty() || config.blocks_per_stage < 1) {
    throw InvalidArgument("carenet configuration needs input length, stages and blocks");
  }
  std::mt19937_64 rng(seed);
  nn::Network<T> net;
  auto init_conv = [&rng](Conv1d<T>& c) {
    auto w = nn::he_normal<T>(c.fan_in(), c.weight().value.size(), rng);
    std::copy(w.begin(), w.end(), c.weight().value.data());
  };

  init_conv(net.template add<Conv1d<T>>(1, config.stem_filters, config.stem_kernel,
                                        config.stem_stride));
  net.template add<Relu<T>>();
  std::size_t channels = config.stem_filters;
  for (std::size_t s = 0; s < config.stage_filters.size(); ++s) {
    for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      auto& block = net.template add<ResidualBlock<T>>(channels, config.stage_filters[s],
                                                       config.kernel, stride);
      for (auto* c : block.convolutions()) init_conv(*c);
      channels = config.stage_filters[s];
    }
  }
  const std::size_t feature_layer = net.size() - 1;
  net.template add<GlobalAvgPool<T>>();
  auto& dense = net.template add<Dense<T>>(channels, config.outputs());
  auto w = nn::glorot_uniform<T>(channels, config.outputs(), dense.weight().value.size(), rng);
  std::copy(w.begin(), w.end(), dense.weight().value.data());
  if (config.head == HeadKind::Type) {
    net.template add<nn::Sigmoid<T>>();
  } else {
    net.template add<nn::Softmax<T>>();
  }
  return CarenetModelT<T>(config, std::move(net), feature_layer);
}

std::size_t count_params(const CarenetConfig& config) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return in * out * k + out; };
  std::size_t n = conv(1, config.stem_filters, config.stem_kernel);
  std::size_t channels = config.stem_filters;
  for (std::size_t s = 0; s < config.stage_filters.size(); ++s) {
    const std::size_t f = config.stage_filters[s];
    for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      n += conv(channels, f, config.kernel) + conv(f, f, config.kernel);
      if (stride != 1 || channels != f) n += conv(channels, f, 1);
      channels = f;
    }
  }
  return n + channels * config.outputs() + config.outputs();
}

namespace {

constexpr char kMagic[4] = {'C', 'R', 'N', 'M'};

}  // namespace

void save_checkpoint(CarenetModel& model, const std::filesystem::path& path,
                     const CheckpointMeta& meta) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : model.network().specs()) layers.push_back(nn::to_json(s));
  const auto params = model.flat_parameters();
  const nlohmann::json header{
      {"config", to_json(model.config())},
      {"layers", layers},
      {"parameter_count", params.size()},
      {"meta", {{"seed", meta.seed}, {"fold", meta.fold}, {"epoch", meta.epoch}, {"extra", meta.extra}}}};
  const std::string text = header.dump();

  std::string buf(kMagic, 4);
  binio::put<std::uint16_t>(buf, kCheckpointVersion);
  binio::put<std::uint32_t>(buf, static_cast<std::uint32_t>(text.size()));
  buf += text;
  buf.append(reinterpret_cast<const char*>(params.data()), params.size() * sizeof(float));
  binio::put<std::uint32_t>(buf, binio::crc32(buf.data(), buf.size()));
  binio::write_file(path, buf);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 std::optional<HeadKind> expected_head) {
  const std::string buf = binio::read_file(path);
  if (buf.size() < 14 || std::string_view(buf.data(), 4) != std::string_view(kMagic, 4)) {
    throw FormatError(path.string() + ": not a model checkpoint");
  }
  const auto version = binio::get<std::uint16_t>(buf, 4);
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto stored_crc = binio::get<std::uint32_t>(buf, buf.size() - 4);
  if (binio::crc32(buf.data(), buf.size() - 4) != stored_crc) {
    throw FormatError(path.string() + ": checksum mismatch (truncated or corrupt)");
  }
  const auto json_len = binio::get<std::uint32_t>(buf, 6);
  if (10 + static_cast<std::size_t>(json_len) + 4 > buf.size()) {
    throw FormatError(path.string() + ": header length exceeds file size");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(10, json_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad header JSON: " + e.what());
  }
  const CarenetConfig config = config_from_json(header.at("config"));
  if (expected_head && *expected_head != config.head) {
    throw FormatError(path.string() + ": architecture mismatch, checkpoint has a " +
                      std::string(to_string(config.head)) + " head, expected " +
                      std::string(to_string(*expected_head)));
  }
  CarenetModel model = build_carenet<float>(config, 0);
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : model.network().specs()) layers.push_back(nn::to_json(s));
  if (header.value("layers", nlohmann::json()) != layers) {
    throw FormatError(path.string() + ": architecture mismatch between layer list and configuration");
  }
  const std::size_t blob = buf.size() - 4 - 10 - json_len;
  const std::size_t n = model.parameter_count();
  if (blob != n * sizeof(float)) {
    throw FormatError(path.string() + ": parameter blob size " + std::to_string(blob) +
                      " does not match " + std::to_string(n) + " parameters");
  }
  std::vector<float> params(n);
  std::memcpy(params.data(), buf.data() + 10 + json_len, blob);
  model.set_flat_parameters(params);

  CheckpointMeta meta;
  const auto& m = header.at("meta");
  meta.seed = m.value("seed", std::uint64_t{0});
  meta.fold = m.value("fold", -1);
  meta.epoch = m.value("epoch", 0);
  meta.extra = m.value("extra", nlohmann::json::object());
  return {std::move(model), meta};
}

template class CarenetModelT<float>;
template class CarenetModelT<double>;
template CarenetModelT<float> build_carenet<float>(const CarenetConfig&, std::uint64_t);
template CarenetModelT<double> build_carenet<double>(const CarenetConfig&, std::uint64_t);

}  // namespace carenet
