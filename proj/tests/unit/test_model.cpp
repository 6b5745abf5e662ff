#include <doctest.h>

#include <fstream>
#include <random>

#include "carenet/error.hpp"
#include "carenet/model.hpp"
#include "gradcheck.hpp"
#include "tmpdir.hpp"

using namespace carenet;

namespace {

// Conv k*in*out + out; dense in*out + out.
std::size_t conv_params(std::size_t k, std::size_t in, std::size_t out) { return k * in * out + out; }

std::size_t expected_params(std::size_t outputs) {
  std::size_t n = conv_params(7, 1, 16);
  std::size_t in = 16;
  for (std::size_t f : {16, 32, 64, 128}) {
    n += conv_params(3, in, f) + conv_params(3, f, f);
    if (in != f) n += conv_params(1, in, f);
    n += 2 * conv_params(3, f, f);
    in = f;
  }
  return n + 128 * outputs + outputs;
}

nn::Tensor<float> random_batch(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  nn::Tensor<float> x({n, 467, 1});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);
  return x;
}

}  // namespace

TEST_CASE("parameter counts: 241,057 (type) and 241,444 (subtype)") {
  CHECK(expected_params(1) == 241057);
  CHECK(expected_params(4) == 241444);
  CarenetConfig type_cfg;
  CarenetConfig sub_cfg;
  sub_cfg.head = HeadKind::Subtype;
  CHECK(count_params(type_cfg) == 241057);
  CHECK(count_params(sub_cfg) == 241444);
  auto type_model = build_carenet<float>(type_cfg, 1);
  auto sub_model = build_carenet<float>(sub_cfg, 1);
  CHECK(type_model.parameter_count() == 241057);
  CHECK(sub_model.parameter_count() == 241444);
  CHECK(type_model.trunk_parameter_count() == sub_model.trunk_parameter_count());
}

TEST_CASE("forward: output shapes and probability ranges") {
  auto type_model = build_carenet<float>({}, 3);
  CarenetConfig sc;
  sc.head = HeadKind::Subtype;
  auto sub_model = build_carenet<float>(sc, 3);
  const auto x = random_batch(5, 1);
  const auto p = type_model.forward(x);
  REQUIRE(p.shape() == std::vector<std::size_t>{5, 1});
  for (std::size_t i = 0; i < 5; ++i) CHECK((p[i] > 0.0f && p[i] < 1.0f));
  const auto q = sub_model.forward(x);
  REQUIRE(q.shape() == std::vector<std::size_t>{5, 4});
  for (std::size_t i = 0; i < 5; ++i) {
    float s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += q[i * 4 + k];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
  const auto feat = type_model.network().activation(type_model.feature_layer());
  CHECK(feat.shape() == std::vector<std::size_t>{5, 30, 128});
}

TEST_CASE("build: same seed gives identical weights, different seeds differ") {
  auto a = build_carenet<float>({}, 42);
  auto b = build_carenet<float>({}, 42);
  auto c = build_carenet<float>({}, 43);
  CHECK(a.flat_parameters() == b.flat_parameters());
  CHECK(a.flat_parameters() != c.flat_parameters());
  const auto x = random_batch(3, 8);
  const auto pa = a.forward(x);
  const auto pb = b.forward(x);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("full model gradient check on a 3-spectrum batch, both heads") {
  std::mt19937_64 rng(5);
  for (HeadKind head : {HeadKind::Type, HeadKind::Subtype}) {
    CarenetConfig cfg;
    cfg.head = head;
    auto model = build_carenet<float>(cfg, 11).cast<double>();
    carenet::testing::jitter_biases(model.network(), rng);
    const auto x = carenet::testing::spectra_batch(3, rng);
    nn::Tensor<double> y({3, cfg.outputs()});
    if (head == HeadKind::Type) {
      y[0] = 1.0, y[1] = 0.0, y[2] = 1.0;
    } else {
      y[0 * 4 + 0] = 1.0, y[1 * 4 + 2] = 1.0, y[2 * 4 + 3] = 1.0;
    }
    const auto check = carenet::testing::check_model(model, x, y, rng, 4);
    CHECK(check.entries > 100);
    CHECK(check.max_rel < 1e-4);
  }
}

TEST_CASE("checkpoint: round trip preserves weights, outputs and metadata") {
  const auto dir = carenet::testing::scratch_dir("model_ckpt");
  CarenetConfig cfg;
  cfg.head = HeadKind::Subtype;
  auto model = build_carenet<float>(cfg, 9);
  save_checkpoint(model, dir / "m.crnm", {9, 2, 17, {{"note", "x"}}});
  auto loaded = load_checkpoint(dir / "m.crnm", HeadKind::Subtype);
  CHECK(loaded.meta.fold == 2);
  CHECK(loaded.meta.epoch == 17);
  CHECK(loaded.meta.seed == 9);
  CHECK(loaded.meta.extra.at("note") == "x");
  CHECK(loaded.model.config() == cfg);
  CHECK(loaded.model.flat_parameters() == model.flat_parameters());

  CHECK_THROWS_AS(load_checkpoint(dir / "m.crnm", HeadKind::Type), FormatError);

  // Same bytes for the same model.
  save_checkpoint(model, dir / "m2.crnm", {9, 2, 17, {{"note", "x"}}});
  std::ifstream f1(dir / "m.crnm", std::ios::binary), f2(dir / "m2.crnm", std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {});
  const std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  // A flipped byte or a truncation is caught.
  std::string corrupt = b1;
  corrupt[corrupt.size() / 2] ^= 0x5a;
  std::ofstream(dir / "bad.crnm", std::ios::binary) << corrupt;
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.crnm"), FormatError);
  std::ofstream(dir / "short.crnm", std::ios::binary) << b1.substr(0, b1.size() - 100);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.crnm"), FormatError);
  std::ofstream(dir / "junk.crnm", std::ios::binary) << "not a checkpoint at all";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.crnm"), FormatError);
}

TEST_CASE("set_flat_parameters rejects the wrong size") {
  auto model = build_carenet<float>({}, 1);
  CHECK_THROWS_AS(model.set_flat_parameters(std::vector<float>(10)), InvalidArgument);
}
