#include <doctest.h>

#include <cmath>
#include <random>

#include "carenet/error.hpp"
#include "carenet/gradcam.hpp"
#include "carenet/model.hpp"

using namespace carenet;

TEST_CASE("upsample_linear keeps endpoints and interpolates") {
  const std::vector<double> in{0.0, 1.0, 0.0};
  const auto out = upsample_linear(in, 5);
  REQUIRE(out.size() == 5);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == doctest::Approx(0.5));
  CHECK(out[2] == doctest::Approx(1.0));
  CHECK(out[4] == 0.0);
  const std::vector<double> lin{1.0, 3.0};
  const auto l = upsample_linear(lin, 467);
  for (std::size_t i = 0; i < 467; ++i) CHECK(l[i] == doctest::Approx(1.0 + 2.0 * i / 466.0));
}

TEST_CASE("gradcam: maps have input length, are non-negative, and finite") {
  CarenetConfig cfg;
  cfg.head = HeadKind::Subtype;
  auto model = build_carenet<float>(cfg, 4);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  nn::Tensor<float> x({3, 467, 1});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);
  const auto maps = gradcam_batch(model, x, {0, 2, 3});
  REQUIRE(maps.size() == 3);
  for (const auto& m : maps) {
    CHECK(m.size() == 467);
    for (double v : m) CHECK((std::isfinite(v) && v >= 0.0));
  }
  CHECK_THROWS_AS(gradcam_batch(model, x, {0, 4, 1}), InvalidArgument);
  // Batching does not change the result.
  const auto single = gradcam_spectrum(model, {x.data() + 467, 467}, 2);
  for (std::size_t i = 0; i < 467; ++i) CHECK(single[i] == doctest::Approx(maps[1][i]).epsilon(1e-5));
}

TEST_CASE("gradcam: matches a direct computation from the feature map gradients") {
  auto model = build_carenet<float>({}, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  nn::Tensor<float> x({1, 467, 1});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);
  for (int cls : {0, 1}) {
    const auto got = gradcam_spectrum(model, x.values(), cls);
    auto& net = model.network();
    model.logits(x);
    nn::Tensor<float> g({1, 1}, std::vector<float>{cls == 1 ? 1.0f : -1.0f});
    const auto dfeat = net.backward_range(g, model.logit_layer(), model.feature_layer() + 1);
    const auto& a = net.activation(model.feature_layer());
    const std::size_t len = a.dim(1), ch = a.dim(2);
    std::vector<double> cam(len, 0.0);
    for (std::size_t k = 0; k < ch; ++k) {
      double alpha = 0.0;
      for (std::size_t t = 0; t < len; ++t) alpha += dfeat[t * ch + k];
      alpha /= static_cast<double>(len);
      for (std::size_t t = 0; t < len; ++t) cam[t] += alpha * a[t * ch + k];
    }
    for (auto& v : cam) v = std::max(v, 0.0);
    const auto expected = upsample_linear(cam, 467);
    net.zero_grad();
    for (std::size_t i = 0; i < 467; ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-4).scale(1e-6));
  }
}

TEST_CASE("class_average normalizes to [0, 1] and flags constant maps") {
  const auto ax = build_axis(1800, 900, 4);
  const auto h = class_average({{0, 2, 4, 2}, {0, 0, 2, 0}}, 1, ax);
  CHECK(h.values == std::vector<double>{0.0, 1.0 / 3.0, 1.0, 1.0 / 3.0});
  CHECK_FALSE(h.degenerate);
  const auto flat = class_average({{1, 1, 1, 1}}, 0, ax);
  CHECK(flat.degenerate);
  CHECK(flat.values == std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(class_average({}, 0, ax), InvalidArgument);
}

TEST_CASE("top_bands and top_mass_near") {
  const auto ax = build_axis(1800, 900, 10);  // 100 cm-1 steps
  const std::vector<double> h{0, 0.9, 0.8, 0, 0, 0, 0.75, 0, 0, 0};
  const auto bands = top_bands(h, ax, 0.7);
  REQUIRE(bands.size() == 2);
  CHECK(bands[0].high_wn == doctest::Approx(1700));
  CHECK(bands[0].low_wn == doctest::Approx(1600));
  CHECK(bands[0].peak == doctest::Approx(0.9));
  CHECK(bands[1].high_wn == doctest::Approx(1200));
  // Top 10% of 10 points is the single 0.9 point at 1700.
  CHECK(top_mass_near(h, ax, 1700, 20) == doctest::Approx(1.0));
  CHECK(top_mass_near(h, ax, 1200, 20) == doctest::Approx(0.0));
  CHECK(top_mass_near(h, ax, 1650, 60, 0.3) == doctest::Approx(1.7 / 2.45));
}
