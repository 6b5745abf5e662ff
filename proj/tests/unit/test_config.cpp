#include <doctest.h>

#include "carenet/config.hpp"
#include "carenet/error.hpp"

using namespace carenet;

TEST_CASE("config: sections, types, comments and arrays") {
  const auto kv = KeyValueConfig::parse(R"(
# comment
top = 1
[synth]
rows = 16        # trailing comment
noise_sigma = 0.004
discriminative_band = [1550, 1510]
name = "panel a"
[train]
head = subtype
epochs = 3
)");
  CHECK(kv.get_int("top", 0) == 1);
  CHECK(kv.get_double("synth.noise_sigma", 0) == 0.004);
  CHECK(kv.get_string("synth.name", "") == "panel a");
  CHECK(kv.get_string("train.head", "") == "subtype");
  CHECK(kv.get_int("missing", 42) == 42);
  const SynthConfig s = synth_config(kv);
  CHECK(s.rows == 16);
  REQUIRE(s.discriminative_band);
  CHECK(s.discriminative_band->high_wn == 1550);
  const TrainConfig t = train_config(kv);
  CHECK(t.epochs == 3);
}

TEST_CASE("config: overrides, duplicates and unused keys") {
  auto kv = KeyValueConfig::parse("[train]\nepochs = 5\n");
  kv.set("train.epochs=7");
  kv.set("train.lr=0.01");
  CHECK(kv.get_int("train.epochs", 0) == 7);
  CHECK(kv.get_double("train.lr", 0) == 0.01);
  CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2\n"), InvalidArgument);
  CHECK_THROWS_AS(KeyValueConfig::parse("just a line\n"), InvalidArgument);
  CHECK_THROWS_AS(kv.set("no-equals"), InvalidArgument);
  auto kv2 = KeyValueConfig::parse("[train]\nepochz = 5\n");
  (void)train_config(kv2);
  CHECK(kv2.unused() == std::vector<std::string>{"train.epochz"});
  CHECK_THROWS_AS(kv2.require_all_used(), InvalidArgument);
  CHECK_THROWS_AS(KeyValueConfig::parse("[train]\nepochs = \"five\"\n").get_int("train.epochs", 1),
                  InvalidArgument);
}
