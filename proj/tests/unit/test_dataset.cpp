#include <doctest.h>

#include <fstream>
#include <random>

#include "carenet/container.hpp"
#include "carenet/dataset.hpp"
#include "carenet/error.hpp"
#include "carenet/labels.hpp"
#include "tmpdir.hpp"

using namespace carenet;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

SpectraSet small_set(std::size_t n, std::uint64_t seed) {
  SpectraSet s;
  s.axis = build_axis(1800.0, 900.0, 467);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(467);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : v) x = u(rng);
    const bool ca = i % 2 == 0;
    s.append(v, 1 + static_cast<int>(i / 2), static_cast<int>(i), static_cast<int>(i % 7),
             static_cast<int>(i % 5), ca ? CoreType::CA : CoreType::AT, ca ? Subtype::HER2 : Subtype::None);
  }
  return s;
}

}  // namespace

TEST_CASE("labels: encoding rules") {
  const auto ca = encode_labels(CoreType::CA, Subtype::LB);
  CHECK(ca.binary == 1.0f);
  REQUIRE(ca.one_hot);
  CHECK(*ca.one_hot == std::array<float, 4>{0, 1, 0, 0});
  const auto at = encode_labels(CoreType::AT, Subtype::None);
  CHECK(at.binary == 0.0f);
  CHECK_FALSE(at.one_hot);
  CHECK_THROWS_AS(encode_labels(CoreType::CA, Subtype::None), InvalidArgument);
  CHECK_THROWS_AS(encode_labels(CoreType::AT, Subtype::LA), InvalidArgument);
  CHECK(parse_subtype("TNBC") == Subtype::TNBC);
  CHECK_THROWS_AS(parse_core_type("XX"), InvalidArgument);
}

TEST_CASE("container: round trip of every dtype with 64-byte aligned offsets") {
  Container c;
  c.metadata = {{"k", 3}};
  const std::vector<float> f{1.5f, -2.0f, 3.25f};
  const std::vector<double> d{1e-300, 2.0};
  const std::vector<std::int32_t> i32{-1, 7};
  const std::vector<std::int64_t> i64{1LL << 40};
  const std::vector<std::uint8_t> u8{1, 2, 3, 4, 5};
  const std::vector<std::uint16_t> u16{65535};
  c.put<float>("f", {3}, f);
  c.put<double>("d", {1, 2}, d);
  c.put<std::int32_t>("i", {2}, i32);
  c.put<std::int64_t>("l", {1}, i64);
  c.put<std::uint8_t>("u", {5}, u8);
  c.put<std::uint16_t>("w", {1}, u16);
  const auto bytes = c.serialize();
  const auto back = Container::parse(bytes);
  CHECK(back.metadata == c.metadata);
  CHECK(back.get<float>("f") == f);
  CHECK(back.get<double>("d") == d);
  CHECK(back.get<std::int32_t>("i") == i32);
  CHECK(back.get<std::int64_t>("l") == i64);
  CHECK(back.get<std::uint8_t>("u") == u8);
  CHECK(back.get<std::uint16_t>("w") == u16);
  CHECK(back.entry("d").shape == std::vector<std::size_t>{1, 2});
  for (const auto& name : back.names()) CHECK(back.entry(name).offset % kContainerAlignment == 0);
  CHECK(bytes.substr(0, 4) == "CRNS");
  CHECK(c.serialize() == bytes);
}

TEST_CASE("container: errors") {
  Container c;
  const std::vector<float> f(100, 1.0f);
  CHECK_THROWS_AS(c.put<float>("f", {3, 3}, f), InvalidArgument);
  c.put<float>("f", {100}, f);
  const auto bytes = c.serialize();
  CHECK_THROWS_AS(c.get<double>("f"), FormatError);
  CHECK_THROWS(c.get<float>("missing"));

  std::string bad = bytes;
  bad[bad.size() - 10] ^= 0x01;
  CHECK_THROWS_AS(Container::parse(bad), FormatError);
  CHECK_THROWS_AS(Container::parse(bytes.substr(0, bytes.size() - 4)), FormatError);
  CHECK_THROWS_AS(Container::parse("XXXX" + bytes.substr(4)), FormatError);
  CHECK_THROWS_AS(Container::parse("CR"), FormatError);
  std::string version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(Container::parse(version), FormatError);
}

TEST_CASE("spectraset: file round trip, subset and validation") {
  const auto dir = carenet::testing::scratch_dir("dataset_set");
  const SpectraSet s = small_set(9, 1);
  write_spectraset(s, dir / "a.crns", {{"origin", "test"}});
  const SpectraSet r = read_spectraset(dir / "a.crns");
  CHECK(r.axis == s.axis);
  CHECK(r.spectra == s.spectra);
  CHECK(r.patient_id == s.patient_id);
  CHECK(r.core_id == s.core_id);
  CHECK(r.row == s.row);
  CHECK(r.col == s.col);
  CHECK(r.core_type == s.core_type);
  CHECK(r.subtype == s.subtype);

  write_spectraset(s, dir / "b.crns", {{"origin", "test"}});
  CHECK(slurp(dir / "a.crns") == slurp(dir / "b.crns"));

  const std::vector<std::size_t> pick{0, 4, 8};
  const SpectraSet sub = s.subset(pick);
  REQUIRE(sub.size() == 3);
  CHECK(sub.core_id == std::vector<std::int32_t>{0, 4, 8});
  for (std::size_t j = 0; j < 467; ++j) CHECK(sub.spectrum(1)[j] == s.spectrum(4)[j]);

  SpectraSet bad = s;
  bad.spectra[5] = 1.5f;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  SpectraSet bad2 = s;
  bad2.subtype[1] = static_cast<std::uint8_t>(Subtype::LA);  // AT with a subtype
  CHECK_THROWS_AS(bad2.validate(), InvalidArgument);
  SpectraSet bad3 = s;
  bad3.row.pop_back();
  CHECK_THROWS_AS(bad3.validate(), InvalidArgument);
}

TEST_CASE("spectraset: CSV export/import is lossless") {
  const auto dir = carenet::testing::scratch_dir("dataset_csv");
  const SpectraSet s = small_set(5, 2);
  export_csv(s, dir / "s.csv");
  const SpectraSet r = import_csv(dir / "s.csv");
  CHECK(r.spectra == s.spectra);
  CHECK(r.patient_id == s.patient_id);
  CHECK(r.subtype == s.subtype);
  CHECK(r.axis.matches(s.axis));
}

TEST_CASE("cube: write/read with ground truth") {
  const auto dir = carenet::testing::scratch_dir("dataset_cube");
  HyperCube cube;
  cube.rows = 3;
  cube.cols = 4;
  cube.axis = build_axis(3950.0, 900.0, 20);
  cube.intensities.resize(12 * 20);
  for (std::size_t i = 0; i < cube.intensities.size(); ++i) cube.intensities[i] = 0.001f * i;
  cube.core_id = 5;
  cube.patient_id = 3;
  cube.core_type = CoreType::CA;
  cube.subtype = Subtype::TNBC;
  std::vector<std::uint8_t> gt(12, 2);
  write_cube(cube, dir / "c.crns", gt, {{"radius", 0.6}});
  const StoredCube back = read_cube(dir / "c.crns");
  CHECK(back.cube.intensities == cube.intensities);
  CHECK(back.cube.rows == 3);
  CHECK(back.cube.cols == 4);
  CHECK(back.cube.subtype == Subtype::TNBC);
  CHECK(back.cube.patient_id == 3);
  CHECK(back.ground_truth == gt);
  CHECK(back.ground_truth_info.at("radius") == 0.6);

  HyperCube bad = cube;
  bad.intensities.pop_back();
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}
