#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "carenet/error.hpp"
#include "carenet/pipeline.hpp"
#include "carenet/synthgen.hpp"

using namespace carenet;

namespace {

std::vector<PatientRecord> records(std::array<int, 4> per_subtype) {
  std::vector<PatientRecord> out;
  int id = 1;
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < per_subtype[static_cast<std::size_t>(s)]; ++i, ++id)
      out.push_back({id, static_cast<Subtype>(s), 2 * id, 2 * id + 1});
  return out;
}

// Two CA/AT cores per patient, `per_core` spectra each. AT spectra carry one
// broad band, CA spectra 1 + subtype narrow bands.
SpectraSet toy_set(int patients, int per_core, std::uint64_t seed) {
  SpectraSet s;
  s.axis = build_axis(1800.0, 900.0, 467);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<float> v(467);
  for (int p = 1; p <= patients; ++p) {
    const auto sub = static_cast<Subtype>((p - 1) % 4);
    for (CoreType t : {CoreType::CA, CoreType::AT}) {
      for (int k = 0; k < per_core; ++k) {
        const int peaks = t == CoreType::AT ? 1 : 1 + static_cast<int>(sub);
        const double width = t == CoreType::AT ? 60.0 : 8.0;
        for (std::size_t i = 0; i < 467; ++i) {
          double y = 0.1;
          for (int q = 0; q < peaks; ++q) {
            const double z = (s.axis[i] - 1650.0 + 150.0 * q) / width;
            y += 0.8 * std::exp(-0.5 * z * z);
          }
          v[i] = static_cast<float>(std::clamp(y + noise(rng), 0.0, 1.0));
        }
        s.append(v, p, 2 * p + (t == CoreType::AT), k / 4, k % 4, t,
                 t == CoreType::CA ? sub : Subtype::None);
      }
    }
  }
  return s;
}

TrainConfig small_config(HeadKind head) {
  TrainConfig c;
  c.head = head;
  c.epochs = 4;
  c.batch = 16;
  c.lr = 5e-3;
  c.architecture.head = head;
  c.architecture.stem_filters = 4;
  c.architecture.stage_filters = {4, 8};
  c.architecture.blocks_per_stage = 1;
  return c;
}

}  // namespace

TEST_CASE("split: 8/8/7/7 gives 4 test patients and 21/5 x3, 20/6 folds with no leakage") {
  const auto pats = records({8, 8, 7, 7});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SplitPlan plan = make_split(pats, seed, 4);
    REQUIRE(plan.test.size() == 4);
    std::set<Subtype> test_subtypes;
    for (int id : plan.test) test_subtypes.insert(pats[static_cast<std::size_t>(id - 1)].subtype);
    CHECK(test_subtypes.size() == 4);
    CHECK(plan.type_test_ca.size() == 2);
    CHECK(plan.type_test_at.size() == 2);
    REQUIRE(plan.folds.size() == 4);
    for (std::size_t f = 0; f < 3; ++f) {
      CHECK(plan.folds[f].train.size() == 21);
      CHECK(plan.folds[f].dev.size() == 5);
    }
    CHECK(plan.folds[3].train.size() == 20);
    CHECK(plan.folds[3].dev.size() == 6);

    const std::set<int> test(plan.test.begin(), plan.test.end());
    std::map<int, int> dev_count;
    for (const auto& fold : plan.folds) {
      std::set<int> tr(fold.train.begin(), fold.train.end());
      CHECK(tr.size() == fold.train.size());
      for (int id : fold.dev) {
        CHECK(tr.count(id) == 0);
        CHECK(test.count(id) == 0);
        ++dev_count[id];
      }
      for (int id : fold.train) CHECK(test.count(id) == 0);
      CHECK(tr.size() + fold.dev.size() + test.size() == pats.size());
    }
    for (auto [id, n] : dev_count) CHECK(n == 1);
    for (int id : plan.always_train) CHECK(dev_count.count(id) == 0);
    CHECK(dev_count.size() + plan.always_train.size() + test.size() == pats.size());
  }
}

TEST_CASE("split: deterministic per seed and failing without a subtype") {
  const auto pats = records({3, 3, 3, 3});
  CHECK(to_json(make_split(pats, 7)) == to_json(make_split(pats, 7)));
  CHECK_THROWS_AS(make_split(records({3, 3, 0, 3}), 1), InvalidArgument);
}

TEST_CASE("undersample: every class reduced to the minority count") {
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) labels.push_back(0);
  for (int i = 0; i < 20; ++i) labels.push_back(1);
  for (int i = 0; i < 35; ++i) labels.push_back(2);
  const auto idx = undersample_balance(labels, 3, 4);
  REQUIRE(idx.size() == 60);
  std::array<int, 3> count{};
  for (auto i : idx) ++count[static_cast<std::size_t>(labels[i])];
  CHECK(count == std::array<int, 3>{20, 20, 20});
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 60);
  const auto capped = undersample_balance(labels, 3, 4, 5);
  CHECK(capped.size() == 15);
  CHECK(undersample_balance(labels, 3, 4) == idx);
}

TEST_CASE("labels and index selection per head") {
  const SpectraSet s = toy_set(4, 2, 1);
  CHECK(head_label(s, 0, HeadKind::Type) == 1);
  CHECK(head_label(s, 2, HeadKind::Type) == 0);
  CHECK(head_label(s, 0, HeadKind::Subtype) == 0);
  CHECK(head_label(s, 2, HeadKind::Subtype) == -1);
  const auto ty = indices_for_patients(s, {2, 3}, HeadKind::Type);
  const auto sub = indices_for_patients(s, {2, 3}, HeadKind::Subtype);
  CHECK(ty.size() == 8);
  CHECK(sub.size() == 4);
  const LabeledData d = make_labeled(s, sub, HeadKind::Subtype);
  CHECK(d.x.shape() == std::vector<std::size_t>{4, 467, 1});
  CHECK(d.y.shape() == std::vector<std::size_t>{4, 4});
  CHECK(d.y[0 * 4 + 1] == 1.0f);  // patient 2 is LB
}

TEST_CASE("type test set takes CA cores of half the test patients and AT of the rest") {
  const SpectraSet s = toy_set(8, 3, 2);
  const SplitPlan plan = make_split(patients_from_set(s), 3, 1);
  const auto idx = test_indices(s, plan, HeadKind::Type);
  CHECK(idx.size() == 12);
  for (auto i : idx) {
    const int p = s.patient_id[i];
    const bool ca = s.core_type[i] == static_cast<std::uint8_t>(CoreType::CA);
    const auto& list = ca ? plan.type_test_ca : plan.type_test_at;
    CHECK(std::find(list.begin(), list.end(), p) != list.end());
  }
  CHECK(test_indices(s, plan, HeadKind::Subtype).size() == 12);
}

TEST_CASE("train_fold: learns a separable toy problem and is reproducible") {
  const SpectraSet s = toy_set(8, 24, 5);
  const auto train_idx = indices_for_patients(s, {1, 2, 3, 4, 5, 6}, HeadKind::Type);
  const auto dev_idx = indices_for_patients(s, {7, 8}, HeadKind::Type);
  const auto train = make_labeled(s, train_idx, HeadKind::Type);
  const auto dev = make_labeled(s, dev_idx, HeadKind::Type);
  const TrainConfig cfg = small_config(HeadKind::Type);
  TrainResult a = train_fold(cfg, train, dev);
  REQUIRE(a.history.size() == 4);
  CHECK(a.history.back().train_loss < a.history.front().train_loss);
  CHECK(a.best_dev_loss == doctest::Approx(a.history[a.best_epoch - 1].dev_loss));
  CHECK(a.history.back().dev_accuracy > 0.9);

  TrainResult b = train_fold(cfg, train, dev);
  CHECK(a.best_model.flat_parameters() == b.best_model.flat_parameters());
}

TEST_CASE("train_fold: missing class and bad config") {
  const SpectraSet s = toy_set(4, 4, 6);
  auto only_ca = indices_for_patients(s, {1, 2}, HeadKind::Subtype);
  const auto d = make_labeled(s, only_ca, HeadKind::Subtype);
  CHECK_THROWS_AS(train_fold(small_config(HeadKind::Subtype), d, d), InvalidArgument);
  TrainConfig bad = small_config(HeadKind::Type);
  bad.architecture.head = HeadKind::Subtype;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = small_config(HeadKind::Type);
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("preprocess_core: stage counts shrink and spectra land in [0, 1] on 467 points") {
  SynthConfig cfg;
  cfg.rows = cfg.cols = 24;
  cfg.patients_per_subtype = {1, 0, 0, 0};
  cfg.seed = 9;
  std::mt19937_64 rng(9);
  const auto eff = draw_patient_effects(cfg, rng);
  const SynthCore core = gen_core(cfg, 1, 0, CoreType::CA, Subtype::LA, eff);
  const EnvironmentSpectra env = preprocess_environment(gen_environment(cfg));
  CHECK(env.axis.size() == 467);
  const CoreResult r = preprocess_core(core.cube, env);
  const auto& c = r.counts;
  CHECK(c.pixels == 576);
  CHECK(c.tissue <= c.pixels);
  CHECK(c.after_outlier_1 <= c.tissue);
  CHECK(c.after_smoothing <= c.after_outlier_1);
  CHECK(c.after_emsc <= c.after_smoothing);
  CHECK(c.after_minmax <= c.after_emsc);
  CHECK(c.after_outlier_2 <= c.after_minmax);
  CHECK(r.spectra.size() == c.after_outlier_2);
  CHECK(r.spectra.size() > c.tissue / 2);
  CHECK(r.spectra.points() == 467);
  CHECK_NOTHROW(r.spectra.validate());
  for (std::size_t i = 0; i < r.spectra.size(); ++i) {
    const auto row = r.spectra.spectrum(i);
    CHECK(*std::min_element(row.begin(), row.end()) >= 0.0f);
    CHECK(*std::max_element(row.begin(), row.end()) <= 1.0f);
  }
  CHECK(r.pixels.size() == r.spectra.size());
}

TEST_CASE("preprocess_core: an empty slide has no tissue") {
  SynthConfig cfg;
  cfg.rows = cfg.cols = 16;
  const HyperCube env_cube = gen_environment(cfg);
  const EnvironmentSpectra env = preprocess_environment(env_cube);
  CHECK_THROWS_AS(preprocess_core(env_cube, env), DegenerateInput);
}
