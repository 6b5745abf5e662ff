#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carenet/chemometrics.hpp"
#include "carenet/clustering.hpp"
#include "carenet/dataset.hpp"
#include "carenet/model.hpp"
#include "carenet/nn/optim.hpp"

namespace carenet {

// ------------------------------------------------------------ preprocessing

struct PreprocessOptions {
  ClusteringOptions clustering;
  Band biofingerprint{1800.0, 900.0};
  std::size_t outlier_pcs = 10;
  double outlier_confidence = 0.95;
  std::size_t sg_window = 11;
  std::size_t sg_order = 2;
  EmscOptions emsc;
};

/// Spectrum counts after each stage (non-increasing) plus notes on skipped
/// steps and flagged clusters.
struct StageCounts {
  std::size_t pixels = 0;
  std::size_t tissue = 0;
  std::size_t paraffin = 0;
  std::size_t after_outlier_1 = 0;
  std::size_t after_smoothing = 0;
  std::size_t after_emsc = 0;
  std::size_t after_minmax = 0;
  std::size_t after_outlier_2 = 0;
  std::vector<std::string> notes;
};

nlohmann::json to_json(const StageCounts& c);

/// Water-vapour spectra from the environment image after truncation,
/// outlier removal and smoothing.
struct EnvironmentSpectra {
  RowMatrix spectra;
  WavenumberAxis axis;
  StageCounts counts;
};

EnvironmentSpectra preprocess_environment(const HyperCube& env, const PreprocessOptions& opts = {});

struct CoreResult {
  SpectraSet spectra;
  StageCounts counts;
  PixelMask tissue;
  PixelMask paraffin;
  /// Pixel index of every output spectrum.
  std::vector<std::size_t> pixels;
};

/// cluster -> truncate -> outlier removal -> Savitzky-Golay -> EMSC ->
/// min-max -> outlier removal. Throws DegenerateInput when no tissue or no
/// paraffin is found, or when every tissue spectrum is discarded.
CoreResult preprocess_core(const HyperCube& cube, const EnvironmentSpectra& h2o,
                           const PreprocessOptions& opts = {});

// ----------------------------------------------------------------- protocol

struct PatientRecord {
  int patient_id = 0;
  Subtype subtype = Subtype::LA;
  int ca_core = -1;
  int at_core = -1;
};

/// One record per patient present in the set, sorted by patient id.
std::vector<PatientRecord> patients_from_set(const SpectraSet& set);

struct FoldPlan {
  std::vector<int> train;
  std::vector<int> dev;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<int> test;          // one per subtype, LA..TNBC order
  std::vector<int> type_test_ca;  // test patients contributing their CA core
  std::vector<int> type_test_at;  // test patients contributing their AT core
  std::vector<FoldPlan> folds;
  std::vector<int> always_train;  // stratified group never used as dev
};

nlohmann::json to_json(const SplitPlan& p);

/// Test = one random patient per subtype. The rest are shuffled within
/// subtype and dealt round-robin (subtypes in order) into n_folds + 1
/// groups; the n_folds largest groups are the dev sets and the remaining
/// group always trains. Throws InvalidArgument when a subtype has no patient.
SplitPlan make_split(const std::vector<PatientRecord>& patients, std::uint64_t seed,
                     std::size_t n_folds = 4);

/// Every class reduced, without replacement, to the minority count.
/// Indices come back grouped by class, ascending within a class.
std::vector<std::size_t> undersample_balance(const std::vector<int>& labels, int n_classes,
                                             std::uint64_t seed, std::size_t max_per_class = 0);

/// Spectra and targets for one head.
struct LabeledData {
  nn::Tensor<float> x;  // (n, points, 1)
  nn::Tensor<float> y;  // (n, 1) or (n, 4)
  std::vector<int> label;
  std::vector<int> patient;
  std::vector<int> core;

  std::size_t size() const { return label.size(); }
};

/// Class label of spectrum i for the head (type: AT 0 / CA 1; subtype:
/// LA..TNBC 0..3, -1 for AT spectra).
int head_label(const SpectraSet& set, std::size_t i, HeadKind head);
LabeledData make_labeled(const SpectraSet& set, const std::vector<std::size_t>& indices,
                         HeadKind head);

/// Spectrum indices for the given patients: type head takes every core,
/// subtype head only CA cores.
std::vector<std::size_t> indices_for_patients(const SpectraSet& set, const std::vector<int>& patients,
                                              HeadKind head);
/// Test spectra of a split for the head.
std::vector<std::size_t> test_indices(const SpectraSet& set, const SplitPlan& plan, HeadKind head);

struct TrainConfig {
  HeadKind head = HeadKind::Type;
  std::size_t epochs = 50;
  std::size_t batch = 250;
  double lr = 1e-3;
  std::uint64_t init_seed = 1;
  std::uint64_t shuffle_seed = 2;
  std::uint64_t undersample_seed = 3;
  /// Optional caps applied after balancing (0 = none).
  std::size_t max_per_class = 0;
  std::size_t dev_max_per_class = 0;
  nn::PlateauOptions plateau;
  CarenetConfig architecture;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_accuracy = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  CarenetModel model;
  CarenetModel best_model;
  std::size_t best_epoch = 0;
  double best_dev_loss = 0.0;
  std::vector<EpochRecord> history;
};

/// Adam with per-epoch shuffling; the plateau scheduler follows the dev
/// loss. Throws NumericalError when a loss turns non-finite.
TrainResult train_fold(const TrainConfig& config, const LabeledData& train, const LabeledData& dev);

/// Probabilities (n, outputs) in inference batches.
nn::Tensor<float> predict(CarenetModel& model, const nn::Tensor<float>& x, std::size_t batch = 250);

double mean_loss(HeadKind head, const nn::Tensor<float>& probs, const nn::Tensor<float>& targets);

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace carenet

namespace carenet {

/// Per-fold copy of `base` with init/shuffle/undersample seeds derived from
/// (seed, fold).
TrainConfig fold_config(const TrainConfig& base, std::uint64_t seed, std::size_t fold);

struct FoldOutcome {
  std::size_t fold = 0;
  TrainResult result;
  TrainConfig config;
};

struct CrossValidation {
  HeadKind head = HeadKind::Type;
  SplitPlan plan;
  std::vector<FoldOutcome> folds;
};

/// Trains one model per fold of `plan` (all folds unless `folds` lists a
/// subset, 0-based). `on_fold` is called after each fold.
CrossValidation cross_validate(const SpectraSet& set, const SplitPlan& plan, const TrainConfig& base,
                               std::uint64_t seed, const std::vector<std::size_t>& folds = {},
                               const std::function<void(FoldOutcome&)>& on_fold = {});

}  // namespace carenet
