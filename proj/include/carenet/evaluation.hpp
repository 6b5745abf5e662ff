#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carenet/model.hpp"
#include "carenet/pipeline.hpp"
#include "carenet/nn/tensor.hpp"

namespace carenet {

/// Class names per head: type AT/CA, subtype LA/LB/HER2/TNBC.
std::string class_name(HeadKind head, int cls);
int head_classes(HeadKind head);

struct ClassPrediction {
  int cls = 0;
  bool tie = false;
};

/// Binary threshold, inclusive: p >= 0.5 is class 1.
ClassPrediction classify_binary(double p);
/// Argmax; ties go to the lowest index and set the tie flag.
ClassPrediction classify_probs(std::span<const float> probs);
/// One prediction per row of a (n, 1) or (n, k) probability tensor.
std::vector<ClassPrediction> classify_all(HeadKind head, const nn::Tensor<float>& probs);

/// Per-class probability of row i, expanding the binary output to [1-p, p].
std::vector<double> class_probabilities(HeadKind head, const nn::Tensor<float>& probs, std::size_t i);

struct PatientPrediction {
  int patient_id = 0;
  std::vector<std::size_t> votes;
  std::vector<double> mean_probability;
  int final_class = 0;
  bool tie = false;
};

/// Plurality over spectrum classes. Ties go to the tied class with the
/// higher mean probability, then the lowest index. `probabilities` holds one
/// per-class row per spectrum. Throws InvalidArgument on an empty list.
PatientPrediction patient_vote(int patient_id, const std::vector<int>& classes,
                               const std::vector<std::vector<double>>& probabilities, int n_classes);

/// Groups spectra by patient and votes; result sorted by patient id.
std::vector<PatientPrediction> vote_by_patient(HeadKind head, const std::vector<int>& patient_ids,
                                               const nn::Tensor<float>& probs);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

/// One-vs-rest counts for `cls`.
ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& truths, int cls);

/// Undefined ratios stay empty; they are never coerced to 0.
struct Metrics {
  ConfusionCounts counts;
  std::optional<double> accuracy;
  std::optional<double> specificity;
  std::optional<double> sensitivity;
};

Metrics metrics_from_counts(const ConfusionCounts& c);
Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& truths, int cls);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t defined = 0;
};

/// Mean and population std over the defined values; NaN when none is defined.
Summary summarize(const std::vector<std::optional<double>>& values);

struct MetricsRow {
  std::string set;          // dev or test
  std::string label;        // type or subtype
  std::string class_name;
  std::string granularity;  // spectrum or patient
  Summary accuracy;
  Summary specificity;
  Summary sensitivity;
  std::size_t folds = 0;
};

/// Rows for every class of a head from per-fold metrics (outer index fold,
/// inner index class).
std::vector<MetricsRow> summarize_folds(const std::string& set, HeadKind head,
                                        const std::string& granularity,
                                        const std::vector<std::vector<Metrics>>& per_fold);

/// Columns: set,label,class,granularity,accuracy_mean,accuracy_std,
/// specificity_mean,specificity_std,sensitivity_mean,sensitivity_std,folds.
/// Undefined values are written as "nan".
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

struct PatientTableRow {
  std::string label;
  int patient_id = 0;
  std::string core;  // CA or AT
  std::string gt_class;
  std::vector<std::string> fold_predictions;
};

/// Columns: label,patient_id,core,gt_class,fold1..foldN.
void write_patient_table_csv(const std::vector<PatientTableRow>& rows, const std::filesystem::path& path);

struct HeadReport {
  HeadKind head = HeadKind::Type;
  /// dev and test rows at spectrum and patient granularity.
  std::vector<MetricsRow> rows;
  /// One row per test patient.
  std::vector<PatientTableRow> patients;
  /// Overall fraction correct on the test set, per fold model.
  std::vector<double> test_spectrum_accuracy;
  std::vector<double> test_patient_accuracy;
};

/// Evaluates fold models: model i was trained on plan.folds[fold_index[i]]
/// and is scored on that fold's dev set and on the shared test set.
HeadReport evaluate_head(const SpectraSet& set, const SplitPlan& plan, HeadKind head,
                         const std::vector<CarenetModel*>& models,
                         const std::vector<std::size_t>& fold_index);

}  // namespace carenet
