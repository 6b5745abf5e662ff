#include "carenet/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "carenet/error.hpp"
#include "carenet/labels.hpp"

namespace carenet {

std::string class_name(HeadKind head, int cls) {
  if (cls < 0 || cls >= head_classes(head)) {
    throw InvalidArgument("class index " + std::to_string(cls) + " out of range");
  }
  if (head == HeadKind::Type) return cls == 1 ? "CA" : "AT";
  return std::string(to_string(static_cast<Subtype>(cls)));
}

int head_classes(HeadKind head) { return head == HeadKind::Type ? 2 : kNumSubtypes; }

ClassPrediction classify_binary(double p) { return {p >= 0.5 ? 1 : 0, false}; }

ClassPrediction classify_probs(std::span<const float> probs) {
  if (probs.empty()) throw InvalidArgument("classify_probs: empty probability vector");
  ClassPrediction r;
  float best = probs[0];
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > best) {
      best = probs[i];
      r.cls = static_cast<int>(i);
      r.tie = false;
    } else if (probs[i] == best) {
      r.tie = true;
    }
  }
  return r;
}

std::vector<ClassPrediction> classify_all(HeadKind head, const nn::Tensor<float>& probs) {
  const std::size_t n = probs.dim(0);
  const std::size_t k = probs.dim(1);
  const std::size_t expected = head == HeadKind::Type ? 1 : kNumSubtypes;
  if (k != expected) throw InvalidArgument("classify_all: output width does not match head");
  std::vector<ClassPrediction> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = head == HeadKind::Type ? classify_binary(probs[i])
                                    : classify_probs({probs.data() + i * k, k});
  }
  return out;
}

std::vector<double> class_probabilities(HeadKind head, const nn::Tensor<float>& probs, std::size_t i) {
  const std::size_t k = probs.dim(1);
  if (head == HeadKind::Type) return {1.0 - probs[i], probs[i]};
  return std::vector<double>(probs.data() + i * k, probs.data() + (i + 1) * k);
}

PatientPrediction patient_vote(int patient_id, const std::vector<int>& classes,
                               const std::vector<std::vector<double>>& probabilities, int n_classes) {
  if (classes.empty()) throw InvalidArgument("patient_vote: no spectra for patient " + std::to_string(patient_id));
  if (probabilities.size() != classes.size()) {
    throw InvalidArgument("patient_vote: class and probability counts differ");
  }
  const auto k = static_cast<std::size_t>(n_classes);
  PatientPrediction r;
  r.patient_id = patient_id;
  r.votes.assign(k, 0);
  r.mean_probability.assign(k, 0.0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= n_classes) throw InvalidArgument("patient_vote: class out of range");
    if (probabilities[i].size() != k) throw InvalidArgument("patient_vote: probability row has wrong width");
    ++r.votes[static_cast<std::size_t>(classes[i])];
    for (std::size_t c = 0; c < k; ++c) r.mean_probability[c] += probabilities[i][c];
  }
  for (double& m : r.mean_probability) m /= static_cast<double>(classes.size());

  const std::size_t top = *std::max_element(r.votes.begin(), r.votes.end());
  std::vector<std::size_t> tied;
  for (std::size_t c = 0; c < k; ++c) {
    if (r.votes[c] == top) tied.push_back(c);
  }
  r.tie = tied.size() > 1;
  std::size_t best = tied[0];
  for (std::size_t c : tied) {
    if (r.mean_probability[c] > r.mean_probability[best]) best = c;
  }
  r.final_class = static_cast<int>(best);
  return r;
}

std::vector<PatientPrediction> vote_by_patient(HeadKind head, const std::vector<int>& patient_ids,
                                               const nn::Tensor<float>& probs) {
  if (patient_ids.size() != probs.dim(0)) throw InvalidArgument("vote_by_patient: length mismatch");
  const auto preds = classify_all(head, probs);
  std::map<int, std::pair<std::vector<int>, std::vector<std::vector<double>>>> groups;
  for (std::size_t i = 0; i < patient_ids.size(); ++i) {
    auto& g = groups[patient_ids[i]];
    g.first.push_back(preds[i].cls);
    g.second.push_back(class_probabilities(head, probs, i));
  }
  std::vector<PatientPrediction> out;
  for (const auto& [id, g] : groups) out.push_back(patient_vote(id, g.first, g.second, head_classes(head)));
  return out;
}

ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& truths, int cls) {
  if (predictions.size() != truths.size()) {
    throw InvalidArgument("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(truths.size()) + " truths");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const bool p = predictions[i] == cls;
    const bool t = truths[i] == cls;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Metrics metrics_from_counts(const ConfusionCounts& c) {
  Metrics m;
  m.counts = c;
  const auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  return m;
}

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& truths, int cls) {
  return metrics_from_counts(confusion(predictions, truths, cls));
}

Summary summarize(const std::vector<std::optional<double>>& values) {
  Summary s;
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++s.defined;
    }
  }
  if (s.defined == 0) {
    s.mean = s.std = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = sum / static_cast<double>(s.defined);
  double ss = 0.0;
  for (const auto& v : values) {
    if (v) ss += (*v - s.mean) * (*v - s.mean);
  }
  s.std = std::sqrt(ss / static_cast<double>(s.defined));
  return s;
}

std::vector<MetricsRow> summarize_folds(const std::string& set, HeadKind head,
                                        const std::string& granularity,
                                        const std::vector<std::vector<Metrics>>& per_fold) {
  const int k = head_classes(head);
  for (const auto& f : per_fold) {
    if (f.size() != static_cast<std::size_t>(k)) throw InvalidArgument("summarize_folds: wrong class count");
  }
  std::vector<MetricsRow> rows;
  for (int c = 0; c < k; ++c) {
    std::vector<std::optional<double>> acc, spec, sens;
    for (const auto& f : per_fold) {
      acc.push_back(f[static_cast<std::size_t>(c)].accuracy);
      spec.push_back(f[static_cast<std::size_t>(c)].specificity);
      sens.push_back(f[static_cast<std::size_t>(c)].sensitivity);
    }
    rows.push_back({set, std::string(to_string(head)), class_name(head, c), granularity, summarize(acc),
                    summarize(spec), summarize(sens), per_fold.size()});
  }
  return rows;
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  return out;
}

}  // namespace

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "set,label,class,granularity,accuracy_mean,accuracy_std,specificity_mean,specificity_std,"
         "sensitivity_mean,sensitivity_std,folds\n";
  for (const auto& r : rows) {
    out << r.set << ',' << r.label << ',' << r.class_name << ',' << r.granularity << ','
        << fmt(r.accuracy.mean) << ',' << fmt(r.accuracy.std) << ',' << fmt(r.specificity.mean) << ','
        << fmt(r.specificity.std) << ',' << fmt(r.sensitivity.mean) << ',' << fmt(r.sensitivity.std) << ','
        << r.folds << '\n';
  }
}

void write_patient_table_csv(const std::vector<PatientTableRow>& rows, const std::filesystem::path& path) {
  std::size_t folds = 0;
  for (const auto& r : rows) folds = std::max(folds, r.fold_predictions.size());
  auto out = open_csv(path);
  out << "label,patient_id,core,gt_class";
  for (std::size_t f = 0; f < folds; ++f) out << ",fold" << f + 1;
  out << '\n';
  for (const auto& r : rows) {
    out << r.label << ',' << r.patient_id << ',' << r.core << ',' << r.gt_class;
    for (std::size_t f = 0; f < folds; ++f) {
      out << ',' << (f < r.fold_predictions.size() ? r.fold_predictions[f] : "");
    }
    out << '\n';
  }
}

}  // namespace carenet

namespace carenet {

namespace {

struct Scored {
  std::vector<Metrics> spectrum;
  std::vector<Metrics> patient;
  std::vector<PatientPrediction> votes;
  std::vector<int> patient_truth;
  double spectrum_accuracy = 0.0;
  double patient_accuracy = 0.0;
};

Scored score(CarenetModel& model, const SpectraSet& set, const std::vector<std::size_t>& idx, HeadKind head) {
  if (idx.empty()) throw InvalidArgument("evaluation set is empty");
  const LabeledData d = make_labeled(set, idx, head);
  const auto probs = predict(model, d.x);
  const auto preds = classify_all(head, probs);
  std::vector<int> cls;
  for (const auto& p : preds) cls.push_back(p.cls);

  Scored s;
  // A patient contributes up to two cores with different type labels, so
  // the vote runs per core and is reported under the owning patient.
  s.votes = vote_by_patient(head, d.core, probs);
  std::map<int, std::pair<int, int>> owner;
  for (std::size_t i = 0; i < d.size(); ++i) owner[d.core[i]] = {d.patient[i], d.label[i]};
  std::vector<int> pcls;
  for (auto& v : s.votes) {
    pcls.push_back(v.final_class);
    s.patient_truth.push_back(owner.at(v.patient_id).second);
    v.patient_id = owner.at(v.patient_id).first;
  }
  for (int c = 0; c < head_classes(head); ++c) {
    s.spectrum.push_back(compute_metrics(cls, d.label, c));
    s.patient.push_back(compute_metrics(pcls, s.patient_truth, c));
  }
  std::size_t ok = 0;
  for (std::size_t i = 0; i < cls.size(); ++i) ok += cls[i] == d.label[i];
  s.spectrum_accuracy = static_cast<double>(ok) / static_cast<double>(cls.size());
  ok = 0;
  for (std::size_t i = 0; i < pcls.size(); ++i) ok += pcls[i] == s.patient_truth[i];
  s.patient_accuracy = static_cast<double>(ok) / static_cast<double>(pcls.size());
  return s;
}

}  // namespace

HeadReport evaluate_head(const SpectraSet& set, const SplitPlan& plan, HeadKind head,
                         const std::vector<CarenetModel*>& models,
                         const std::vector<std::size_t>& fold_index) {
  if (models.empty() || models.size() != fold_index.size()) {
    throw InvalidArgument("evaluate_head: one fold index per model is required");
  }
  for (const CarenetModel* m : models) {
    if (m->head() != head) throw InvalidArgument("evaluate_head: checkpoint head does not match the requested head");
  }
  const auto test_idx = test_indices(set, plan, head);
  if (test_idx.empty()) throw InvalidArgument("test set has no " + std::string(to_string(head)) + " spectra");

  HeadReport r;
  r.head = head;
  std::vector<std::vector<Metrics>> dev_s, dev_p, test_s, test_p;
  std::vector<Scored> tests;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (fold_index[i] >= plan.folds.size()) throw InvalidArgument("evaluate_head: fold index out of range");
    Scored dev = score(*models[i], set, indices_for_patients(set, plan.folds[fold_index[i]].dev, head), head);
    dev_s.push_back(dev.spectrum);
    dev_p.push_back(dev.patient);
    Scored test = score(*models[i], set, test_idx, head);
    test_s.push_back(test.spectrum);
    test_p.push_back(test.patient);
    r.test_spectrum_accuracy.push_back(test.spectrum_accuracy);
    r.test_patient_accuracy.push_back(test.patient_accuracy);
    tests.push_back(std::move(test));
  }
  const auto append = [&](const std::vector<MetricsRow>& rows) { r.rows.insert(r.rows.end(), rows.begin(), rows.end()); };
  append(summarize_folds("dev", head, "spectrum", dev_s));
  append(summarize_folds("dev", head, "patient", dev_p));
  append(summarize_folds("test", head, "spectrum", test_s));
  append(summarize_folds("test", head, "patient", test_p));

  const std::set<int> at_patients(plan.type_test_at.begin(), plan.type_test_at.end());
  const Scored& first = tests.front();
  for (std::size_t p = 0; p < first.votes.size(); ++p) {
    PatientTableRow row;
    row.label = std::string(to_string(head));
    row.patient_id = first.votes[p].patient_id;
    row.core = head == HeadKind::Type && at_patients.count(row.patient_id) ? "AT" : "CA";
    row.gt_class = class_name(head, first.patient_truth[p]);
    for (const Scored& t : tests) row.fold_predictions.push_back(class_name(head, t.votes[p].final_class));
    r.patients.push_back(std::move(row));
  }
  return r;
}

}  // namespace carenet
