#include "carenet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "carenet/nn/fpenv.hpp"
#include "carenet/nn/loss.hpp"

namespace carenet {

// ------------------------------------------------------------ preprocessing

nlohmann::json to_json(const StageCounts& c) {
  return {{"pixels", c.pixels},
          {"tissue", c.tissue},
          {"paraffin", c.paraffin},
          {"after_outlier_1", c.after_outlier_1},
          {"after_smoothing", c.after_smoothing},
          {"after_emsc", c.after_emsc},
          {"after_minmax", c.after_minmax},
          {"after_outlier_2", c.after_outlier_2},
          {"notes", c.notes}};
}

namespace {

RowMatrix gather_truncated(const HyperCube& cube, const std::vector<std::size_t>& pixels,
                          std::size_t first, std::size_t last) {
  RowMatrix m(static_cast<Eigen::Index>(pixels.size()), static_cast<Eigen::Index>(last - first + 1));
  for (std::size_t r = 0; r < pixels.size(); ++r) {
    const auto px = cube.pixel(pixels[r]);
    for (std::size_t j = first; j <= last; ++j) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j - first)) = px[j];
    }
  }
  return m;
}

// Runs one outlier pass, keeping `pixels` aligned with the rows. Identical
// or too few spectra skip the pass with a note.
void outlier_pass(RowMatrix& data, std::vector<std::size_t>& pixels, const PreprocessOptions& opts,
                  std::vector<std::string>& notes, const char* label) {
  try {
    OutlierResult r = remove_outliers(data, opts.outlier_pcs, opts.outlier_confidence);
    std::vector<std::size_t> kept_pixels;
    for (std::size_t i : r.kept_indices) kept_pixels.push_back(pixels[i]);
    data = std::move(r.kept);
    pixels = std::move(kept_pixels);
  } catch (const DegenerateInput& e) {
    notes.push_back(std::string(label) + " skipped: " + e.what());
  } catch (const InvalidArgument& e) {
    notes.push_back(std::string(label) + " skipped: " + e.what());
  }
}

void smooth_rows(RowMatrix& data, const SavitzkyGolay& sg) {
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    sg.apply_inplace({data.row(i).data(), static_cast<std::size_t>(data.cols())});
  }
}

}  // namespace

EnvironmentSpectra preprocess_environment(const HyperCube& env, const PreprocessOptions& opts) {
  env.validate();
  const auto [first, last] = env.axis.band_indices(opts.biofingerprint.high_wn,
                                                   opts.biofingerprint.low_wn);
  EnvironmentSpectra out;
  out.axis = env.axis.sub_axis(first, last);
  std::vector<std::size_t> pixels(env.pixels());
  std::iota(pixels.begin(), pixels.end(), 0);
  out.counts.pixels = pixels.size();
  RowMatrix data = gather_truncated(env, pixels, first, last);
  outlier_pass(data, pixels, opts, out.counts.notes, "outlier removal");
  out.counts.after_outlier_1 = static_cast<std::size_t>(data.rows());
  smooth_rows(data, SavitzkyGolay(opts.sg_window, opts.sg_order));
  out.counts.after_smoothing = static_cast<std::size_t>(data.rows());
  out.spectra = std::move(data);
  return out;
}

CoreResult preprocess_core(const HyperCube& cube, const EnvironmentSpectra& h2o,
                           const PreprocessOptions& opts) {
  cube.validate();
  CoreResult out;
  StageCounts& counts = out.counts;
  counts.pixels = cube.pixels();
  const std::string core = "core " + std::to_string(cube.core_id);

  Selection tissue = select_tissue(cube, opts.clustering);
  if (tissue.flagged) counts.notes.push_back(tissue.reason);
  if (tissue.mask.count() == 0) throw DegenerateInput(core + ": empty tissue set (" + tissue.reason + ")");
  Selection paraffin = select_paraffin(cube, tissue.mask, opts.clustering);
  if (paraffin.flagged) counts.notes.push_back(paraffin.reason);
  if (paraffin.mask.count() == 0) {
    throw DegenerateInput(core + ": no paraffin spectra for the EMSC model (" + paraffin.reason + ")");
  }
  out.tissue = tissue.mask;
  out.paraffin = paraffin.mask;

  const auto [first, last] = cube.axis.band_indices(opts.biofingerprint.high_wn,
                                                    opts.biofingerprint.low_wn);
  const WavenumberAxis axis = cube.axis.sub_axis(first, last);
  if (!axis.matches(h2o.axis)) throw InvalidArgument(core + ": environment spectra are on a different axis");

  std::vector<std::size_t> pixels;
  std::vector<std::size_t> paraffin_pixels;
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    if (tissue.mask[p]) pixels.push_back(p);
    if (paraffin.mask[p]) paraffin_pixels.push_back(p);
  }
  counts.tissue = pixels.size();
  counts.paraffin = paraffin_pixels.size();

  const SavitzkyGolay sg(opts.sg_window, opts.sg_order);
  RowMatrix par = gather_truncated(cube, paraffin_pixels, first, last);
  smooth_rows(par, sg);

  RowMatrix data = gather_truncated(cube, pixels, first, last);
  outlier_pass(data, pixels, opts, counts.notes, "first outlier removal");
  counts.after_outlier_1 = pixels.size();
  smooth_rows(data, sg);
  counts.after_smoothing = pixels.size();

  const Eigen::VectorXd reference = data.colwise().mean().transpose();
  const EmscModel emsc = emsc_build_model({reference.data(), static_cast<std::size_t>(reference.size())},
                                          par, h2o.spectra, axis, opts.emsc);
  std::vector<std::size_t> keep;
  RowMatrix corrected(data.rows(), data.cols());
  std::size_t dropped_emsc = 0;
  std::size_t dropped_minmax = 0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    EmscResult r;
    try {
      r = emsc_correct({data.row(i).data(), static_cast<std::size_t>(data.cols())}, emsc);
    } catch (const DegenerateInput&) {
      ++dropped_emsc;
      continue;
    }
    try {
      minmax_normalize_inplace(r.corrected);
    } catch (const DegenerateInput&) {
      ++dropped_minmax;
      continue;
    }
    const auto row = static_cast<Eigen::Index>(keep.size());
    corrected.row(row) = Eigen::Map<const Eigen::RowVectorXd>(r.corrected.data(), data.cols());
    keep.push_back(static_cast<std::size_t>(i));
  }
  counts.after_emsc = pixels.size() - dropped_emsc;
  counts.after_minmax = keep.size();
  if (dropped_emsc) counts.notes.push_back(std::to_string(dropped_emsc) + " spectra dropped by EMSC");
  if (dropped_minmax) counts.notes.push_back(std::to_string(dropped_minmax) + " constant spectra dropped");
  data = corrected.topRows(static_cast<Eigen::Index>(keep.size()));
  std::vector<std::size_t> kept_pixels;
  for (std::size_t i : keep) kept_pixels.push_back(pixels[i]);
  pixels = std::move(kept_pixels);

  outlier_pass(data, pixels, opts, counts.notes, "second outlier removal");
  counts.after_outlier_2 = pixels.size();
  if (pixels.empty()) throw DegenerateInput(core + ": every tissue spectrum was discarded");

  SpectraSet& set = out.spectra;
  set.axis = axis;
  std::vector<float> buf(axis.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    for (std::size_t j = 0; j < buf.size(); ++j) {
      buf[j] = std::clamp(static_cast<float>(data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))),
                          0.0f, 1.0f);
    }
    set.append(buf, cube.patient_id, cube.core_id, static_cast<int>(pixels[i] / cube.cols),
               static_cast<int>(pixels[i] % cube.cols), cube.core_type, cube.subtype);
  }
  out.pixels = std::move(pixels);
  return out;
}

// ----------------------------------------------------------------- protocol

std::vector<PatientRecord> patients_from_set(const SpectraSet& set) {
  std::map<int, PatientRecord> by_id;
  for (std::size_t i = 0; i < set.size(); ++i) {
    PatientRecord& r = by_id[set.patient_id[i]];
    r.patient_id = set.patient_id[i];
    const auto type = static_cast<CoreType>(set.core_type[i]);
    if (type == CoreType::CA) {
      if (r.ca_core >= 0 && r.ca_core != set.core_id[i]) {
        throw InvalidArgument("patient " + std::to_string(r.patient_id) + " has more than one CA core");
      }
      r.ca_core = set.core_id[i];
      r.subtype = static_cast<Subtype>(set.subtype[i]);
    } else {
      if (r.at_core >= 0 && r.at_core != set.core_id[i]) {
        throw InvalidArgument("patient " + std::to_string(r.patient_id) + " has more than one AT core");
      }
      r.at_core = set.core_id[i];
    }
  }
  std::vector<PatientRecord> out;
  for (auto& [id, r] : by_id) {
    if (r.ca_core < 0) {
      throw InvalidArgument("patient " + std::to_string(id) + " has no CA spectra, subtype unknown");
    }
    out.push_back(r);
  }
  return out;
}

nlohmann::json to_json(const SplitPlan& p) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : p.folds) folds.push_back({{"train", f.train}, {"dev", f.dev}});
  return {{"seed", p.seed},
          {"test", p.test},
          {"type_test_ca", p.type_test_ca},
          {"type_test_at", p.type_test_at},
          {"always_train", p.always_train},
          {"folds", folds}};
}

SplitPlan make_split(const std::vector<PatientRecord>& patients, std::uint64_t seed,
                     std::size_t n_folds) {
  if (n_folds < 1) throw InvalidArgument("make_split needs at least one fold");
  std::array<std::vector<int>, kNumSubtypes> by_subtype;
  std::set<int> seen;
  for (const auto& p : patients) {
    if (p.subtype == Subtype::None) throw InvalidArgument("patient without subtype");
    if (!seen.insert(p.patient_id).second) throw InvalidArgument("duplicate patient id");
    by_subtype[static_cast<std::size_t>(p.subtype)].push_back(p.patient_id);
  }
  for (int s = 0; s < kNumSubtypes; ++s) {
    if (by_subtype[static_cast<std::size_t>(s)].empty()) {
      throw InvalidArgument(std::string("make_split: no patients with subtype ") +
                            std::string(to_string(static_cast<Subtype>(s))));
    }
  }

  std::mt19937_64 rng(seed);
  SplitPlan plan;
  plan.seed = seed;
  for (auto& ids : by_subtype) {
    std::sort(ids.begin(), ids.end());
    std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
    const std::size_t k = pick(rng);
    plan.test.push_back(ids[k]);
    ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(k));
    std::shuffle(ids.begin(), ids.end(), rng);
  }

  std::vector<int> order = plan.test;
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t half = order.size() / 2;
  plan.type_test_ca.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
  plan.type_test_at.assign(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());

  std::vector<std::vector<int>> groups(n_folds + 1);
  std::size_t next = 0;
  for (const auto& ids : by_subtype) {
    for (int id : ids) {
      groups[next].push_back(id);
      next = (next + 1) % groups.size();
    }
  }
  // Smallest group (highest index on ties) always trains; the others become
  // dev sets in ascending size.
  std::vector<std::size_t> gi(groups.size());
  std::iota(gi.begin(), gi.end(), 0);
  std::stable_sort(gi.begin(), gi.end(), [&](std::size_t a, std::size_t b) {
    if (groups[a].size() != groups[b].size()) return groups[a].size() < groups[b].size();
    return a > b;
  });
  plan.always_train = groups[gi[0]];
  std::vector<std::size_t> dev_groups(gi.begin() + 1, gi.end());
  std::stable_sort(dev_groups.begin(), dev_groups.end(), [&](std::size_t a, std::size_t b) {
    if (groups[a].size() != groups[b].size()) return groups[a].size() < groups[b].size();
    return a < b;
  });

  std::vector<int> pool;
  for (const auto& g : groups) pool.insert(pool.end(), g.begin(), g.end());
  std::sort(pool.begin(), pool.end());
  for (std::size_t g : dev_groups) {
    FoldPlan f;
    f.dev = groups[g];
    std::sort(f.dev.begin(), f.dev.end());
    for (int id : pool) {
      if (!std::binary_search(f.dev.begin(), f.dev.end(), id)) f.train.push_back(id);
    }
    plan.folds.push_back(std::move(f));
  }
  std::sort(plan.always_train.begin(), plan.always_train.end());
  return plan;
}

std::vector<std::size_t> undersample_balance(const std::vector<int>& labels, int n_classes,
                                             std::uint64_t seed, std::size_t max_per_class) {
  if (n_classes < 1) throw InvalidArgument("undersample_balance needs at least one class");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) {
      throw InvalidArgument("undersample_balance: label out of range");
    }
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  std::size_t target = std::numeric_limits<std::size_t>::max();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) {
      throw InvalidArgument("undersample_balance: class " + std::to_string(c) + " is empty");
    }
    target = std::min(target, by_class[c].size());
  }
  if (max_per_class > 0) target = std::min(target, max_per_class);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (auto& idx : by_class) {
    if (idx.size() > target) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(target);
      std::sort(idx.begin(), idx.end());
    }
    out.insert(out.end(), idx.begin(), idx.end());
  }
  return out;
}

int head_label(const SpectraSet& set, std::size_t i, HeadKind head) {
  if (head == HeadKind::Type) return set.core_type[i];
  return set.core_type[i] == static_cast<std::uint8_t>(CoreType::CA) ? set.subtype[i] : -1;
}

LabeledData make_labeled(const SpectraSet& set, const std::vector<std::size_t>& indices,
                         HeadKind head) {
  const std::size_t n = indices.size();
  const std::size_t p = set.points();
  const std::size_t k = head == HeadKind::Type ? 1 : kNumSubtypes;
  LabeledData d;
  d.x = nn::Tensor<float>({n, p, 1});
  d.y = nn::Tensor<float>({n, k});
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = indices[r];
    const auto s = set.spectrum(i);
    std::copy(s.begin(), s.end(), d.x.data() + r * p);
    const LabelEncoding enc =
        encode_labels(static_cast<CoreType>(set.core_type[i]), static_cast<Subtype>(set.subtype[i]));
    if (head == HeadKind::Type) {
      d.y[r] = enc.binary;
    } else {
      if (!enc.one_hot) throw InvalidArgument("subtype head needs CA spectra only");
      std::copy(enc.one_hot->begin(), enc.one_hot->end(), d.y.data() + r * k);
    }
    d.label.push_back(head_label(set, i, head));
    d.patient.push_back(set.patient_id[i]);
    d.core.push_back(set.core_id[i]);
  }
  return d;
}

std::vector<std::size_t> indices_for_patients(const SpectraSet& set, const std::vector<int>& patients,
                                              HeadKind head) {
  const std::set<int> wanted(patients.begin(), patients.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!wanted.count(set.patient_id[i])) continue;
    if (head == HeadKind::Subtype && set.core_type[i] != static_cast<std::uint8_t>(CoreType::CA)) continue;
    out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> test_indices(const SpectraSet& set, const SplitPlan& plan, HeadKind head) {
  if (head == HeadKind::Subtype) return indices_for_patients(set, plan.test, head);
  const std::set<int> ca(plan.type_test_ca.begin(), plan.type_test_ca.end());
  const std::set<int> at(plan.type_test_at.begin(), plan.type_test_at.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const bool is_ca = set.core_type[i] == static_cast<std::uint8_t>(CoreType::CA);
    if ((is_ca && ca.count(set.patient_id[i])) || (!is_ca && at.count(set.patient_id[i]))) {
      out.push_back(i);
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch < 1 || !(lr > 0)) {
    throw InvalidArgument("training needs epochs >= 1, batch >= 1 and lr > 0");
  }
  if (architecture.head != head) throw InvalidArgument("architecture head differs from training head");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"head", to_string(c.head)},
          {"epochs", c.epochs},
          {"batch", c.batch},
          {"lr", c.lr},
          {"init_seed", c.init_seed},
          {"shuffle_seed", c.shuffle_seed},
          {"undersample_seed", c.undersample_seed},
          {"max_per_class", c.max_per_class},
          {"dev_max_per_class", c.dev_max_per_class},
          {"plateau",
           {{"patience", c.plateau.patience},
            {"factor", c.plateau.factor},
            {"min_lr", c.plateau.min_lr},
            {"min_delta", c.plateau.min_delta}}},
          {"architecture", to_json(c.architecture)}};
}

namespace {

nn::Tensor<float> gather_rows(const nn::Tensor<float>& t, const std::vector<std::size_t>& rows,
                              std::size_t begin, std::size_t end) {
  std::vector<std::size_t> shape = t.shape();
  const std::size_t stride = t.size() / shape[0];
  shape[0] = end - begin;
  nn::Tensor<float> out(shape);
  for (std::size_t r = begin; r < end; ++r) {
    std::copy_n(t.data() + rows[r] * stride, stride, out.data() + (r - begin) * stride);
  }
  return out;
}

double accuracy(HeadKind head, const nn::Tensor<float>& probs, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  const std::size_t k = probs.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int cls = 0;
    if (head == HeadKind::Type) {
      cls = probs[i] >= 0.5f ? 1 : 0;
    } else {
      const float* row = probs.data() + i * k;
      cls = static_cast<int>(std::max_element(row, row + k) - row);
    }
    if (cls == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace

double mean_loss(HeadKind head, const nn::Tensor<float>& probs, const nn::Tensor<float>& targets) {
  return head == HeadKind::Type ? nn::bce_loss(probs, targets) : nn::cce_loss(probs, targets);
}

nn::Tensor<float> predict(CarenetModel& model, const nn::Tensor<float>& x, std::size_t batch) {
  nn::ScopedFlushDenormals ftz;
  const std::size_t n = x.dim(0);
  nn::Tensor<float> out({n, model.config().outputs()});
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  for (std::size_t b = 0; b < n; b += batch) {
    const std::size_t e = std::min(n, b + batch);
    const auto p = model.forward(gather_rows(x, rows, b, e));
    std::copy_n(p.data(), p.size(), out.data() + b * out.dim(1));
  }
  return out;
}

TrainResult train_fold(const TrainConfig& config, const LabeledData& train, const LabeledData& dev) {
  config.validate();
  if (train.size() == 0) throw InvalidArgument("training set is empty");
  if (dev.size() == 0) throw InvalidArgument("dev set is empty");
  nn::ScopedFlushDenormals ftz;

  const int n_classes = config.head == HeadKind::Type ? 2 : kNumSubtypes;
  for (int c = 0; c < n_classes; ++c) {
    if (std::find(train.label.begin(), train.label.end(), c) == train.label.end()) {
      const std::string name = config.head == HeadKind::Type ? (c == 1 ? "CA" : "AT")
                                                             : std::string(to_string(static_cast<Subtype>(c)));
      throw InvalidArgument("training set has no " + name + " spectra");
    }
  }
  const std::vector<std::size_t> balanced =
      undersample_balance(train.label, n_classes, config.undersample_seed, config.max_per_class);
  std::vector<std::size_t> dev_rows;
  if (config.dev_max_per_class > 0) {
    std::vector<int> present;
    for (int l : dev.label) {
      if (std::find(present.begin(), present.end(), l) == present.end()) present.push_back(l);
    }
    std::sort(present.begin(), present.end());
    std::vector<int> remapped;
    for (int l : dev.label) {
      remapped.push_back(static_cast<int>(std::lower_bound(present.begin(), present.end(), l) - present.begin()));
    }
    dev_rows = undersample_balance(remapped, static_cast<int>(present.size()),
                                   config.undersample_seed + 1, config.dev_max_per_class);
  } else {
    dev_rows.resize(dev.size());
    std::iota(dev_rows.begin(), dev_rows.end(), 0);
  }
  const nn::Tensor<float> dev_x = gather_rows(dev.x, dev_rows, 0, dev_rows.size());
  const nn::Tensor<float> dev_y = gather_rows(dev.y, dev_rows, 0, dev_rows.size());
  std::vector<int> dev_labels;
  for (std::size_t r : dev_rows) dev_labels.push_back(dev.label[r]);

  CarenetModel model = build_carenet<float>(config.architecture, config.init_seed);
  nn::Adam<float> adam(model.network().parameters(), {config.lr, 0.9, 0.999, 1e-8});
  nn::PlateauOptions popts = config.plateau;
  popts.initial_lr = config.lr;
  nn::PlateauScheduler scheduler(popts);

  TrainResult result{model.cast<float>(), model.cast<float>(), 0,
                     std::numeric_limits<double>::infinity(), {}};
  std::mt19937_64 shuffle_rng(config.shuffle_seed);
  std::vector<std::size_t> order = balanced;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    const double lr = adam.lr();
    for (std::size_t b = 0; b < order.size(); b += config.batch) {
      const std::size_t e = std::min(order.size(), b + config.batch);
      const auto xb = gather_rows(train.x, order, b, e);
      const auto yb = gather_rows(train.y, order, b, e);
      adam.zero_grad();
      const auto probs = model.forward(xb);
      const double loss = mean_loss(config.head, probs, yb);
      if (!std::isfinite(loss) || !probs.all_finite()) {
        throw NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch starting at " + std::to_string(b));
      }
      model.network().backward_range(nn::logit_grad(probs, yb), model.logit_layer());
      adam.step();
      loss_sum += loss * static_cast<double>(e - b);
      seen += e - b;
    }

    const auto dev_probs = predict(model, dev_x);
    const double dev_loss = mean_loss(config.head, dev_probs, dev_y);
    if (!std::isfinite(dev_loss)) {
      throw NumericalError("training diverged: non-finite dev loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(
        {epoch, loss_sum / static_cast<double>(seen), dev_loss, accuracy(config.head, dev_probs, dev_labels), lr});
    if (dev_loss < result.best_dev_loss) {
      result.best_dev_loss = dev_loss;
      result.best_epoch = epoch;
      result.best_model.set_flat_parameters(model.flat_parameters());
    }
    adam.set_lr(scheduler.step(dev_loss));
  }
  result.model.set_flat_parameters(model.flat_parameters());
  return result;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << std::setprecision(17) << "epoch,train_loss,dev_loss,dev_accuracy,lr\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << h.train_loss << ',' << h.dev_loss << ',' << h.dev_accuracy << ',' << h.lr
        << '\n';
  }
}

}  // namespace carenet

namespace carenet {

TrainConfig fold_config(const TrainConfig& base, std::uint64_t seed, std::size_t fold) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), 0x666f6c64u};
  std::array<std::uint32_t, 6> words{};
  seq.generate(words.begin(), words.end());
  const auto join = [&](std::size_t i) {
    return (static_cast<std::uint64_t>(words[2 * i]) << 32) | words[2 * i + 1];
  };
  TrainConfig c = base;
  c.init_seed = base.init_seed ^ join(0);
  c.shuffle_seed = base.shuffle_seed ^ join(1);
  c.undersample_seed = base.undersample_seed ^ join(2);
  return c;
}

CrossValidation cross_validate(const SpectraSet& set, const SplitPlan& plan, const TrainConfig& base,
                               std::uint64_t seed, const std::vector<std::size_t>& folds,
                               const std::function<void(FoldOutcome&)>& on_fold) {
  CrossValidation cv;
  cv.head = base.head;
  cv.plan = plan;
  std::vector<std::size_t> todo = folds;
  if (todo.empty()) {
    todo.resize(plan.folds.size());
    std::iota(todo.begin(), todo.end(), 0);
  }
  for (std::size_t f : todo) {
    if (f >= plan.folds.size()) throw InvalidArgument("fold " + std::to_string(f + 1) + " does not exist");
    const auto train_idx = indices_for_patients(set, plan.folds[f].train, base.head);
    const auto dev_idx = indices_for_patients(set, plan.folds[f].dev, base.head);
    if (train_idx.empty() || dev_idx.empty()) {
      throw InvalidArgument("fold " + std::to_string(f + 1) + " has no " + std::string(to_string(base.head)) +
                            " spectra in its train or dev set");
    }
    const TrainConfig config = fold_config(base, seed, f);
    FoldOutcome o{f, train_fold(config, make_labeled(set, train_idx, base.head), make_labeled(set, dev_idx, base.head)),
                  config};
    if (on_fold) on_fold(o);
    cv.folds.push_back(std::move(o));
  }
  return cv;
}

}  // namespace carenet
