#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "carenet/config.hpp"
#include "carenet/dataset.hpp"
#include "carenet/error.hpp"
#include "carenet/evaluation.hpp"
#include "carenet/gradcam.hpp"
#include "carenet/pipeline.hpp"
#include "carenet/synthgen.hpp"

#ifndef CARENET_VERSION
#define CARENET_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace carenet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  unsigned jobs = 1;
  std::string config;
  std::string out_dir = "runs";
  std::string run_name;
  std::vector<std::string> overrides;
};

struct Resolved {
  KeyValueConfig kv;
  SynthConfig synth;
  PreprocessOptions preprocess;
  TrainConfig train;
};

Resolved resolve_config(const Globals& g) {
  try {
    Resolved r;
    if (!g.config.empty()) {
      if (!fs::exists(g.config)) throw UsageError("config file " + g.config + " does not exist");
      r.kv = KeyValueConfig::load(g.config);
    }
    for (const auto& o : g.overrides) r.kv.set(o);
    r.synth = synth_config(r.kv);
    r.preprocess = preprocess_options(r.kv);
    r.train = train_config(r.kv);
    r.kv.require_all_used();
    return r;
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return s.str();
}

fs::path make_run_dir(const Globals& g, const std::string& command) {
  fs::path dir = fs::path(g.out_dir) /
                 (g.run_name.empty() ? timestamp() + "-" + command + "-seed" + std::to_string(g.seed) : g.run_name);
  if (g.run_name.empty()) {
    const fs::path base = dir;
    for (int i = 1; fs::exists(dir); ++i) dir = base.string() + "-" + std::to_string(i);
  }
  fs::create_directories(dir);
  return dir;
}

class Manifest {
 public:
  Manifest(std::string command, const Globals& g, const Resolved& r, fs::path run_dir, int argc, char** argv)
      : run_dir_(std::move(run_dir)), start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["argv"] = std::vector<std::string>(argv, argv + argc);
    j_["version"] = CARENET_VERSION;
    j_["started_utc"] = timestamp();
    j_["seed"] = g.seed;
    j_["jobs"] = g.jobs;
    j_["config"] = {{"file", g.config},
                    {"values", r.kv.to_json()},
                    {"synth", to_json(r.synth)},
                    {"preprocess", to_json(r.preprocess)},
                    {"train", to_json(r.train)}};
    j_["inputs"] = json::array();
    j_["outputs"] = json::array();
  }

  void input(const fs::path& p) { j_["inputs"].push_back(p.string()); }
  void output(const fs::path& p) { j_["outputs"].push_back(fs::relative(p, run_dir_).generic_string()); }
  json& operator[](const std::string& k) { return j_[k]; }

  void write() {
    j_["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(run_dir_ / "manifest.json");
    out << j_.dump(2) << '\n';
  }

 private:
  fs::path run_dir_;
  std::chrono::steady_clock::time_point start_;
  json j_;
};

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string core_file(int core_id) {
  std::ostringstream s;
  s << "core_" << std::setw(4) << std::setfill('0') << core_id << ".crns";
  return s.str();
}

// ---------------------------------------------------------------- synth

int cmd_synth(const Globals& g, int argc, char** argv) {
  Resolved r = resolve_config(g);
  if (g.seed_given) r.synth.seed = g.seed;
  const fs::path dir = make_run_dir(g, "synth");
  Manifest m("synth", g, r, dir, argc, argv);
  m["config"]["synth"] = to_json(r.synth);

  const SynthPanel panel = gen_panel(r.synth);
  json patients = json::array();
  for (const auto& p : panel.patients) {
    const auto& ca = panel.cores[p.ca_core].cube;
    const auto& at = panel.cores[p.at_core].cube;
    patients.push_back({{"patient_id", p.patient_id},
                        {"subtype", std::string(to_string(p.subtype))},
                        {"ca_core", core_file(ca.core_id)},
                        {"at_core", core_file(at.core_id)}});
  }
  for (const auto& c : panel.cores) {
    const fs::path path = dir / "cores" / core_file(c.cube.core_id);
    write_cube(c.cube, path, c.ground_truth, {{"spiked_pixels", c.spiked_pixels}});
    m.output(path);
  }
  write_cube(panel.environment, dir / "environment.crns");
  m.output(dir / "environment.crns");
  write_json({{"patients", patients}, {"synth", to_json(r.synth)}}, dir / "panel.json");
  m.output(dir / "panel.json");
  m["cores"] = panel.cores.size();
  m.write();
  std::cout << "synth: " << panel.cores.size() << " cores, " << panel.patients.size() << " patients -> "
            << dir.string() << '\n';
  return kExitOk;
}

// ----------------------------------------------------------- preprocess

int cmd_preprocess(const Globals& g, const std::string& input, int argc, char** argv) {
  const Resolved r = resolve_config(g);
  const fs::path in(input);
  if (!fs::is_directory(in / "cores") || !fs::exists(in / "environment.crns")) {
    throw InvalidArgument(input + " is not a synth run directory (needs cores/ and environment.crns)");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in / "cores")) {
    if (e.path().extension() == ".crns") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidArgument("no cube files under " + (in / "cores").string());

  const fs::path dir = make_run_dir(g, "preprocess");
  Manifest m("preprocess", g, r, dir, argc, argv);
  m.input(in / "environment.crns");
  for (const auto& f : files) m.input(f);

  const EnvironmentSpectra env = preprocess_environment(read_cube(in / "environment.crns").cube, r.preprocess);

  struct Slot {
    std::optional<CoreResult> result;
    std::string error;
  };
  std::vector<Slot> slots(files.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      try {
        slots[i].result = preprocess_core(read_cube(files[i]).cube, env, r.preprocess);
      } catch (const Error& e) {
        slots[i].error = e.what();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(g.jobs, static_cast<unsigned>(files.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SpectraSet set;
  set.axis = env.axis;
  json counts = json::object();
  json failed = json::array();
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string name = files[i].filename().string();
    if (!slots[i].result) {
      std::cerr << "preprocess: " << name << " skipped: " << slots[i].error << '\n';
      failed.push_back({{"file", name}, {"error", slots[i].error}});
      continue;
    }
    counts[name] = to_json(slots[i].result->counts);
    set.append(slots[i].result->spectra);
  }
  if (set.size() == 0) throw DegenerateInput("preprocessing produced no spectra");
  const fs::path out = dir / "spectra.crns";
  write_spectraset(set, out, {{"preprocess", to_json(r.preprocess)}});
  m.output(out);
  write_json({{"environment", to_json(env.counts)}, {"cores", counts}, {"failed", failed}}, dir / "counts.json");
  m.output(dir / "counts.json");
  m["spectra"] = set.size();
  m["failed_cores"] = failed;
  m.write();
  std::cout << "preprocess: " << set.size() << " spectra from " << files.size() - failed.size() << "/"
            << files.size() << " cores -> " << out.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train

std::vector<HeadKind> heads_from(const std::string& s) {
  if (s == "both") return {HeadKind::Type, HeadKind::Subtype};
  try {
    return {parse_head(s)};
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

int cmd_train(const Globals& g, const std::string& input, const std::string& head, std::size_t n_folds,
              int argc, char** argv) {
  const Resolved r = resolve_config(g);
  const auto heads = heads_from(head);
  if (n_folds < 1) throw UsageError("--folds must be >= 1");
  const SpectraSet set = read_spectraset(input);
  const SplitPlan plan = make_split(patients_from_set(set), g.seed, n_folds);

  const fs::path dir = make_run_dir(g, "train");
  Manifest m("train", g, r, dir, argc, argv);
  m.input(input);
  write_json(to_json(plan), dir / "split.json");
  m.output(dir / "split.json");
  m["split"] = to_json(plan);

  json summary = json::object();
  for (HeadKind h : heads) {
    TrainConfig base = r.train;
    base.head = h;
    base.architecture.head = h;
    base.architecture.input_length = set.points();
    const std::string hn(to_string(h));
    json folds = json::array();
    cross_validate(set, plan, base, g.seed, {}, [&](FoldOutcome& o) {
      auto& res = o.result;
      const fs::path ckpt = dir / hn / ("fold" + std::to_string(o.fold + 1) + ".crnm");
      CheckpointMeta meta;
      meta.seed = g.seed;
      meta.fold = static_cast<int>(o.fold + 1);
      meta.epoch = static_cast<int>(res.best_epoch);
      meta.extra = {{"best_dev_loss", res.best_dev_loss}, {"train", to_json(o.config)}};
      save_checkpoint(res.best_model, ckpt, meta);
      m.output(ckpt);
      const fs::path hist = dir / hn / ("history_fold" + std::to_string(o.fold + 1) + ".csv");
      write_history_csv(res.history, hist);
      m.output(hist);
      const auto& last = res.history.back();
      folds.push_back({{"fold", o.fold + 1},
                       {"best_epoch", res.best_epoch},
                       {"best_dev_loss", res.best_dev_loss},
                       {"final_dev_accuracy", last.dev_accuracy}});
      std::cout << "train " << hn << " fold " << o.fold + 1 << ": best epoch " << res.best_epoch << ", dev loss "
                << res.best_dev_loss << ", dev accuracy " << last.dev_accuracy << '\n';
    });
    summary[hn] = folds;
  }
  m["folds"] = summary;
  m.write();
  std::cout << "train: checkpoints in " << dir.string() << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------- eval

struct FoldModels {
  std::vector<CarenetModel> models;
  std::vector<std::size_t> fold_index;
  std::vector<double> dev_loss;
  std::vector<fs::path> paths;
};

FoldModels load_folds(const fs::path& train_dir, HeadKind head) {
  FoldModels f;
  const fs::path hd = train_dir / std::string(to_string(head));
  if (!fs::is_directory(hd)) throw InvalidArgument("no " + std::string(to_string(head)) + " checkpoints in " + train_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(hd)) {
    if (e.path().extension() == ".crnm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidArgument("no checkpoints in " + hd.string());
  for (const auto& p : files) {
    LoadedCheckpoint c = load_checkpoint(p, head);
    if (c.meta.fold < 1) throw FormatError(p.string() + ": checkpoint has no fold number");
    f.fold_index.push_back(static_cast<std::size_t>(c.meta.fold - 1));
    f.dev_loss.push_back(c.meta.extra.value("best_dev_loss", std::numeric_limits<double>::infinity()));
    f.models.push_back(std::move(c.model));
    f.paths.push_back(p);
  }
  return f;
}

SplitPlan read_split(const fs::path& train_dir) {
  const json j = read_json(train_dir / "split.json");
  try {
    SplitPlan p;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.test = j.at("test").get<std::vector<int>>();
    p.type_test_ca = j.at("type_test_ca").get<std::vector<int>>();
    p.type_test_at = j.at("type_test_at").get<std::vector<int>>();
    p.always_train = j.at("always_train").get<std::vector<int>>();
    for (const auto& f : j.at("folds")) {
      p.folds.push_back({f.at("train").get<std::vector<int>>(), f.at("dev").get<std::vector<int>>()});
    }
    return p;
  } catch (const json::exception& e) {
    throw FormatError("split.json: " + std::string(e.what()));
  }
}

int cmd_eval(const Globals& g, const std::string& input, const std::string& train_dir, const std::string& head,
             int argc, char** argv) {
  const Resolved r = resolve_config(g);
  const auto heads = heads_from(head);
  const SpectraSet set = read_spectraset(input);
  const SplitPlan plan = read_split(train_dir);
  const fs::path dir = make_run_dir(g, "eval");
  Manifest m("eval", g, r, dir, argc, argv);
  m.input(input);
  m.input(fs::path(train_dir) / "split.json");

  std::vector<MetricsRow> rows;
  std::vector<PatientTableRow> table;
  json acc = json::object();
  for (HeadKind h : heads) {
    FoldModels f = load_folds(train_dir, h);
    for (const auto& p : f.paths) m.input(p);
    std::vector<CarenetModel*> ptrs;
    for (auto& model : f.models) ptrs.push_back(&model);
    const HeadReport rep = evaluate_head(set, plan, h, ptrs, f.fold_index);
    rows.insert(rows.end(), rep.rows.begin(), rep.rows.end());
    table.insert(table.end(), rep.patients.begin(), rep.patients.end());
    acc[std::string(to_string(h))] = {{"test_spectrum_accuracy", rep.test_spectrum_accuracy},
                                      {"test_patient_accuracy", rep.test_patient_accuracy}};
  }
  write_metrics_csv(rows, dir / "metrics.csv");
  m.output(dir / "metrics.csv");
  write_patient_table_csv(table, dir / "patients.csv");
  m.output(dir / "patients.csv");
  m["accuracy"] = acc;
  m.write();
  std::cout << "eval: " << acc.dump() << "\neval: results in " << dir.string() << '\n';
  return kExitOk;
}

// -------------------------------------------------------------- gradcam

int cmd_gradcam(const Globals& g, const std::string& input, const std::string& train_dir, const std::string& head,
                double threshold, int argc, char** argv) {
  const Resolved r = resolve_config(g);
  const auto heads = heads_from(head);
  const SpectraSet set = read_spectraset(input);
  const SplitPlan plan = read_split(train_dir);
  const fs::path dir = make_run_dir(g, "gradcam");
  Manifest m("gradcam", g, r, dir, argc, argv);
  m.input(input);
  json bands = json::object();
  for (HeadKind h : heads) {
    FoldModels f = load_folds(train_dir, h);
    const auto best = static_cast<std::size_t>(
        std::min_element(f.dev_loss.begin(), f.dev_loss.end()) - f.dev_loss.begin());
    m.input(f.paths[best]);
    const LabeledData d = make_labeled(set, test_indices(set, plan, h), h);

    // The binary head shows a single map, the CA activation.
    std::vector<int> classes;
    if (h == HeadKind::Type) {
      classes = {1};
    } else {
      for (int c = 0; c < kNumSubtypes; ++c) classes.push_back(c);
    }
    std::vector<Heatmap1D> maps;
    std::vector<std::string> names;
    const std::string hn(to_string(h));
    for (int c : classes) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.label[i] == c) rows.push_back(i);
      }
      if (rows.empty()) throw InvalidArgument("no test spectra of class " + class_name(h, c));
      nn::Tensor<float> x({rows.size(), d.x.dim(1), 1});
      for (std::size_t k = 0; k < rows.size(); ++k) {
        std::copy_n(d.x.data() + rows[k] * d.x.dim(1), d.x.dim(1), x.data() + k * d.x.dim(1));
      }
      const auto raw = gradcam_batch(f.models[best], x, std::vector<int>(rows.size(), c));
      Heatmap1D hm = class_average(raw, c, set.axis);
      hm.provenance = f.paths[best].string();
      if (hm.degenerate) std::cerr << "gradcam: " << hn << " " << class_name(h, c) << " heatmap is constant\n";
      const fs::path csv = dir / ("heatmap_" + hn + "_" + class_name(h, c) + ".csv");
      write_heatmap_csv(hm, csv);
      m.output(csv);
      json b = json::array();
      for (const auto& t : top_bands(hm.values, set.axis, threshold)) {
        b.push_back({{"high_wn", t.high_wn}, {"low_wn", t.low_wn}, {"peak", t.peak}});
      }
      bands[hn][class_name(h, c)] = {{"samples", rows.size()}, {"degenerate", hm.degenerate}, {"bands", b}};
      names.push_back(hn + " " + class_name(h, c));
      maps.push_back(std::move(hm));
    }
    const fs::path svg = dir / ("heatmaps_" + hn + ".svg");
    write_heatmap_svg(maps, names, threshold, svg);
    m.output(svg);
    bands[hn]["checkpoint"] = f.paths[best].string();
  }
  write_json(bands, dir / "bands.json");
  m.output(dir / "bands.json");
  m["threshold"] = threshold;
  m.write();
  std::cout << "gradcam: heatmaps in " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FTIR spectral classification toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for generation, splitting and training")->each([&](const std::string&) {
    g.seed_given = true;
  });
  app.add_option("--jobs", g.jobs, "Worker threads for preprocessing")->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "key = value configuration file");
  app.add_option("--set", g.overrides, "Override a config key, e.g. train.epochs=10");
  app.add_option("--out-dir", g.out_dir, "Parent directory for run directories");
  app.add_option("--run-name", g.run_name, "Run directory name (default: timestamp and seed)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic tissue panel");

  std::string input;
  auto* pre = app.add_subcommand("preprocess", "Preprocess a synthetic or stored panel");
  pre->add_option("--input", input, "synth run directory")->required();

  std::string head = "both";
  std::size_t folds = 4;
  auto* train = app.add_subcommand("train", "Cross-validated training");
  train->add_option("--input", input, "Spectra container")->required();
  train->add_option("--head", head, "type, subtype or both");
  train->add_option("--folds", folds, "Number of dev folds");

  std::string train_dir;
  auto* eval = app.add_subcommand("eval", "Metrics and patient table for trained folds");
  eval->add_option("--input", input, "Spectra container")->required();
  eval->add_option("--train-dir", train_dir, "train run directory")->required();
  eval->add_option("--head", head, "type, subtype or both");

  double threshold = 0.7;
  auto* cam = app.add_subcommand("gradcam", "Class-averaged Grad-CAM heatmaps from the best fold");
  cam->add_option("--input", input, "Spectra container")->required();
  cam->add_option("--train-dir", train_dir, "train run directory")->required();
  cam->add_option("--head", head, "type, subtype or both");
  cam->add_option("--threshold", threshold, "Importance threshold for band summaries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(g, argc, argv);
    if (*pre) return cmd_preprocess(g, input, argc, argv);
    if (*train) return cmd_train(g, input, head, folds, argc, argv);
    if (*eval) return cmd_eval(g, input, train_dir, head, argc, argv);
    if (*cam) return cmd_gradcam(g, input, train_dir, head, threshold, argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
