#include "carenet/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "carenet/error.hpp"

namespace carenet {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

// Drops a trailing comment that is not inside quotes.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

nlohmann::json scalar(const std::string& raw, const std::string& where) {
  const std::string v = trim(raw);
  if (v.empty()) throw InvalidArgument(where + ": empty value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') throw InvalidArgument(where + ": unterminated string");
    return v.substr(1, v.size() - 2);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  long long i = 0;
  auto ri = std::from_chars(v.data(), v.data() + v.size(), i);
  if (ri.ec == std::errc() && ri.ptr == v.data() + v.size()) return i;
  double d = 0.0;
  auto rd = std::from_chars(v.data(), v.data() + v.size(), d);
  if (rd.ec == std::errc() && rd.ptr == v.data() + v.size()) return d;
  return v;
}

nlohmann::json value(const std::string& raw, const std::string& where) {
  const std::string v = trim(raw);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw InvalidArgument(where + ": unterminated array");
    nlohmann::json arr = nlohmann::json::array();
    const std::string body = trim(std::string_view(v).substr(1, v.size() - 2));
    if (body.empty()) return arr;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) arr.push_back(scalar(item, where));
    return arr;
  }
  return scalar(v, where);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
  KeyValueConfig c;
  c.source_ = source;
  std::stringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw InvalidArgument(where + ": malformed section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      if (section.empty()) throw InvalidArgument(where + ": empty section name");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw InvalidArgument(where + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw InvalidArgument(where + ": missing key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (c.values_.count(full)) throw InvalidArgument(where + ": duplicate key '" + full + "'");
    c.values_[full] = value(t.substr(eq + 1), where);
  }
  return c;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void KeyValueConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InvalidArgument("override '" + assignment + "' is not key=value");
  const std::string key = trim(std::string_view(assignment).substr(0, eq));
  if (key.empty()) throw InvalidArgument("override '" + assignment + "' has no key");
  values_[key] = value(assignment.substr(eq + 1), "override " + key);
}

const nlohmann::json& KeyValueConfig::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw InvalidArgument("config key '" + key + "' is missing");
  used_.insert(key);
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const auto& v = at(key);
  if (!v.is_number()) throw InvalidArgument("config key '" + key + "' must be a number");
  return v.get<double>();
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  if (!has(key)) return fallback;
  const auto& v = at(key);
  if (!v.is_number_integer()) throw InvalidArgument("config key '" + key + "' must be an integer");
  return v.get<long long>();
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  if (!has(key)) return fallback;
  const auto& v = at(key);
  if (!v.is_string()) throw InvalidArgument("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> KeyValueConfig::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

void KeyValueConfig::require_all_used() const {
  const auto u = unused();
  if (u.empty()) return;
  std::string msg = "unknown config keys in " + source_ + ":";
  for (const auto& k : u) msg += " " + k;
  throw InvalidArgument(msg);
}

nlohmann::json KeyValueConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

namespace {

std::size_t non_negative(const KeyValueConfig& kv, const std::string& key, std::size_t fallback) {
  const long long v = kv.get_int(key, static_cast<long long>(fallback));
  if (v < 0) throw InvalidArgument("config key '" + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

std::uint64_t seed_value(const KeyValueConfig& kv, const std::string& key, std::uint64_t fallback) {
  const long long v = kv.get_int(key, static_cast<long long>(fallback));
  if (v < 0) throw InvalidArgument("config key '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

Band band_value(const KeyValueConfig& kv, const std::string& key) {
  const auto& v = kv.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw InvalidArgument("config key '" + key + "' must be [high, low]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

SynthConfig synth_config(const KeyValueConfig& kv, SynthConfig c) {
  const std::string p = "synth.";
  if (kv.has(p + "patients_per_subtype")) {
    const auto& v = kv.at(p + "patients_per_subtype");
    if (!v.is_array() || v.size() != 4) throw InvalidArgument("synth.patients_per_subtype needs 4 integers");
    for (std::size_t i = 0; i < 4; ++i) {
      if (!v[i].is_number_integer()) throw InvalidArgument("synth.patients_per_subtype needs 4 integers");
      c.patients_per_subtype[i] = v[i].get<int>();
    }
  }
  c.rows = non_negative(kv, p + "rows", c.rows);
  c.cols = non_negative(kv, p + "cols", c.cols);
  c.noise_sigma = kv.get_double(p + "noise_sigma", c.noise_sigma);
  c.baseline_max = kv.get_double(p + "baseline_max", c.baseline_max);
  c.baseline_order = static_cast<int>(kv.get_int(p + "baseline_order", c.baseline_order));
  c.scale_min = kv.get_double(p + "scale_min", c.scale_min);
  c.scale_max = kv.get_double(p + "scale_max", c.scale_max);
  c.class_separation = kv.get_double(p + "class_separation", c.class_separation);
  c.patient_jitter = kv.get_double(p + "patient_jitter", c.patient_jitter);
  c.pixel_jitter = kv.get_double(p + "pixel_jitter", c.pixel_jitter);
  c.tissue_paraffin_max = kv.get_double(p + "tissue_paraffin_max", c.tissue_paraffin_max);
  c.h2o_max = kv.get_double(p + "h2o_max", c.h2o_max);
  c.env_h2o_max = kv.get_double(p + "env_h2o_max", c.env_h2o_max);
  c.tissue_radius = kv.get_double(p + "tissue_radius", c.tissue_radius);
  c.paraffin_radius = kv.get_double(p + "paraffin_radius", c.paraffin_radius);
  c.spike_fraction = kv.get_double(p + "spike_fraction", c.spike_fraction);
  c.spike_factor = kv.get_double(p + "spike_factor", c.spike_factor);
  if (kv.has(p + "discriminative_band")) c.discriminative_band = band_value(kv, p + "discriminative_band");
  c.seed = seed_value(kv, p + "seed", c.seed);
  c.validate();
  return c;
}

PreprocessOptions preprocess_options(const KeyValueConfig& kv, PreprocessOptions o) {
  const std::string p = "preprocess.";
  if (kv.has(p + "biofingerprint")) o.biofingerprint = band_value(kv, p + "biofingerprint");
  o.outlier_pcs = non_negative(kv, p + "outlier_pcs", o.outlier_pcs);
  o.outlier_confidence = kv.get_double(p + "outlier_confidence", o.outlier_confidence);
  o.sg_window = non_negative(kv, p + "sg_window", o.sg_window);
  o.sg_order = non_negative(kv, p + "sg_order", o.sg_order);
  o.emsc.baseline_order = static_cast<int>(kv.get_int(p + "emsc_baseline_order", o.emsc.baseline_order));
  o.emsc.variance_threshold = kv.get_double(p + "emsc_variance_threshold", o.emsc.variance_threshold);
  o.emsc.max_interferent_components =
      non_negative(kv, p + "emsc_max_interferent_components", o.emsc.max_interferent_components);
  o.clustering.seed = seed_value(kv, p + "cluster_seed", o.clustering.seed);
  o.clustering.max_iter = static_cast<int>(kv.get_int(p + "cluster_max_iter", o.clustering.max_iter));
  if (!(o.outlier_confidence > 0.0 && o.outlier_confidence < 1.0)) {
    throw InvalidArgument("preprocess.outlier_confidence must be in (0, 1)");
  }
  return o;
}

TrainConfig train_config(const KeyValueConfig& kv, TrainConfig c) {
  const std::string p = "train.";
  c.epochs = non_negative(kv, p + "epochs", c.epochs);
  c.batch = non_negative(kv, p + "batch", c.batch);
  c.lr = kv.get_double(p + "lr", c.lr);
  c.init_seed = seed_value(kv, p + "init_seed", c.init_seed);
  c.shuffle_seed = seed_value(kv, p + "shuffle_seed", c.shuffle_seed);
  c.undersample_seed = seed_value(kv, p + "undersample_seed", c.undersample_seed);
  c.max_per_class = non_negative(kv, p + "max_per_class", c.max_per_class);
  c.dev_max_per_class = non_negative(kv, p + "dev_max_per_class", c.dev_max_per_class);
  c.plateau.patience = non_negative(kv, p + "patience", c.plateau.patience);
  c.plateau.factor = kv.get_double(p + "lr_factor", c.plateau.factor);
  c.plateau.min_lr = kv.get_double(p + "min_lr", c.plateau.min_lr);
  c.plateau.initial_lr = c.lr;
  return c;
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json j = {{"patients_per_subtype", c.patients_per_subtype},
                      {"rows", c.rows},
                      {"cols", c.cols},
                      {"axis", {{"start", c.axis_start}, {"end", c.axis_end}, {"points", c.axis_points}}},
                      {"noise_sigma", c.noise_sigma},
                      {"baseline_max", c.baseline_max},
                      {"baseline_order", c.baseline_order},
                      {"scale_min", c.scale_min},
                      {"scale_max", c.scale_max},
                      {"class_separation", c.class_separation},
                      {"patient_jitter", c.patient_jitter},
                      {"pixel_jitter", c.pixel_jitter},
                      {"tissue_paraffin_max", c.tissue_paraffin_max},
                      {"h2o_max", c.h2o_max},
                      {"env_h2o_max", c.env_h2o_max},
                      {"tissue_radius", c.tissue_radius},
                      {"paraffin_radius", c.paraffin_radius},
                      {"spike_fraction", c.spike_fraction},
                      {"spike_factor", c.spike_factor},
                      {"seed", c.seed}};
  if (c.discriminative_band) {
    j["discriminative_band"] = {c.discriminative_band->high_wn, c.discriminative_band->low_wn};
  }
  return j;
}

nlohmann::json to_json(const PreprocessOptions& o) {
  return {{"biofingerprint", {o.biofingerprint.high_wn, o.biofingerprint.low_wn}},
          {"outlier_pcs", o.outlier_pcs},
          {"outlier_confidence", o.outlier_confidence},
          {"sg_window", o.sg_window},
          {"sg_order", o.sg_order},
          {"emsc_baseline_order", o.emsc.baseline_order},
          {"emsc_variance_threshold", o.emsc.variance_threshold},
          {"emsc_max_interferent_components", o.emsc.max_interferent_components},
          {"cluster_seed", o.clustering.seed},
          {"cluster_max_iter", o.clustering.max_iter}};
}

}  // namespace carenet
