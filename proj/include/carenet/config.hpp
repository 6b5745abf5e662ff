#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carenet/pipeline.hpp"
#include "carenet/synthgen.hpp"

namespace carenet {

/// TOML-style subset: `[section]` headers, `key = value` lines and `#`
/// comments. Values are numbers, true/false, quoted or bare strings, or flat
/// `[a, b, ...]` arrays. Keys are stored as "section.key".
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  /// Applies a "section.key=value" override.
  void set(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const nlohmann::json& at(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  /// Keys never read through the getters.
  std::vector<std::string> unused() const;
  /// Throws InvalidArgument naming every unread key.
  void require_all_used() const;

  nlohmann::json to_json() const;

 private:
  std::map<std::string, nlohmann::json> values_;
  mutable std::set<std::string> used_;
  std::string source_;
};

SynthConfig synth_config(const KeyValueConfig& kv, SynthConfig base = {});
PreprocessOptions preprocess_options(const KeyValueConfig& kv, PreprocessOptions base = {});
TrainConfig train_config(const KeyValueConfig& kv, TrainConfig base = {});

nlohmann::json to_json(const SynthConfig& c);
nlohmann::json to_json(const PreprocessOptions& o);

}  // namespace carenet
