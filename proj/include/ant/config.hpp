#pragma once

#include <map>
#include <string>
#include <vector>

#include "ant/dataset.hpp"
#include "ant/training.hpp"

namespace ant {

/// Flat `key = value` file. `#` starts a comment; blank lines ignored.
class KeyValues {
 public:
  static KeyValues from_file(const std::string& path);
  static KeyValues from_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

  /// Keys present in the file but never consumed by the caller.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
};

SyntheticWorldConfig parse_synth_config(const KeyValues& kv);

struct TrainSettings {
  TrainConfig train;
  ModelSettings models;
};

TrainSettings parse_train_config(const KeyValues& kv);

}  // namespace ant
