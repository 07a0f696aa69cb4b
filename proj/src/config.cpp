#include "ant/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ant {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyValues KeyValues::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

KeyValues KeyValues::from_string(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    kv.values_[key] = value;
  }
  return kv;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "inf") return HUGE_VAL;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': not a number: " + it->second);
  }
}

long long KeyValues::get_int(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': not an integer: " + it->second);
  }
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ParseError("config key '" + key + "': expected true/false: " + it->second);
}

std::vector<double> KeyValues::get_doubles(const std::string& key,
                                           std::vector<double> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw ParseError("config key '" + key + "': not a number list: " + it->second);
    }
  }
  if (out.empty()) throw ParseError("config key '" + key + "': empty list");
  return out;
}

std::vector<std::string> KeyValues::unknown_keys(const std::vector<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
  return out;
}

SyntheticWorldConfig parse_synth_config(const KeyValues& kv) {
  SyntheticWorldConfig cfg;
  cfg.n_pois = static_cast<int>(kv.get_int("n_pois", cfg.n_pois));
  cfg.n_categories = static_cast<int>(kv.get_int("n_categories", cfg.n_categories));
  cfg.grid_extent_m = kv.get_double("grid_extent_m", cfg.grid_extent_m);
  cfg.transition_concentration =
      kv.get_double("transition_concentration", cfg.transition_concentration);
  cfg.mean_duration_s = kv.get_doubles("mean_duration_s", cfg.mean_duration_s);
  cfg.n_trips = static_cast<int>(kv.get_int("n_trips", cfg.n_trips));
  auto budgets = kv.get_doubles("budget_range_s", {cfg.budget_min_s, cfg.budget_max_s});
  if (budgets.size() != 2) throw ParseError("budget_range_s must be 'min,max'");
  cfg.budget_min_s = budgets[0];
  cfg.budget_max_s = budgets[1];
  cfg.rng_seed = static_cast<std::uint64_t>(kv.get_int("rng_seed", cfg.rng_seed));
  return cfg;
}

TrainSettings parse_train_config(const KeyValues& kv) {
  TrainSettings s;
  const std::string preset = kv.get_string("preset", "desk");
  if (preset == "paper") {
    s.models.gen = GeneratorConfig::paper();
    s.models.disc = DiscriminatorConfig::paper();
    s.train.batch_size = 512;
  } else if (preset != "desk") {
    throw ParseError("unknown preset: " + preset + " (expected desk or paper)");
  }

  s.train.batch_size = static_cast<int>(kv.get_int("batch_size", s.train.batch_size));
  s.train.pretrain_epochs = static_cast<int>(kv.get_int("pretrain_epochs", s.train.pretrain_epochs));
  s.train.adv_epochs = static_cast<int>(kv.get_int("adv_epochs", s.train.adv_epochs));
  s.train.batches_per_epoch =
      static_cast<int>(kv.get_int("batches_per_epoch", s.train.batches_per_epoch));
  s.train.lr_pretrain = kv.get_double("lr_pretrain", s.train.lr_pretrain);
  s.train.lr_adv = kv.get_double("lr_adv", s.train.lr_adv);
  s.train.baseline_decay = kv.get_double("baseline_decay", s.train.baseline_decay);
  s.train.baseline_enabled = kv.get_bool("baseline_enabled", s.train.baseline_enabled);
  s.train.teacher_forcing = kv.get_bool("teacher_forcing", s.train.teacher_forcing);
  s.train.rng_seed = static_cast<std::uint64_t>(kv.get_int("rng_seed", s.train.rng_seed));
  s.train.n_candidates = static_cast<int>(kv.get_int("n_candidates", s.train.n_candidates));
  s.train.disc_pretrain_epochs =
      static_cast<int>(kv.get_int("disc_pretrain_epochs", s.train.disc_pretrain_epochs));

  s.models.gen.d = static_cast<int>(kv.get_int("d", s.models.gen.d));
  s.models.gen.heads = static_cast<int>(kv.get_int("heads", s.models.gen.heads));
  s.models.gen.layers = static_cast<int>(kv.get_int("layers", s.models.gen.layers));
  s.models.gen.ffn_inner = static_cast<int>(kv.get_int("ffn_inner", s.models.gen.ffn_inner));
  s.models.gen.d_poi = static_cast<int>(kv.get_int("d_poi", s.models.gen.d_poi));
  s.models.gen.d_cat = static_cast<int>(kv.get_int("d_cat", s.models.gen.d_cat));
  s.models.gen.d_user = static_cast<int>(kv.get_int("d_user", s.models.gen.d_user));
  s.models.gen.max_len = static_cast<int>(kv.get_int("max_len", s.models.gen.max_len));
  s.models.disc.d_poi = static_cast<int>(kv.get_int("disc_d_poi", s.models.disc.d_poi));
  s.models.disc.hidden = static_cast<int>(kv.get_int("disc_hidden", s.models.disc.hidden));
  s.models.disc.head_inner =
      static_cast<int>(kv.get_int("disc_head_inner", s.models.disc.head_inner));

  if (s.train.lr_pretrain <= 0.0 || s.train.lr_adv <= 0.0)
    throw ParseError("learning rates must be positive");
  if (s.train.baseline_decay < 0.0 || s.train.baseline_decay >= 1.0)
    throw ParseError("baseline_decay must be in [0, 1)");
  return s;
}

}  // namespace ant
