#include "ant/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "ant/rng.hpp"
#include "json.hpp"

namespace ant {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, int line_no, const char* field) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad numeric field '" + field + "': " + s);
  }
}

std::int64_t parse_int(const std::string& s, int line_no, const char* field) {
  try {
    size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad integer field '" + field + "': " + s);
  }
}

int intern(std::vector<std::string>& table, std::unordered_map<std::string, int>& index,
           const std::string& key) {
  auto it = index.find(key);
  if (it != index.end()) return it->second;
  int id = static_cast<int>(table.size());
  table.push_back(key);
  index.emplace(key, id);
  return id;
}

}  // namespace

std::vector<CheckInRecord> parse_checkins(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open check-in file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header in " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string expected = "user_id,poi_id,lat,lon,category,arrival_ts,departure_ts";
  if (line != expected)
    throw ParseError("bad header in " + path + ": expected '" + expected + "'");

  std::vector<CheckInRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 7)
      throw ParseError("line " + std::to_string(line_no) + ": expected 7 fields, got " +
                       std::to_string(fields.size()));
    CheckInRecord r;
    r.user_id = fields[0];
    r.poi_id = fields[1];
    r.lat = parse_double(fields[2], line_no, "lat");
    r.lon = parse_double(fields[3], line_no, "lon");
    r.category = fields[4];
    r.arrival_ts = parse_int(fields[5], line_no, "arrival_ts");
    if (r.arrival_ts <= 0)
      throw ParseError("line " + std::to_string(line_no) + ": arrival_ts must be positive");
    if (!fields[6].empty()) {
      r.departure_ts = parse_int(fields[6], line_no, "departure_ts");
      if (*r.departure_ts < r.arrival_ts)
        throw ParseError("line " + std::to_string(line_no) + ": departure_ts before arrival_ts");
    }
    if (r.lat < -90.0 || r.lat > 90.0 || r.lon < -180.0 || r.lon > 180.0)
      throw ParseError("line " + std::to_string(line_no) + ": coordinates out of range");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<CheckInRecord> estimate_departures(std::vector<CheckInRecord> records,
                                               double last_stop_s, double gap_s) {
  for (size_t i = 0; i < records.size(); ++i) {
    CheckInRecord& r = records[i];
    if (r.departure_ts) continue;
    const bool has_next = i + 1 < records.size() && records[i + 1].user_id == r.user_id;
    if (has_next) {
      const double idle = static_cast<double>(records[i + 1].arrival_ts) -
                          (static_cast<double>(r.arrival_ts) + last_stop_s);
      if (idle <= gap_s) {
        r.departure_ts = records[i + 1].arrival_ts;
        continue;
      }
    }
    r.departure_ts = r.arrival_ts + static_cast<std::int64_t>(last_stop_s);
  }
  return records;
}

std::vector<TripRecords> split_into_trips(const std::vector<CheckInRecord>& records,
                                          SplitMode mode, double gap_s,
                                          std::int64_t utc_offset_s) {
  std::vector<TripRecords> trips;
  for (const CheckInRecord& r : records) {
    if (!r.departure_ts) throw DataError("split_into_trips: record without departure (run estimate_departures)");
    bool new_trip = trips.empty() || trips.back().user_id != r.user_id;
    if (!new_trip) {
      const CheckInRecord& prev = trips.back().records.back();
      if (mode == SplitMode::kGap) {
        new_trip = static_cast<double>(r.arrival_ts - *prev.departure_ts) > gap_s;
      } else {
        // floor division so pre-epoch local times bucket correctly
        auto day_of = [utc_offset_s](std::int64_t ts) {
          const std::int64_t shifted = ts + utc_offset_s;
          return shifted >= 0 ? shifted / 86400 : (shifted - 86399) / 86400;
        };
        new_trip = day_of(prev.arrival_ts) != day_of(r.arrival_ts);
      }
    }
    if (new_trip) trips.push_back(TripRecords{r.user_id, {}});
    trips.back().records.push_back(r);
  }
  return trips;
}

std::vector<CorpusTrip> finalize_trips(const std::vector<TripRecords>& record_trips, IdMaps& maps) {
  std::unordered_map<std::string, int> user_idx, poi_idx, cat_idx;
  for (size_t i = 0; i < maps.users.size(); ++i) user_idx[maps.users[i]] = static_cast<int>(i);
  for (size_t i = 0; i < maps.pois.size(); ++i) poi_idx[maps.pois[i]] = static_cast<int>(i);
  for (size_t i = 0; i < maps.categories.size(); ++i) cat_idx[maps.categories[i]] = static_cast<int>(i);

  std::vector<CorpusTrip> out;
  for (const TripRecords& tr : record_trips) {
    if (tr.records.empty()) continue;
    CorpusTrip ct;
    ct.trip.user = intern(maps.users, user_idx, tr.user_id);
    ct.start_ts = tr.records.front().arrival_ts;
    std::unordered_set<int> seen;
    for (const CheckInRecord& r : tr.records) {
      intern(maps.categories, cat_idx, r.category);
      const int pid = intern(maps.pois, poi_idx, r.poi_id);
      if (!ct.trip.pois.empty() && ct.trip.pois.back() == pid) continue;  // consecutive duplicate
      if (seen.count(pid)) continue;                                      // later repeat
      ct.trip.pois.push_back(pid);
      seen.insert(pid);
    }
    out.push_back(std::move(ct));
  }
  return out;
}

std::vector<CorpusTrip> filter_corpus(const std::vector<CorpusTrip>& trips, int min_len,
                                      int min_users_per_poi) {
  std::unordered_map<int, std::unordered_set<int>> users_by_poi;
  for (const CorpusTrip& t : trips)
    for (int p : t.trip.pois) users_by_poi[p].insert(t.trip.user);

  std::vector<CorpusTrip> out;
  for (const CorpusTrip& t : trips) {
    CorpusTrip kept = t;
    kept.trip.pois.clear();
    for (int p : t.trip.pois)
      if (static_cast<int>(users_by_poi[p].size()) >= min_users_per_poi) kept.trip.pois.push_back(p);
    if (static_cast<int>(kept.trip.pois.size()) >= min_len) out.push_back(std::move(kept));
  }
  return out;
}

Split chronological_split(const std::vector<CorpusTrip>& trips) {
  const size_t n = trips.size();
  if (n < 10) throw DataError("corpus too small to split: " + std::to_string(n) + " trips");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return trips[a].start_ts < trips[b].start_ts; });
  const size_t n_train = (n * 8) / 10;
  const size_t n_val = n / 10;
  Split s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

Corpus build_corpus_from_records(const std::vector<CheckInRecord>& raw, SplitMode mode,
                                 double gap_s, std::int64_t utc_offset_s, double walk_speed,
                                 double last_stop_s) {
  // sort per user by arrival, stable to keep file order among ties
  std::vector<CheckInRecord> records = raw;
  std::stable_sort(records.begin(), records.end(), [](const CheckInRecord& a, const CheckInRecord& b) {
    if (a.user_id != b.user_id) return a.user_id < b.user_id;
    return a.arrival_ts < b.arrival_ts;
  });
  records = estimate_departures(std::move(records), last_stop_s, gap_s);
  auto record_trips = split_into_trips(records, mode, gap_s, utc_offset_s);

  IdMaps maps;
  auto trips = finalize_trips(record_trips, maps);
  trips = filter_corpus(trips);

  Corpus corpus;
  corpus.n_users = static_cast<int>(maps.users.size());
  corpus.n_categories = static_cast<int>(maps.categories.size());

  // POI coordinates/categories from first occurrence in the record stream
  std::unordered_map<std::string, int> poi_idx, cat_idx;
  for (size_t i = 0; i < maps.pois.size(); ++i) poi_idx[maps.pois[i]] = static_cast<int>(i);
  for (size_t i = 0; i < maps.categories.size(); ++i) cat_idx[maps.categories[i]] = static_cast<int>(i);
  std::unordered_map<int, Poi> poi_by_id;
  std::unordered_map<int, std::vector<CheckIn>> checkins_by_poi;
  for (const CheckInRecord& r : records) {
    auto pit = poi_idx.find(r.poi_id);
    if (pit == poi_idx.end()) continue;  // never made it into a trip
    const int pid = pit->second;
    if (!poi_by_id.count(pid))
      poi_by_id[pid] = Poi{pid, Coords{r.lat, r.lon}, cat_idx.at(r.category)};
    checkins_by_poi[pid].push_back(CheckIn{0, pid, r.arrival_ts, *r.departure_ts});
  }

  // keep only POIs that survived filtering
  std::set<int> used;
  for (const CorpusTrip& t : trips)
    for (int p : t.trip.pois) used.insert(p);
  corpus.time_model = TimeModel(walk_speed);
  for (int pid : used) {
    corpus.pois.push_back(poi_by_id.at(pid));
    corpus.time_model.set_duration(pid, expected_duration(checkins_by_poi.at(pid)));
  }

  // budgets for real trips: trip time with 5% slack
  World world(corpus.pois);
  for (CorpusTrip& t : trips) t.budget_s = trip_time(t.trip, world, corpus.time_model) * 1.05;

  corpus.trips = std::move(trips);
  corpus.split = chronological_split(corpus.trips);
  return corpus;
}

Corpus generate_synthetic_world(const SyntheticWorldConfig& cfg) {
  if (cfg.n_categories < 2 || cfg.n_pois < cfg.n_categories)
    throw DataError("synthetic config requires n_pois >= n_categories >= 2");
  if (static_cast<int>(cfg.mean_duration_s.size()) != cfg.n_categories)
    throw DataError("mean_duration_s must list one duration per category");
  if (cfg.budget_min_s <= 0.0 || cfg.budget_max_s < cfg.budget_min_s)
    throw DataError("invalid budget range");

  Rng rng(derive_seed(cfg.rng_seed, 0x5e7a11));
  Corpus corpus;
  corpus.n_categories = cfg.n_categories;

  // POIs uniform in a square, mapped to degrees near the equator
  const double m_per_deg = kEarthRadiusM * 3.14159265358979323846 / 180.0;
  for (int i = 0; i < cfg.n_pois; ++i) {
    Poi p;
    p.id = i;
    p.coords.lat = rng.uniform(0.0, cfg.grid_extent_m) / m_per_deg;
    p.coords.lon = rng.uniform(0.0, cfg.grid_extent_m) / m_per_deg;
    p.category = static_cast<int>(rng.below(cfg.n_categories));
    corpus.pois.push_back(p);
  }
  // guarantee every category appears
  for (int c = 0; c < cfg.n_categories; ++c) corpus.pois[c].category = c;

  corpus.time_model = TimeModel(2.0);
  double min_duration = HUGE_VAL;
  for (const Poi& p : corpus.pois) {
    const double d = cfg.mean_duration_s[p.category] * rng.uniform(0.8, 1.2);
    corpus.time_model.set_duration(p.id, d);
    min_duration = std::min(min_duration, d);
  }
  if (cfg.budget_min_s < min_duration)
    throw DataError("infeasible budget range: min budget " + std::to_string(cfg.budget_min_s) +
                    " below cheapest POI duration " + std::to_string(min_duration));

  // planted row-stochastic category-transition matrix; each row prefers one
  // target category (cyclic shift), with sharpness set by the concentration
  const int K = cfg.n_categories;
  std::vector<std::vector<double>> trans(K, std::vector<double>(K, 0.0));
  for (int c = 0; c < K; ++c) {
    const int pref = (c + 1) % K;
    if (std::isinf(cfg.transition_concentration)) {
      trans[c][pref] = 1.0;
      continue;
    }
    std::gamma_distribution<double> base(1.0, 1.0);
    std::gamma_distribution<double> peaked(1.0 + cfg.transition_concentration, 1.0);
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
      trans[c][k] = (k == pref) ? peaked(rng.engine()) : base(rng.engine());
      total += trans[c][k];
    }
    for (int k = 0; k < K; ++k) trans[c][k] /= total;
  }

  World world(corpus.pois);
  // spatial decay scale of the planted walk; at 100 POIs this keeps the
  // effective next-POI choice set small enough to be learnable
  const double tau = cfg.grid_extent_m / 10.0;
  const int n_users = std::max(2, cfg.n_trips / 100);
  corpus.n_users = n_users;

  for (int i = 0; i < cfg.n_trips; ++i) {
    const double budget = rng.uniform(cfg.budget_min_s, cfg.budget_max_s);
    // start among POIs the budget can cover
    std::vector<int> starts;
    for (const Poi& p : corpus.pois)
      if (corpus.time_model.duration(p.id) <= budget) starts.push_back(p.id);
    const int start = starts[rng.below(starts.size())];

    CorpusTrip ct;
    ct.trip.user = static_cast<int>(rng.below(n_users));
    ct.trip.pois = {start};
    ct.start_ts = 1'600'000'000 + static_cast<std::int64_t>(i) * 3600;
    ct.budget_s = budget;

    std::vector<char> visited(cfg.n_pois, 0);
    visited[start] = 1;
    double cost = corpus.time_model.duration(start);
    int prev = start;
    while (true) {
      std::vector<int> feasible;
      std::vector<double> weight;
      double total = 0.0;
      const Poi& prev_poi = world.poi(prev);
      for (const Poi& p : corpus.pois) {
        if (visited[p.id]) continue;
        const double adv = advance_cost(prev_poi, p, corpus.time_model);
        if (cost + adv > budget) continue;
        const double w = trans[prev_poi.category][p.category] *
                         std::exp(-haversine_distance(prev_poi.coords, p.coords) / tau);
        if (w <= 0.0) continue;
        feasible.push_back(p.id);
        weight.push_back(w);
        total += w;
      }
      if (feasible.empty() || total <= 0.0) break;
      const double u = rng.uniform() * total;
      double acc = 0.0;
      int chosen = feasible.back();
      for (size_t k = 0; k < feasible.size(); ++k) {
        acc += weight[k];
        if (acc >= u) {
          chosen = feasible[k];
          break;
        }
      }
      cost += advance_cost(prev_poi, world.poi(chosen), corpus.time_model);
      visited[chosen] = 1;
      ct.trip.pois.push_back(chosen);
      prev = chosen;
    }
    corpus.trips.push_back(std::move(ct));
  }

  corpus.split = chronological_split(corpus.trips);
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(dir + "/pois.csv", std::ios::trunc);
    if (!out) throw DataError("cannot write " + dir + "/pois.csv");
    out << "id,lat,lon,category\n";
    char buf[128];
    for (const Poi& p : corpus.pois) {
      std::snprintf(buf, sizeof(buf), "%d,%.12f,%.12f,%d\n", p.id, p.coords.lat, p.coords.lon,
                    p.category);
      out << buf;
    }
  }
  {
    std::ofstream out(dir + "/trips.jsonl", std::ios::trunc);
    if (!out) throw DataError("cannot write " + dir + "/trips.jsonl");
    for (const CorpusTrip& t : corpus.trips) {
      nlohmann::json j;
      j["user"] = t.trip.user;
      j["poi_ids"] = t.trip.pois;
      j["start_ts"] = t.start_ts;
      j["budget_s"] = t.budget_s;
      out << j.dump() << "\n";
    }
  }
  {
    std::ofstream out(dir + "/time_model.csv", std::ios::trunc);
    if (!out) throw DataError("cannot write " + dir + "/time_model.csv");
    out << "poi_id,duration_s\n";
    std::vector<std::pair<int, double>> rows(corpus.time_model.durations().begin(),
                                             corpus.time_model.durations().end());
    std::sort(rows.begin(), rows.end());
    char buf[64];
    for (auto& [id, dur] : rows) {
      std::snprintf(buf, sizeof(buf), "%d,%.9f\n", id, dur);
      out << buf;
    }
  }
  {
    nlohmann::json j;
    j["train"] = corpus.split.train;
    j["validation"] = corpus.split.validation;
    j["test"] = corpus.split.test;
    j["n_users"] = corpus.n_users;
    j["n_categories"] = corpus.n_categories;
    j["walk_speed"] = corpus.time_model.walk_speed();
    std::ofstream out(dir + "/split.json", std::ios::trunc);
    if (!out) throw DataError("cannot write " + dir + "/split.json");
    out << j.dump(2) << "\n";
  }
}

Corpus load_corpus(const std::string& dir) {
  Corpus corpus;
  {
    std::ifstream in(dir + "/split.json");
    if (!in) throw DataError("cannot open " + dir + "/split.json");
    nlohmann::json j = nlohmann::json::parse(in);
    corpus.split.train = j.at("train").get<std::vector<int>>();
    corpus.split.validation = j.at("validation").get<std::vector<int>>();
    corpus.split.test = j.at("test").get<std::vector<int>>();
    corpus.n_users = j.at("n_users").get<int>();
    corpus.n_categories = j.at("n_categories").get<int>();
    corpus.time_model = TimeModel(j.at("walk_speed").get<double>());
  }
  {
    std::ifstream in(dir + "/pois.csv");
    if (!in) throw DataError("cannot open " + dir + "/pois.csv");
    std::string line;
    std::getline(in, line);
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto f = split_csv_line(line);
      if (f.size() != 4) throw ParseError(dir + "/pois.csv line " + std::to_string(line_no));
      Poi p;
      p.id = static_cast<int>(parse_int(f[0], line_no, "id"));
      p.coords.lat = parse_double(f[1], line_no, "lat");
      p.coords.lon = parse_double(f[2], line_no, "lon");
      p.category = static_cast<int>(parse_int(f[3], line_no, "category"));
      corpus.pois.push_back(p);
    }
  }
  {
    std::ifstream in(dir + "/time_model.csv");
    if (!in) throw DataError("cannot open " + dir + "/time_model.csv");
    std::string line;
    std::getline(in, line);
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto f = split_csv_line(line);
      if (f.size() != 2) throw ParseError(dir + "/time_model.csv line " + std::to_string(line_no));
      corpus.time_model.set_duration(static_cast<int>(parse_int(f[0], line_no, "poi_id")),
                                     parse_double(f[1], line_no, "duration_s"));
    }
  }
  {
    std::ifstream in(dir + "/trips.jsonl");
    if (!in) throw DataError("cannot open " + dir + "/trips.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line);
      CorpusTrip t;
      t.trip.user = j.at("user").get<int>();
      t.trip.pois = j.at("poi_ids").get<std::vector<int>>();
      t.start_ts = j.at("start_ts").get<std::int64_t>();
      t.budget_s = j.at("budget_s").get<double>();
      corpus.trips.push_back(std::move(t));
    }
  }
  return corpus;
}

TripQuery training_query(const CorpusTrip& t, const World& world, const TimeModel& tm) {
  return TripQuery{t.trip.user, t.trip.pois.front(), trip_time(t.trip, world, tm) * 1.05};
}

TripQuery evaluation_query(const CorpusTrip& t, const World& world, const TimeModel& tm) {
  return TripQuery{t.trip.user, t.trip.pois.front(), trip_time(t.trip, world, tm)};
}

}  // namespace ant
