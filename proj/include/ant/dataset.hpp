#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ant/geo.hpp"

namespace ant {

struct ParseError : DataError {
  using DataError::DataError;
};

/// Wire form of one check-in row, before id interning.
struct CheckInRecord {
  std::string user_id;
  std::string poi_id;
  double lat = 0.0;
  double lon = 0.0;
  std::string category;
  std::int64_t arrival_ts = 0;
  std::optional<std::int64_t> departure_ts;
};

/// Trip plus the corpus-level metadata persisted in trips.jsonl.
struct CorpusTrip {
  Trip trip;
  std::int64_t start_ts = 0;
  double budget_s = 0.0;
};

struct Split {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
};

struct Corpus {
  std::vector<Poi> pois;
  std::vector<CorpusTrip> trips;
  TimeModel time_model;
  Split split;
  int n_users = 0;
  int n_categories = 0;

  World world() const { return World(pois); }
};

struct SyntheticWorldConfig {
  int n_pois = 100;
  int n_categories = 4;
  double grid_extent_m = 4000.0;
  /// Peakedness of the planted category-transition matrix: rows are
  /// Dirichlet draws with extra weight on one preferred next category.
  /// +infinity plants an exact point mass (deterministic category walk).
  double transition_concentration = 8.0;
  std::vector<double> mean_duration_s = {600.0, 900.0, 1200.0, 1500.0};
  int n_trips = 2000;
  double budget_min_s = 3600.0;
  double budget_max_s = 10800.0;
  std::uint64_t rng_seed = 1;
};

/// CSV with header user_id,poi_id,lat,lon,category,arrival_ts,departure_ts.
/// departure_ts may be empty. Throws ParseError naming the offending line.
std::vector<CheckInRecord> parse_checkins(const std::string& path);

/// Fills missing departures: consecutive check-ins close enough to belong to
/// one trip take the next arrival; trip-final check-ins get arrival +
/// last_stop_s. A pair is treated as same-trip when
/// next_arrival - (arrival + last_stop_s) <= gap_s, which makes this
/// consistent with the departure-based rule in split_into_trips.
/// Records must be grouped per user and sorted by arrival.
std::vector<CheckInRecord> estimate_departures(std::vector<CheckInRecord> records,
                                               double last_stop_s = 1800.0,
                                               double gap_s = 18000.0);

enum class SplitMode { kGap, kCalendarDay };

/// Groups of whole check-ins per trip; every input record lands in exactly
/// one group.
struct TripRecords {
  std::string user_id;
  std::vector<CheckInRecord> records;
};

/// Gap mode: a new trip starts when arrival_{k+1} - departure_k > gap_s.
/// Calendar-day mode: one trip per (user, local day at utc_offset_s).
std::vector<TripRecords> split_into_trips(const std::vector<CheckInRecord>& records,
                                          SplitMode mode = SplitMode::kGap,
                                          double gap_s = 18000.0,
                                          std::int64_t utc_offset_s = 0);

/// Interning tables built while converting wire records to dense ids.
struct IdMaps {
  std::vector<std::string> users;
  std::vector<std::string> pois;
  std::vector<std::string> categories;
};

/// Converts record-trips into Trips with dense integer ids. Consecutive
/// duplicate check-ins at one POI merge (earliest arrival, latest departure);
/// later non-consecutive repeats are dropped so the no-repeat invariant
/// holds.
std::vector<CorpusTrip> finalize_trips(const std::vector<TripRecords>& record_trips,
                                       IdMaps& maps);

/// Removes POIs visited by fewer than min_users_per_poi distinct users from
/// every trip, then drops trips shorter than min_len. Single pass.
std::vector<CorpusTrip> filter_corpus(const std::vector<CorpusTrip>& trips,
                                      int min_len = 3,
                                      int min_users_per_poi = 5);

/// Sorts by start timestamp (stable) and cuts floor(0.8 n) / floor(0.1 n) /
/// remainder. Throws DataError for fewer than 10 trips.
Split chronological_split(const std::vector<CorpusTrip>& trips);

/// Full ingest pipeline: records -> corpus directory content.
Corpus build_corpus_from_records(const std::vector<CheckInRecord>& raw,
                                 SplitMode mode,
                                 double gap_s = 18000.0,
                                 std::int64_t utc_offset_s = 0,
                                 double walk_speed = 2.0,
                                 double last_stop_s = 1800.0);

Corpus generate_synthetic_world(const SyntheticWorldConfig& cfg);

/// Corpus directory: pois.csv, trips.jsonl, time_model.csv, split.json.
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

/// Training query for a real trip: budget is the trip's own time cost with
/// 5% slack so the demonstration itself stays feasible.
TripQuery training_query(const CorpusTrip& t, const World& world, const TimeModel& tm);
/// Evaluation query: exact trip time, no slack.
TripQuery evaluation_query(const CorpusTrip& t, const World& world, const TimeModel& tm);

}  // namespace ant
