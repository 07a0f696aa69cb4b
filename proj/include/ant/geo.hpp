#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace ant {

/// Base for data-level failures (bad input files, infeasible queries,
/// unknown ids). The CLI maps these to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Coords {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
};

struct Poi {
  int id = -1;
  Coords coords;
  int category = 0;
};

struct CheckIn {
  int user = -1;
  int poi = -1;
  std::int64_t arrival = 0;    // unix seconds
  std::int64_t departure = 0;  // unix seconds, >= arrival
};

/// Ordered POI sequence; first element is the start POI. No repeats.
struct Trip {
  int user = -1;
  std::vector<int> pois;

  size_t length() const { return pois.size(); }
};

struct TripQuery {
  int user = -1;
  int start = -1;
  double budget_s = 0.0;  // > 0
};

constexpr double kEarthRadiusM = 6371000.0;

/// Great-circle distance in meters (haversine, mean Earth radius).
double haversine_distance(const Coords& a, const Coords& b);

/// Mean stay duration per POI plus a shared walking speed; drives all trip
/// time-cost computations.
class TimeModel {
 public:
  TimeModel() = default;
  explicit TimeModel(double walk_speed_mps) : walk_speed_(walk_speed_mps) {}

  void set_duration(int poi, double seconds);
  double duration(int poi) const;  // throws DataError for unknown POIs
  bool has(int poi) const { return duration_by_poi_.count(poi) > 0; }
  double walk_speed() const { return walk_speed_; }
  size_t size() const { return duration_by_poi_.size(); }
  const std::unordered_map<int, double>& durations() const { return duration_by_poi_; }

 private:
  std::unordered_map<int, double> duration_by_poi_;
  double walk_speed_ = 2.0;  // m/s
};

/// Mean of (departure - arrival); all check-ins must be for one POI.
double expected_duration(const std::vector<CheckIn>& checkins_for_poi);

double transit_time(const Poi& from, const Poi& to, const TimeModel& tm);

/// Time to move on: duration of `next` plus transit from `prev`.
double advance_cost(const Poi& prev, const Poi& next, const TimeModel& tm);

/// Indexed POI universe; ids may be sparse, lookup goes through the map.
class World {
 public:
  World() = default;
  explicit World(std::vector<Poi> pois);

  const Poi& poi(int id) const;
  bool has(int id) const { return index_.count(id) > 0; }
  const std::vector<Poi>& pois() const { return pois_; }
  size_t size() const { return pois_.size(); }

 private:
  std::vector<Poi> pois_;
  std::unordered_map<int, int> index_;
};

/// T(S) = T_d(S_0) + sum_i advance_cost(S_i, S_{i+1}).
double trip_time(const Trip& trip, const World& world, const TimeModel& tm);

}  // namespace ant
