#include "ant/geo.hpp"

#include <cmath>
#include <stdexcept>

namespace ant {

namespace {
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
}

double haversine_distance(const Coords& a, const Coords& b) {
  if (a.lat == b.lat && a.lon == b.lon) return 0.0;
  const double la1 = a.lat * kDegToRad;
  const double la2 = b.lat * kDegToRad;
  const double dlat = (b.lat - a.lat) * kDegToRad;
  const double dlon = (b.lon - a.lon) * kDegToRad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double h = s1 * s1 + std::cos(la1) * std::cos(la2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

void TimeModel::set_duration(int poi, double seconds) {
  if (seconds < 0.0) throw std::invalid_argument("negative duration for POI " + std::to_string(poi));
  duration_by_poi_[poi] = seconds;
}

double TimeModel::duration(int poi) const {
  auto it = duration_by_poi_.find(poi);
  if (it == duration_by_poi_.end()) throw DataError("unknown POI in time model: " + std::to_string(poi));
  return it->second;
}

double expected_duration(const std::vector<CheckIn>& checkins_for_poi) {
  if (checkins_for_poi.empty()) throw DataError("no observations for POI");
  const int poi = checkins_for_poi.front().poi;
  double total = 0.0;
  for (const CheckIn& c : checkins_for_poi) {
    if (c.poi != poi) throw std::invalid_argument("expected_duration: mixed POIs in check-in list");
    total += static_cast<double>(c.departure - c.arrival);
  }
  return total / static_cast<double>(checkins_for_poi.size());
}

double transit_time(const Poi& from, const Poi& to, const TimeModel& tm) {
  return haversine_distance(from.coords, to.coords) / tm.walk_speed();
}

double advance_cost(const Poi& prev, const Poi& next, const TimeModel& tm) {
  return tm.duration(next.id) + transit_time(prev, next, tm);
}

World::World(std::vector<Poi> pois) : pois_(std::move(pois)) {
  for (size_t i = 0; i < pois_.size(); ++i) {
    auto [it, inserted] = index_.emplace(pois_[i].id, static_cast<int>(i));
    if (!inserted) throw DataError("duplicate POI id: " + std::to_string(pois_[i].id));
  }
}

const Poi& World::poi(int id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown POI id: " + std::to_string(id));
  return pois_[it->second];
}

double trip_time(const Trip& trip, const World& world, const TimeModel& tm) {
  if (trip.pois.empty()) throw std::invalid_argument("trip_time: empty trip");
  double total = tm.duration(trip.pois.front());
  for (size_t i = 0; i + 1 < trip.pois.size(); ++i)
    total += advance_cost(world.poi(trip.pois[i]), world.poi(trip.pois[i + 1]), tm);
  return total;
}

}  // namespace ant
