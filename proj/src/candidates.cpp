#include "ant/candidates.hpp"

#include <algorithm>

namespace ant {

void TripHypergraph::add_edge(const std::vector<int>& pois) {
  if (pois.size() < 2) return;  // a single POI links nothing
  const int edge_id = static_cast<int>(edges_.size());
  edges_.push_back(pois);
  for (int p : pois) incidence_[p].push_back(edge_id);
}

const std::vector<int>& TripHypergraph::edges_of(int poi) const {
  static const std::vector<int> kEmpty;
  auto it = incidence_.find(poi);
  return it == incidence_.end() ? kEmpty : it->second;
}

std::unordered_set<int> TripHypergraph::neighbors(int start) const {
  std::unordered_set<int> out;
  for (int e : edges_of(start))
    for (int p : edges_[e])
      if (p != start) out.insert(p);
  return out;
}

TripHypergraph build_hypergraph(const std::vector<Trip>& train_trips) {
  TripHypergraph g;
  for (const Trip& t : train_trips) g.add_edge(t.pois);
  return g;
}

namespace {

// ascending distance to the start POI, ties by id
std::vector<int> by_distance(const std::vector<int>& ids, const Coords& origin, const World& world) {
  std::vector<std::pair<double, int>> keyed;
  keyed.reserve(ids.size());
  for (int id : ids) keyed.emplace_back(haversine_distance(origin, world.poi(id).coords), id);
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> out;
  out.reserve(ids.size());
  for (auto& [d, id] : keyed) out.push_back(id);
  return out;
}

}  // namespace

CandidateSet build_candidate_set(const TripQuery& q, const TripHypergraph& g, const World& world,
                                 int n) {
  if (n < 2) throw std::invalid_argument("candidate set size must be at least 2");
  if (static_cast<int>(world.size()) < n)
    throw DataError("world has " + std::to_string(world.size()) + " POIs, need " + std::to_string(n));
  const Coords origin = world.poi(q.start).coords;

  CandidateSet cs;
  cs.query = q;
  cs.pois.reserve(n);
  cs.pois.push_back(q.start);
  std::unordered_set<int> in_set{q.start};

  std::vector<int> hyper;
  for (int id : g.neighbors(q.start)) hyper.push_back(id);
  for (int id : by_distance(hyper, origin, world)) {
    if (static_cast<int>(cs.pois.size()) >= n) break;
    if (in_set.insert(id).second) cs.pois.push_back(id);
  }

  if (static_cast<int>(cs.pois.size()) < n) {
    std::vector<int> rest;
    for (const Poi& p : world.pois())
      if (!in_set.count(p.id)) rest.push_back(p.id);
    for (int id : by_distance(rest, origin, world)) {
      if (static_cast<int>(cs.pois.size()) >= n) break;
      cs.pois.push_back(id);
      in_set.insert(id);
    }
  }
  return cs;
}

CandidateSet build_candidate_set_with_targets(const TripQuery& q, const TripHypergraph& g,
                                              const World& world, int n,
                                              const std::vector<int>& target_pois) {
  CandidateSet cs = build_candidate_set(q, g, world, n);
  std::unordered_set<int> in_set(cs.pois.begin(), cs.pois.end());
  std::unordered_set<int> targets(target_pois.begin(), target_pois.end());

  std::vector<int> missing;
  for (int t : target_pois)
    if (t != q.start && !in_set.count(t)) missing.push_back(t);
  if (missing.empty()) return cs;

  // overwrite pad entries from the far end, skipping targets and the start
  int slot = n - 1;
  for (int t : missing) {
    while (slot > 0 && targets.count(cs.pois[slot])) --slot;
    if (slot <= 0)
      throw DataError("candidate set too small to hold all ground-truth POIs");
    cs.pois[slot] = t;
    --slot;
  }
  return cs;
}

}  // namespace ant
