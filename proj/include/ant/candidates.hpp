#pragma once

#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ant/geo.hpp"

namespace ant {

/// Hypergraph with one hyperedge per training trip linking all its POIs.
class TripHypergraph {
 public:
  TripHypergraph() = default;

  void add_edge(const std::vector<int>& pois);
  /// POIs co-occurring with `start` in any hyperedge, excluding start itself.
  /// Empty if start was never seen.
  std::unordered_set<int> neighbors(int start) const;

  size_t edge_count() const { return edges_.size(); }
  const std::vector<std::vector<int>>& edges() const { return edges_; }
  const std::vector<int>& edges_of(int poi) const;

 private:
  std::vector<std::vector<int>> edges_;
  std::unordered_map<int, std::vector<int>> incidence_;
};

TripHypergraph build_hypergraph(const std::vector<Trip>& train_trips);

inline std::unordered_set<int> hypergraph_candidates(const TripHypergraph& g, int start) {
  return g.neighbors(start);
}

/// Fixed-length candidate list; slot 0 is the query's start POI.
struct CandidateSet {
  TripQuery query;
  std::vector<int> pois;
};

/// Slot 0 = start; then hypergraph neighbors ordered by (distance to start,
/// id); then the remaining world POIs in the same order until length n.
/// Overflowing neighbor sets are truncated to the nearest n-1.
CandidateSet build_candidate_set(const TripQuery& q, const TripHypergraph& g, const World& world,
                                 int n);

/// Training-time variant: ground-truth POIs missing from the plain candidate
/// set replace pad entries from the far end, so demonstrations stay
/// learnable. Throws if the trip has more POIs than the set can hold.
CandidateSet build_candidate_set_with_targets(const TripQuery& q, const TripHypergraph& g,
                                              const World& world, int n,
                                              const std::vector<int>& target_pois);

}  // namespace ant
