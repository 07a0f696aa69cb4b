#pragma once

#include <string>
#include <vector>

#include "ant/candidates.hpp"
#include "ant/dataset.hpp"
#include "ant/generator.hpp"

namespace ant {

/// HR = (|recommended ∩ real| - 1) / (|real| - 1); the shared start POI is
/// excluded. Requires both trips to share the start and |real| >= 2.
double hit_ratio(const Trip& recommended, const Trip& real);

/// Order precision of the overlap: the non-start POIs of the recommendation
/// that appear in the real trip, in recommendation order; OSP = matching
/// ordered pairs / all ordered pairs, 0 when fewer than 2 overlap.
double osp(const Trip& recommended, const Trip& real);

struct QueryResult {
  int query_id = 0;
  double hr = 0.0;
  double osp = 0.0;
  double latency_ms = 0.0;
};

struct EvalReport {
  double hr_mean = 0.0;
  double osp_mean = 0.0;
  int n_queries = 0;
  std::vector<QueryResult> per_query;
};

/// Greedy planner choosing the most-frequent feasible unvisited POI until
/// the budget is exhausted; frequency ties break toward the lower POI id.
class PopBaseline {
 public:
  PopBaseline(const std::vector<CorpusTrip>& train_trips, World world);
  Trip plan(const TripQuery& q, const TimeModel& tm) const;

 private:
  World world_;  // owned: the planner outlives its construction site
  std::vector<std::pair<int, int>> ranked_;  // (-frequency, poi id), sorted
};

inline PopBaseline pop_baseline(const std::vector<CorpusTrip>& train_trips, const World& world) {
  return PopBaseline(train_trips, world);
}

/// Evaluates a generator over one corpus split: per test trip the query is
/// (user, start, exact trip time) and decoding is greedy. Reference trips
/// shorter than 2 POIs are skipped. workers > 1 parallelizes across queries
/// deterministically (results reduced in query order).
EvalReport evaluate_model(GeneratorModel& model, const Corpus& corpus,
                          const std::vector<int>& split_indices, const TripHypergraph& g,
                          int n_candidates, int workers = 1, bool measure_latency = false);

/// Same protocol for the POP baseline.
EvalReport evaluate_pop(const PopBaseline& pop, const Corpus& corpus,
                        const std::vector<int>& split_indices);

struct BenchRow {
  int n_candidates = 0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

/// Times generate_trip end-to-end (candidate construction included) on a
/// single thread for each candidate-set size.
std::vector<BenchRow> bench_latency(GeneratorModel& model, const Corpus& corpus,
                                    const TripHypergraph& g, const std::vector<int>& sizes,
                                    int reps, std::uint64_t seed);

void write_report_csv(const EvalReport& report, const std::string& path);
void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path);

}  // namespace ant
