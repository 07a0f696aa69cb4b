#include "ant/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <unordered_map>
#include <unordered_set>

namespace ant {

namespace {

void check_metric_inputs(const Trip& recommended, const Trip& real) {
  if (real.pois.size() < 2) throw DataError("degenerate reference trip");
  if (recommended.pois.empty() || recommended.pois.front() != real.pois.front())
    throw std::invalid_argument("metric trips must share the start POI");
}

}  // namespace

double hit_ratio(const Trip& recommended, const Trip& real) {
  check_metric_inputs(recommended, real);
  std::unordered_set<int> real_set(real.pois.begin(), real.pois.end());
  int common = 0;
  for (int p : recommended.pois)
    if (real_set.count(p)) ++common;
  return static_cast<double>(common - 1) / static_cast<double>(real.pois.size() - 1);
}

double osp(const Trip& recommended, const Trip& real) {
  check_metric_inputs(recommended, real);
  std::unordered_map<int, int> real_pos;
  for (size_t i = 0; i < real.pois.size(); ++i) real_pos[real.pois[i]] = static_cast<int>(i);

  // overlap in recommendation order, start excluded
  std::vector<int> overlap;
  for (size_t i = 1; i < recommended.pois.size(); ++i)
    if (real_pos.count(recommended.pois[i])) overlap.push_back(recommended.pois[i]);

  const size_t m = overlap.size();
  if (m < 2) return 0.0;
  int pairs = 0, matching = 0;
  for (size_t i = 0; i < m; ++i)
    for (size_t j = i + 1; j < m; ++j) {
      ++pairs;
      if (real_pos[overlap[i]] < real_pos[overlap[j]]) ++matching;
    }
  return static_cast<double>(matching) / static_cast<double>(pairs);
}

PopBaseline::PopBaseline(const std::vector<CorpusTrip>& train_trips, World world)
    : world_(std::move(world)) {
  std::unordered_map<int, int> freq;
  for (const Poi& p : world_.pois()) freq[p.id] = 0;
  for (const CorpusTrip& t : train_trips)
    for (int p : t.trip.pois) freq[p] += 1;
  for (auto& [id, f] : freq) ranked_.emplace_back(-f, id);
  std::sort(ranked_.begin(), ranked_.end());
}

Trip PopBaseline::plan(const TripQuery& q, const TimeModel& tm) const {
  if (q.budget_s < tm.duration(q.start)) throw DataError("infeasible query: budget below the start POI duration");
  Trip trip;
  trip.user = q.user;
  trip.pois = {q.start};
  std::unordered_set<int> visited{q.start};
  double cost = tm.duration(q.start);
  int prev = q.start;
  while (true) {
    bool advanced = false;
    for (auto& [negf, id] : ranked_) {
      if (visited.count(id)) continue;
      const double adv = advance_cost(world_.poi(prev), world_.poi(id), tm);
      if (cost + adv > q.budget_s) continue;
      cost += adv;
      visited.insert(id);
      trip.pois.push_back(id);
      prev = id;
      advanced = true;
      break;
    }
    if (!advanced) break;
  }
  return trip;
}

namespace {

QueryResult eval_one(GeneratorModel& model, const Corpus& corpus, const World& world,
                     const TripHypergraph& g, int n_candidates, int trip_index, int query_id,
                     bool measure_latency) {
  const CorpusTrip& ct = corpus.trips[trip_index];
  const TripQuery q = evaluation_query(ct, world, corpus.time_model);
  const auto t0 = std::chrono::steady_clock::now();
  CandidateSet cand = build_candidate_set(q, g, world, n_candidates);
  Rollout r = generate_trip(model, q, cand, world, corpus.time_model, DecodeMode::kGreedy,
                            model.cfg.max_len, nullptr);
  const auto t1 = std::chrono::steady_clock::now();
  QueryResult res;
  res.query_id = query_id;
  res.hr = hit_ratio(r.trip, ct.trip);
  res.osp = osp(r.trip, ct.trip);
  res.latency_ms =
      measure_latency ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0.0;
  return res;
}

EvalReport summarize(std::vector<QueryResult> per_query) {
  EvalReport rep;
  rep.per_query = std::move(per_query);
  rep.n_queries = static_cast<int>(rep.per_query.size());
  for (const QueryResult& r : rep.per_query) {
    rep.hr_mean += r.hr;
    rep.osp_mean += r.osp;
  }
  if (rep.n_queries > 0) {
    rep.hr_mean /= rep.n_queries;
    rep.osp_mean /= rep.n_queries;
  }
  return rep;
}

}  // namespace

EvalReport evaluate_model(GeneratorModel& model, const Corpus& corpus,
                          const std::vector<int>& split_indices, const TripHypergraph& g,
                          int n_candidates, int workers, bool measure_latency) {
  World world = corpus.world();
  std::vector<int> usable;
  for (int idx : split_indices)
    if (corpus.trips[idx].trip.pois.size() >= 2) usable.push_back(idx);

  std::vector<QueryResult> results(usable.size());
  if (workers <= 1) {
    for (size_t i = 0; i < usable.size(); ++i)
      results[i] = eval_one(model, corpus, world, g, n_candidates, usable[i],
                            static_cast<int>(i), measure_latency);
  } else {
    std::vector<std::future<void>> futs;
    std::atomic<size_t> next{0};
    for (int w = 0; w < workers; ++w)
      futs.push_back(std::async(std::launch::async, [&]() {
        while (true) {
          const size_t i = next.fetch_add(1);
          if (i >= usable.size()) return;
          results[i] = eval_one(model, corpus, world, g, n_candidates, usable[i],
                                static_cast<int>(i), measure_latency);
        }
      }));
    for (auto& f : futs) f.get();
  }
  return summarize(std::move(results));
}

EvalReport evaluate_pop(const PopBaseline& pop, const Corpus& corpus,
                        const std::vector<int>& split_indices) {
  World world = corpus.world();
  std::vector<QueryResult> results;
  int qid = 0;
  for (int idx : split_indices) {
    const CorpusTrip& ct = corpus.trips[idx];
    if (ct.trip.pois.size() < 2) continue;
    const TripQuery q = evaluation_query(ct, world, corpus.time_model);
    Trip planned = pop.plan(q, corpus.time_model);
    QueryResult res;
    res.query_id = qid++;
    res.hr = hit_ratio(planned, ct.trip);
    res.osp = osp(planned, ct.trip);
    results.push_back(res);
  }
  return summarize(std::move(results));
}

std::vector<BenchRow> bench_latency(GeneratorModel& model, const Corpus& corpus,
                                    const TripHypergraph& g, const std::vector<int>& sizes,
                                    int reps, std::uint64_t seed) {
  World world = corpus.world();
  std::vector<BenchRow> rows;
  for (int n : sizes) {
    if (static_cast<int>(world.size()) < n)
      throw DataError("world too small for candidate size " + std::to_string(n));
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n)));
    std::vector<double> samples;
    samples.reserve(reps);
    for (int r = 0; r < reps; ++r) {
      const CorpusTrip& ct = corpus.trips[rng.below(corpus.trips.size())];
      const TripQuery q = evaluation_query(ct, world, corpus.time_model);
      const auto t0 = std::chrono::steady_clock::now();
      CandidateSet cand = build_candidate_set(q, g, world, n);
      generate_trip(model, q, cand, world, corpus.time_model, DecodeMode::kGreedy,
                    model.cfg.max_len, nullptr);
      const auto t1 = std::chrono::steady_clock::now();
      samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    BenchRow row;
    row.n_candidates = n;
    row.median_ms = samples[samples.size() / 2];
    row.p95_ms = samples[std::min(samples.size() - 1, static_cast<size_t>(samples.size() * 0.95))];
    rows.push_back(row);
  }
  return rows;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write report: " + path);
  out << "query_id,hr,osp,latency_ms\n";
  char buf[160];
  for (const QueryResult& r : report.per_query) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.3f\n", r.query_id, r.hr, r.osp, r.latency_ms);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,%.6f,%.6f,%d\n", report.hr_mean, report.osp_mean,
                report.n_queries);
  out << buf;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write benchmark: " + path);
  out << "n_candidates,median_ms,p95_ms\n";
  char buf[96];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.3f,%.3f\n", r.n_candidates, r.median_ms, r.p95_ms);
    out << buf;
  }
}

}  // namespace ant
