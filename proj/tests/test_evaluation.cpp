#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ant/evaluation.hpp"
#include "doctest.h"

using namespace ant;

namespace {

// straightforward independent implementations used as the oracle
double naive_hr(const std::vector<int>& rec, const std::vector<int>& real) {
  std::set<int> a(rec.begin(), rec.end()), b(real.begin(), real.end());
  int common = 0;
  for (int p : a)
    if (b.count(p)) ++common;
  return static_cast<double>(common - 1) / static_cast<double>(real.size() - 1);
}

double naive_osp(const std::vector<int>& rec, const std::vector<int>& real) {
  std::map<int, int> pos;
  for (size_t i = 0; i < real.size(); ++i) pos[real[i]] = static_cast<int>(i);
  std::vector<int> overlap;
  for (size_t i = 1; i < rec.size(); ++i)
    if (pos.count(rec[i])) overlap.push_back(rec[i]);
  if (overlap.size() < 2) return 0.0;
  int b = 0, m = 0;
  for (size_t i = 0; i < overlap.size(); ++i)
    for (size_t j = i + 1; j < overlap.size(); ++j) {
      ++b;
      if (pos[overlap[i]] < pos[overlap[j]]) ++m;
    }
  return static_cast<double>(m) / b;
}

void all_sequences(int universe, int len, std::vector<std::vector<int>>& out,
                   std::vector<int>& cur) {
  if (static_cast<int>(cur.size()) == len) {
    out.push_back(cur);
    return;
  }
  for (int p = 0; p < universe; ++p) {
    if (std::find(cur.begin(), cur.end(), p) != cur.end()) continue;
    cur.push_back(p);
    all_sequences(universe, len, out, cur);
    cur.pop_back();
  }
}

}  // namespace

TEST_CASE("metric worked example") {
  // real l0->l1->l2->l3->l4, recommended l0->l2->l5->l1->l4
  Trip real{0, {0, 1, 2, 3, 4}};
  Trip rec{0, {0, 2, 5, 1, 4}};
  CHECK(hit_ratio(rec, real) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(osp(rec, real) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("metric degenerate cases") {
  Trip real{0, {0, 1, 2}};
  CHECK(hit_ratio(real, real) == 1.0);
  CHECK(osp(real, real) == 1.0);

  Trip start_only{0, {0}};
  CHECK(hit_ratio(start_only, real) == 0.0);
  CHECK(osp(start_only, real) == 0.0);

  Trip overlap_one{0, {0, 1, 9}};
  CHECK(osp(overlap_one, real) == 0.0);  // B = 0 rule

  Trip degenerate{0, {0}};
  CHECK_THROWS_AS(hit_ratio(real, degenerate), DataError);
  Trip other_start{0, {5, 1}};
  CHECK_THROWS_AS(hit_ratio(other_start, real), std::invalid_argument);
}

TEST_CASE("exhaustive small-universe oracle equivalence") {
  // all recommended/real pairs over 6 POIs, both starting at POI 0,
  // lengths up to 5
  std::vector<std::vector<int>> recs, reals;
  for (int len = 1; len <= 5; ++len) {
    std::vector<int> cur{0};
    all_sequences(6, len, recs, cur);
  }
  for (int len = 2; len <= 5; ++len) {
    std::vector<int> cur{0};
    all_sequences(6, len, reals, cur);
  }
  size_t pairs = 0;
  for (const auto& rv : recs)
    for (const auto& tv : reals) {
      Trip rec{0, rv}, real{0, tv};
      const double hr = hit_ratio(rec, real);
      const double os = osp(rec, real);
      CHECK(hr == naive_hr(rv, tv));
      CHECK(os == naive_osp(rv, tv));
      CHECK(hr >= 0.0);
      CHECK(hr <= 1.0);
      CHECK(os >= 0.0);
      CHECK(os <= 1.0);
      if (hr == 1.0 && os == 1.0) {
        // full cover in compatible order: every real POI present and the
        // overlap order matches
        for (int p : tv) CHECK(std::find(rv.begin(), rv.end(), p) != rv.end());
      }
      ++pairs;
    }
  CHECK(pairs == recs.size() * reals.size());
}

TEST_CASE("metrics ignore recommended POIs outside the real trip") {
  Trip real{0, {0, 1, 2, 3}};
  Trip rec{0, {0, 2, 1, 3}};
  Trip padded{0, {0, 2, 7, 1, 9, 3}};
  CHECK(hit_ratio(rec, real) == hit_ratio(padded, real));
  CHECK(osp(rec, real) == osp(padded, real));
}

namespace {

Corpus tiny_corpus() {
  SyntheticWorldConfig cfg;
  cfg.n_pois = 30;
  cfg.n_categories = 3;
  cfg.mean_duration_s = {300, 450, 600};
  cfg.n_trips = 40;
  cfg.budget_min_s = 2400;
  cfg.budget_max_s = 6000;
  cfg.grid_extent_m = 2000;
  cfg.rng_seed = 9;
  return generate_synthetic_world(cfg);
}

}  // namespace

TEST_CASE("pop baseline") {
  Corpus corpus = tiny_corpus();
  World world = corpus.world();
  std::vector<CorpusTrip> train;
  for (int i : corpus.split.train) train.push_back(corpus.trips[i]);
  PopBaseline pop(train, world);

  SUBCASE("all produced trips satisfy the budget") {
    Rng rng(21);
    for (int rep = 0; rep < 1000; ++rep) {
      TripQuery q{0, static_cast<int>(rng.below(30)), 600.0 + rng.uniform() * 5000.0};
      if (q.budget_s < corpus.time_model.duration(q.start)) continue;  // infeasible by contract
      Trip t = pop.plan(q, corpus.time_model);
      CHECK(trip_time(t, world, corpus.time_model) <= q.budget_s);
      std::set<int> uniq(t.pois.begin(), t.pois.end());
      CHECK(uniq.size() == t.pois.size());
    }
  }

  SUBCASE("equal frequencies fall back to the lowest-id feasible chain") {
    std::vector<Poi> pois = {{0, {0, 0}, 0}, {1, {0, 1e-4}, 0}, {2, {0, 2e-4}, 0},
                             {3, {0, 3e-4}, 0}};
    World w(pois);
    TimeModel tm(2.0);
    for (int i = 0; i < 4; ++i) tm.set_duration(i, 100.0);
    PopBaseline uniform({}, w);
    Trip t = uniform.plan(TripQuery{0, 2, 500.0}, tm);
    REQUIRE(t.pois.size() >= 2);
    CHECK(t.pois[0] == 2);
    CHECK(t.pois[1] == 0);  // lowest id wins the tie
  }

  SUBCASE("a dominant POI is chosen first whenever feasible") {
    std::vector<Poi> pois = {{0, {0, 0}, 0}, {1, {0, 1e-4}, 0}, {2, {0, 2e-4}, 0}};
    World w(pois);
    TimeModel tm(2.0);
    for (int i = 0; i < 3; ++i) tm.set_duration(i, 100.0);
    std::vector<CorpusTrip> trips;
    for (int k = 0; k < 5; ++k) {
      CorpusTrip t;
      t.trip.user = k;
      t.trip.pois = {2};
      trips.push_back(t);
    }
    PopBaseline pop2(trips, w);
    Trip t = pop2.plan(TripQuery{0, 0, 1000.0}, tm);
    REQUIRE(t.pois.size() >= 2);
    CHECK(t.pois[1] == 2);
  }
}

TEST_CASE("evaluate_model aggregates per-query rows") {
  Corpus corpus = tiny_corpus();
  std::vector<Trip> train_trips;
  for (int i : corpus.split.train) train_trips.push_back(corpus.trips[i].trip);
  TripHypergraph g = build_hypergraph(train_trips);

  Rng rng(31);
  GeneratorConfig cfg;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.ffn_inner = 16;
  cfg.d_poi = 8;
  cfg.d_cat = 4;
  cfg.d_user = 4;
  GeneratorModel model(cfg, 30, 3, corpus.n_users, rng);

  EvalReport rep = evaluate_model(model, corpus, corpus.split.test, g, 12);
  REQUIRE(rep.n_queries > 0);
  double hr = 0.0, os = 0.0;
  for (const QueryResult& r : rep.per_query) {
    hr += r.hr;
    os += r.osp;
  }
  CHECK(rep.hr_mean == doctest::Approx(hr / rep.n_queries).epsilon(1e-12));
  CHECK(rep.osp_mean == doctest::Approx(os / rep.n_queries).epsilon(1e-12));

  // parallel evaluation reduces to the same result in query order
  EvalReport rep4 = evaluate_model(model, corpus, corpus.split.test, g, 12, 4);
  REQUIRE(rep4.n_queries == rep.n_queries);
  for (int i = 0; i < rep.n_queries; ++i) {
    CHECK(rep4.per_query[i].hr == rep.per_query[i].hr);
    CHECK(rep4.per_query[i].osp == rep.per_query[i].osp);
  }
}

TEST_CASE("bench latency table shape") {
  Corpus corpus = tiny_corpus();
  std::vector<Trip> train_trips;
  for (int i : corpus.split.train) train_trips.push_back(corpus.trips[i].trip);
  TripHypergraph g = build_hypergraph(train_trips);
  Rng rng(3);
  GeneratorConfig cfg;
  cfg.d = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.ffn_inner = 8;
  cfg.d_poi = 4;
  cfg.d_cat = 4;
  cfg.d_user = 4;
  GeneratorModel model(cfg, 30, 3, corpus.n_users, rng);
  auto rows = bench_latency(model, corpus, g, {10, 20}, 5, 7);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.median_ms > 0.0);
    CHECK(std::isfinite(r.median_ms));
    CHECK(r.p95_ms >= r.median_ms);
  }
}
