#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ant/config.hpp"
#include "ant/dataset.hpp"
#include "ant/evaluation.hpp"
#include "ant/training.hpp"
#include "json.hpp"

namespace {

struct CommonArgs {
  std::uint64_t seed = 1;
  int workers = 1;
  bool timing = false;
};

ant::TripHypergraph train_hypergraph(const ant::Corpus& corpus) {
  std::vector<ant::Trip> trips;
  for (int idx : corpus.split.train) trips.push_back(corpus.trips[idx].trip);
  return ant::build_hypergraph(trips);
}

int run_synth(const std::string& config_path, const std::string& out_dir, const CommonArgs& common) {
  ant::SyntheticWorldConfig cfg;
  if (!config_path.empty()) cfg = ant::parse_synth_config(ant::KeyValues::from_file(config_path));
  if (common.seed != 1) cfg.rng_seed = common.seed;
  ant::Corpus corpus = ant::generate_synthetic_world(cfg);
  ant::save_corpus(corpus, out_dir);
  std::cerr << "synth: " << corpus.pois.size() << " POIs, " << corpus.trips.size() << " trips -> "
            << out_dir << "\n";
  return 0;
}

int run_ingest(const std::string& checkins, const std::string& mode_name, const std::string& out_dir,
               double gap_hours, std::int64_t utc_offset_s) {
  const ant::SplitMode mode =
      mode_name == "day" ? ant::SplitMode::kCalendarDay : ant::SplitMode::kGap;
  auto records = ant::parse_checkins(checkins);
  ant::Corpus corpus =
      ant::build_corpus_from_records(records, mode, gap_hours * 3600.0, utc_offset_s);
  ant::save_corpus(corpus, out_dir);
  std::cerr << "ingest: " << records.size() << " check-ins -> " << corpus.trips.size()
            << " trips, " << corpus.pois.size() << " POIs -> " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& corpus_dir, const std::string& config_path,
              const std::string& out_dir, const CommonArgs& common) {
  ant::Corpus corpus = ant::load_corpus(corpus_dir);
  ant::TrainSettings settings;
  if (!config_path.empty()) settings = ant::parse_train_config(ant::KeyValues::from_file(config_path));
  if (common.seed != 1) settings.train.rng_seed = common.seed;
  settings.train.workers = common.workers;
  std::filesystem::create_directories(out_dir);
  ant::TrainResult result = ant::train(corpus, settings.train, settings.models, out_dir);
  ant::write_metrics_csv(result.history, out_dir + "/metrics.csv", common.timing);
  std::cerr << "train: best validation HR " << result.best_val_hr << " at epoch "
            << result.best_epoch << "; checkpoints in " << out_dir << "\n";
  return 0;
}

int run_evaluate(const std::string& corpus_dir, const std::string& ckpt, const std::string& out_path,
                 int n_candidates, const CommonArgs& common) {
  ant::Corpus corpus = ant::load_corpus(corpus_dir);
  ant::GeneratorModel gen;
  ant::DiscriminatorModel disc;
  ant::load_models_auto(ckpt, gen, disc);
  ant::TripHypergraph g = train_hypergraph(corpus);
  ant::EvalReport report = ant::evaluate_model(gen, corpus, corpus.split.test, g, n_candidates,
                                               common.workers, common.timing);
  ant::write_report_csv(report, out_path);
  std::cerr << "evaluate: HR " << report.hr_mean << ", OSP " << report.osp_mean << " over "
            << report.n_queries << " queries -> " << out_path << "\n";
  return 0;
}

int run_recommend(const std::string& corpus_dir, const std::string& ckpt, int user, int start,
                  double budget_s, int n_candidates, const CommonArgs& common) {
  ant::Corpus corpus = ant::load_corpus(corpus_dir);
  ant::GeneratorModel gen;
  ant::DiscriminatorModel disc;
  ant::load_models_auto(ckpt, gen, disc);
  ant::World world = corpus.world();
  ant::TripQuery q{user, start, budget_s};
  if (q.budget_s <= 0.0) throw ant::DataError("budget must be positive");
  ant::TripHypergraph g = train_hypergraph(corpus);
  ant::CandidateSet cand = ant::build_candidate_set(q, g, world, n_candidates);
  ant::Rng rng(ant::derive_seed(common.seed, 0xbee));
  ant::Rollout r = ant::generate_trip(gen, q, cand, world, corpus.time_model,
                                      ant::DecodeMode::kGreedy, gen.cfg.max_len, &rng);
  nlohmann::json j;
  j["query"] = {{"user", q.user}, {"start", q.start}, {"budget_s", q.budget_s}};
  j["poi_sequence"] = r.trip.pois;
  std::vector<double> probs;
  for (double lp : r.step_log_probs) probs.push_back(std::exp(lp));
  j["per_step_probabilities"] = probs;
  j["total_time_s"] = r.total_time_s;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_bench(const std::string& corpus_dir, const std::string& ckpt, const std::string& sizes_arg,
              int reps, const std::string& out_path, const CommonArgs& common) {
  ant::Corpus corpus = ant::load_corpus(corpus_dir);
  ant::GeneratorModel gen;
  ant::DiscriminatorModel disc;
  ant::load_models_auto(ckpt, gen, disc);
  std::vector<int> sizes;
  std::stringstream ss(sizes_arg);
  std::string part;
  while (std::getline(ss, part, ',')) sizes.push_back(std::stoi(part));
  ant::TripHypergraph g = train_hypergraph(corpus);
  auto rows = ant::bench_latency(gen, corpus, g, sizes, reps, common.seed);
  if (out_path.empty()) {
    std::cout << "n_candidates,median_ms,p95_ms\n";
    for (const auto& r : rows)
      std::cout << r.n_candidates << "," << r.median_ms << "," << r.p95_ms << "\n";
  } else {
    ant::write_bench_csv(rows, out_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ANT: adversarial neural trip recommendation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  CommonArgs common;
  app.add_option("--seed", common.seed, "master RNG seed")->capture_default_str();
  app.add_option("--workers", common.workers, "parallel workers (1 = bit-exact determinism)")
      ->capture_default_str();
  app.add_flag("--timing", common.timing,
               "write measured wall-clock timings into output files (breaks byte-exact reruns)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic check-in corpus");
  std::string synth_config, synth_out;
  synth->add_option("--config", synth_config, "synthetic world config (key = value)");
  synth->add_option("--out", synth_out, "output corpus directory")->required();

  auto* ingest = app.add_subcommand("ingest", "build a corpus from a check-in CSV");
  std::string ingest_checkins, ingest_mode = "gap", ingest_out;
  double ingest_gap_hours = 5.0;
  std::int64_t ingest_utc_offset = 0;
  ingest->add_option("--checkins", ingest_checkins, "check-in CSV path")->required();
  ingest->add_option("--mode", ingest_mode, "trip splitting: gap or day")
      ->check(CLI::IsMember({"gap", "day"}))
      ->capture_default_str();
  ingest->add_option("--gap-hours", ingest_gap_hours, "idle gap that opens a new trip")
      ->capture_default_str();
  ingest->add_option("--utc-offset", ingest_utc_offset, "seconds added before day bucketing")
      ->capture_default_str();
  ingest->add_option("--out", ingest_out, "output corpus directory")->required();

  auto* train = app.add_subcommand("train", "run the full training procedure");
  std::string train_corpus, train_config, train_out;
  train->add_option("--corpus", train_corpus, "corpus directory")->required();
  train->add_option("--config", train_config, "training config (key = value)");
  train->add_option("--out", train_out, "checkpoint/metrics output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  std::string eval_corpus, eval_ckpt, eval_out = "report.csv";
  int eval_candidates = 200;
  evaluate->add_option("--corpus", eval_corpus, "corpus directory")->required();
  evaluate->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  evaluate->add_option("--out", eval_out, "report CSV path")->capture_default_str();
  evaluate->add_option("--candidates", eval_candidates, "candidate set size")->capture_default_str();

  auto* recommend = app.add_subcommand("recommend", "plan one trip and print JSON");
  std::string rec_corpus, rec_ckpt;
  int rec_user = 0, rec_start = 0, rec_candidates = 200;
  double rec_budget = 0.0;
  recommend->add_option("--corpus", rec_corpus, "corpus directory")->required();
  recommend->add_option("--ckpt", rec_ckpt, "checkpoint file")->required();
  recommend->add_option("--user", rec_user, "user id")->required();
  recommend->add_option("--start", rec_start, "start POI id")->required();
  recommend->add_option("--budget", rec_budget, "time budget in seconds")->required();
  recommend->add_option("--candidates", rec_candidates, "candidate set size")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "latency across candidate-set sizes");
  std::string bench_corpus, bench_ckpt, bench_sizes = "50,100,200,400", bench_out;
  int bench_reps = 50;
  bench->add_option("--corpus", bench_corpus, "corpus directory")->required();
  bench->add_option("--ckpt", bench_ckpt, "checkpoint file")->required();
  bench->add_option("--sizes", bench_sizes, "comma-separated candidate sizes")->capture_default_str();
  bench->add_option("--reps", bench_reps, "queries per size")->capture_default_str();
  bench->add_option("--out", bench_out, "benchmark CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the usage message
    return code == 0 ? 0 : 1;     // exit 0 only for --help/--version
  }

  try {
    if (synth->parsed()) return run_synth(synth_config, synth_out, common);
    if (ingest->parsed())
      return run_ingest(ingest_checkins, ingest_mode, ingest_out, ingest_gap_hours,
                        ingest_utc_offset);
    if (train->parsed()) return run_train(train_corpus, train_config, train_out, common);
    if (evaluate->parsed())
      return run_evaluate(eval_corpus, eval_ckpt, eval_out, eval_candidates, common);
    if (recommend->parsed())
      return run_recommend(rec_corpus, rec_ckpt, rec_user, rec_start, rec_budget, rec_candidates,
                           common);
    if (bench->parsed())
      return run_bench(bench_corpus, bench_ckpt, bench_sizes, bench_reps, bench_out, common);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
