#include "ant/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>

namespace ant {

namespace {

void check_parameters_finite(const std::vector<Parameter*>& params) {
  for (const Parameter* p : params)
    if (!p->value.all_finite())
      throw std::runtime_error("non-finite parameter after update: " + p->name);
}

void apply_adam(std::vector<Parameter*> params, const AdamConfig& cfg) {
  for (Parameter* p : params) adam_update(*p, cfg);
  check_parameters_finite(params);
}

int slot_of_poi(const CandidateSet& cand, int poi) {
  for (size_t j = 0; j < cand.pois.size(); ++j)
    if (cand.pois[j] == poi) return static_cast<int>(j);
  return -1;
}

}  // namespace

PretrainStats pretrain_generator_step(const std::vector<const CorpusTrip*>& batch,
                                      GeneratorModel& gen, const TripHypergraph& g,
                                      const World& world, const TimeModel& tm,
                                      const AdamConfig& adam, int n_candidates, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("empty pretraining batch");
  PretrainStats stats;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  for (const CorpusTrip* ct : batch) {
    const TripQuery q = training_query(*ct, world, tm);
    CandidateSet cand = build_candidate_set_with_targets(q, g, world, n_candidates, ct->trip.pois);
    for (size_t i = 1; i < ct->trip.pois.size(); ++i)
      if (slot_of_poi(cand, ct->trip.pois[i]) < 0)
        throw DataError("ground-truth POI missing from candidate set after augmentation");

    Tape tape(/*grad_enabled=*/true);
    GeneratorRun run(tape, gen, cand, world, tm, RunMode::train());
    DecoderState state = run.initial_state();

    std::vector<Val> terms;
    for (size_t t = 1; t < ct->trip.pois.size(); ++t) {
      auto log_probs = run.next_log_probs(state);
      if (!log_probs) break;  // sampled prefix exhausted the budget
      const int gt_slot = slot_of_poi(cand, ct->trip.pois[t]);
      if (run.feasible(state, gt_slot)) terms.push_back(tape.at(*log_probs, 0, gt_slot));
      // scheduled sampling: move the state with the model's own draw
      run.advance(state, sample_slot(tape.value(*log_probs), rng));
    }
    if (terms.empty()) continue;
    Val total = terms[0];
    for (size_t k = 1; k < terms.size(); ++k) total = tape.add(total, terms[k]);
    const double trip_loss = -tape.value(total).item();
    stats.total_nats += trip_loss;
    stats.counted_steps += static_cast<long long>(terms.size());
    stats.batch_loss += trip_loss * inv_b;
    tape.backward(tape.scale(total, -inv_b));
  }
  apply_adam(gen.parameters(), adam);
  return stats;
}

double policy_gradient_step(const std::vector<TripQuery>& queries, GeneratorModel& gen,
                            DiscriminatorModel& disc, const TripHypergraph& g, const World& world,
                            const TimeModel& tm, const AdamConfig& adam, RewardBaseline* baseline,
                            int n_candidates, Rng& rng) {
  if (queries.empty()) throw std::invalid_argument("empty policy-gradient batch");
  const double b = baseline ? baseline->ema : 0.0;
  const double inv_b = 1.0 / static_cast<double>(queries.size());
  double reward_sum = 0.0;

  for (const TripQuery& q : queries) {
    CandidateSet cand = build_candidate_set_with_targets(q, g, world, n_candidates, {});
    Tape tape(/*grad_enabled=*/true);
    GeneratorRun run(tape, gen, cand, world, tm, RunMode::train());
    RolloutResult rr = rollout_trip(run, DecodeMode::kSample, &rng, gen.cfg.max_len);
    const double reward = score_trip(disc, rr.rollout.trip);
    reward_sum += reward;
    if (rr.log_prob_nodes.empty()) continue;  // start-only trip, no decisions taken
    Val total = rr.log_prob_nodes[0];
    for (size_t k = 1; k < rr.log_prob_nodes.size(); ++k)
      total = tape.add(total, rr.log_prob_nodes[k]);
    // surrogate: -(r - b) * sum_t log p; gradient ascent on expected reward
    tape.backward(tape.scale(total, -(reward - b) * inv_b));
  }
  apply_adam(gen.parameters(), adam);
  const double mean_reward = reward_sum * inv_b;
  if (baseline) baseline->update(mean_reward);
  return mean_reward;
}

double update_discriminator(GeneratorModel& gen, DiscriminatorModel& disc,
                            const std::vector<const CorpusTrip*>& real_batch,
                            const TripHypergraph& g, const World& world, const TimeModel& tm,
                            const AdamConfig& adam, int n_candidates, Rng& rng) {
  if (real_batch.empty()) throw std::invalid_argument("empty discriminator batch");
  std::vector<Trip> real, fake;
  for (const CorpusTrip* ct : real_batch) {
    real.push_back(ct->trip);
    const TripQuery q = training_query(*ct, world, tm);
    CandidateSet cand = build_candidate_set_with_targets(q, g, world, n_candidates, {});
    fake.push_back(
        generate_trip(gen, q, cand, world, tm, DecodeMode::kSample, gen.cfg.max_len, &rng).trip);
  }
  Tape tape(/*grad_enabled=*/true);
  Val loss = discriminator_loss_node(tape, disc, real, fake);
  const double loss_value = tape.value(loss).item();
  tape.backward(loss);
  apply_adam(disc.parameters(), adam);
  return loss_value;
}

namespace {

std::vector<const CorpusTrip*> trainable_trips(const Corpus& corpus) {
  std::vector<const CorpusTrip*> out;
  for (int idx : corpus.split.train)
    if (corpus.trips[idx].trip.pois.size() >= 2) out.push_back(&corpus.trips[idx]);
  return out;
}

std::vector<std::vector<const CorpusTrip*>> make_batches(std::vector<const CorpusTrip*> pool,
                                                         int batch_size, Rng& rng) {
  std::shuffle(pool.begin(), pool.end(), rng.engine());
  std::vector<std::vector<const CorpusTrip*>> batches;
  for (size_t i = 0; i < pool.size(); i += batch_size) {
    batches.emplace_back(pool.begin() + i,
                         pool.begin() + std::min(pool.size(), i + batch_size));
  }
  return batches;
}

}  // namespace

TrainResult train(const Corpus& corpus, const TrainConfig& cfg, const ModelSettings& models,
                  const std::string& ckpt_dir) {
  if (corpus.split.train.empty()) throw DataError("empty training split");
  auto pool = trainable_trips(corpus);
  if (pool.empty()) throw DataError("no trainable trips (all shorter than 2 POIs)");

  World world = corpus.world();
  int max_poi_id = 0;
  for (const Poi& p : corpus.pois) max_poi_id = std::max(max_poi_id, p.id);

  Rng gen_init(derive_seed(cfg.rng_seed, 0x01));
  Rng disc_init(derive_seed(cfg.rng_seed, 0x02));
  Rng step_rng(derive_seed(cfg.rng_seed, 0x03));
  Rng batch_rng(derive_seed(cfg.rng_seed, 0x04));

  TrainResult result;
  result.gen = GeneratorModel(models.gen, max_poi_id + 1, corpus.n_categories,
                              std::max(1, corpus.n_users), gen_init);
  result.disc = DiscriminatorModel(models.disc, max_poi_id + 1, disc_init);

  std::vector<Trip> train_trip_values;
  for (const CorpusTrip* ct : pool) train_trip_values.push_back(ct->trip);
  TripHypergraph g = build_hypergraph(train_trip_values);

  const AdamConfig adam_pre{cfg.lr_pretrain};
  const AdamConfig adam_adv{cfg.lr_adv};
  RewardBaseline baseline{0.0, cfg.baseline_decay};

  auto run_validation = [&](GeneratorModel& m) {
    EvalReport rep = evaluate_model(m, corpus, corpus.split.validation, g, cfg.n_candidates,
                                    cfg.workers, /*measure_latency=*/false);
    return std::pair<double, double>(rep.hr_mean, rep.osp_mean);
  };

  int epoch = 0;
  auto note_best = [&](double val_hr) {
    if (result.best_epoch < 0 || val_hr > result.best_val_hr) {
      result.best_val_hr = val_hr;
      result.best_epoch = epoch;
      if (!ckpt_dir.empty()) save_models(ckpt_dir + "/best.ckpt", result.gen, result.disc);
    }
  };

  // Algorithm: fakes from the untrained generator, then discriminator
  // pre-training via the classification loss.
  for (int e = 0; e < cfg.disc_pretrain_epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    int n_batches = 0;
    for (auto& batch : make_batches(pool, cfg.batch_size, batch_rng)) {
      loss_sum += update_discriminator(result.gen, result.disc, batch, g, world,
                                       corpus.time_model, adam_pre, cfg.n_candidates, step_rng);
      ++n_batches;
    }
    const auto t1 = std::chrono::steady_clock::now();
    MetricsRow row;
    row.epoch = epoch++;
    row.phase = "pretrain_d";
    row.loss = loss_sum / std::max(1, n_batches);
    row.seconds = std::chrono::duration<double>(t1 - t0).count();
    result.history.push_back(row);
  }

  // Generator pre-training: learning from demonstration.
  for (int e = 0; e < cfg.pretrain_epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    double nats = 0.0;
    long long steps = 0;
    for (auto& batch : make_batches(pool, cfg.batch_size, batch_rng)) {
      PretrainStats s = pretrain_generator_step(batch, result.gen, g, world, corpus.time_model,
                                                adam_pre, cfg.n_candidates, step_rng);
      nats += s.total_nats;
      steps += s.counted_steps;
    }
    auto [val_hr, val_osp] = run_validation(result.gen);
    const auto t1 = std::chrono::steady_clock::now();
    MetricsRow row;
    row.epoch = epoch;
    row.phase = "pretrain";
    row.loss = steps > 0 ? nats / static_cast<double>(steps) : 0.0;
    row.val_hr = val_hr;
    row.val_osp = val_osp;
    row.seconds = std::chrono::duration<double>(t1 - t0).count();
    result.history.push_back(row);
    note_best(val_hr);
    ++epoch;
  }

  // Adversarial stage: alternate D and G updates with teacher forcing.
  for (int e = 0; e < cfg.adv_epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    double reward_sum = 0.0, tf_nats = 0.0;
    long long tf_steps = 0;
    int n_batches = 0;
    auto batches = make_batches(pool, cfg.batch_size, batch_rng);
    for (int bi = 0; bi < cfg.batches_per_epoch; ++bi) {
      auto& batch = batches[bi % batches.size()];
      update_discriminator(result.gen, result.disc, batch, g, world, corpus.time_model, adam_adv,
                           cfg.n_candidates, step_rng);
      std::vector<TripQuery> queries;
      for (const CorpusTrip* ct : batch)
        queries.push_back(training_query(*ct, world, corpus.time_model));
      reward_sum += policy_gradient_step(queries, result.gen, result.disc, g, world,
                                         corpus.time_model, adam_adv,
                                         cfg.baseline_enabled ? &baseline : nullptr,
                                         cfg.n_candidates, step_rng);
      if (cfg.teacher_forcing) {
        PretrainStats s = teacher_forcing_step(batch, result.gen, g, world, corpus.time_model,
                                               adam_adv, cfg.n_candidates, step_rng);
        tf_nats += s.total_nats;
        tf_steps += s.counted_steps;
      }
      ++n_batches;
    }
    auto [val_hr, val_osp] = run_validation(result.gen);
    const auto t1 = std::chrono::steady_clock::now();
    MetricsRow row;
    row.epoch = epoch;
    row.phase = "adversarial";
    row.loss = tf_steps > 0 ? tf_nats / static_cast<double>(tf_steps) : 0.0;
    row.mean_reward = n_batches > 0 ? reward_sum / n_batches : 0.0;
    row.val_hr = val_hr;
    row.val_osp = val_osp;
    row.seconds = std::chrono::duration<double>(t1 - t0).count();
    result.history.push_back(row);
    note_best(val_hr);
    ++epoch;
  }

  if (!ckpt_dir.empty()) {
    save_models(ckpt_dir + "/final.ckpt", result.gen, result.disc);
    if (result.best_epoch < 0) save_models(ckpt_dir + "/best.ckpt", result.gen, result.disc);
  }
  return result;
}

void write_metrics_csv(const std::vector<MetricsRow>& history, const std::string& path,
                       bool include_timing) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write metrics: " + path);
  out << "epoch,phase,loss,mean_reward,val_hr,val_osp,seconds\n";
  char buf[256];
  for (const MetricsRow& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f,%.6f,%.6f,%.3f\n", r.epoch, r.phase.c_str(),
                  r.loss, r.mean_reward, r.val_hr, r.val_osp, include_timing ? r.seconds : 0.0);
    out << buf;
  }
}

namespace {

Tensor gen_meta(const GeneratorModel& m) {
  return Tensor::row_vector({static_cast<double>(m.cfg.d), static_cast<double>(m.cfg.heads),
                             static_cast<double>(m.cfg.layers), static_cast<double>(m.cfg.ffn_inner),
                             static_cast<double>(m.cfg.d_poi), static_cast<double>(m.cfg.d_cat),
                             static_cast<double>(m.cfg.d_user), static_cast<double>(m.cfg.max_len),
                             static_cast<double>(m.n_pois), static_cast<double>(m.n_categories),
                             static_cast<double>(m.n_users)});
}

Tensor disc_meta(const DiscriminatorModel& m) {
  return Tensor::row_vector({static_cast<double>(m.cfg.d_poi), static_cast<double>(m.cfg.hidden),
                             static_cast<double>(m.cfg.head_inner), static_cast<double>(m.n_pois)});
}

}  // namespace

void save_models(const std::string& path, GeneratorModel& gen, DiscriminatorModel& disc) {
  Tensor gm = gen_meta(gen);
  Tensor dm = disc_meta(disc);
  std::vector<NamedTensor> blocks = {{"gen/meta", &gm}, {"disc/meta", &dm}};
  for (NamedTensor nt : gen.checkpoint_tensors()) blocks.push_back(nt);
  for (NamedTensor nt : disc.checkpoint_tensors()) blocks.push_back(nt);
  save_checkpoint(path, blocks);
}

void load_models(const std::string& path, GeneratorModel& gen, DiscriminatorModel& disc) {
  Tensor gm = gen_meta(gen);
  Tensor dm = disc_meta(disc);
  std::vector<NamedTensor> blocks = {{"gen/meta", &gm}, {"disc/meta", &dm}};
  for (NamedTensor nt : gen.checkpoint_tensors()) blocks.push_back(nt);
  for (NamedTensor nt : disc.checkpoint_tensors()) blocks.push_back(nt);
  load_checkpoint(path, blocks);
}

void load_models_auto(const std::string& path, GeneratorModel& gen, DiscriminatorModel& disc) {
  // first pass: shapes from the meta blocks
  Tensor gm(1, 11), dm(1, 4);
  load_checkpoint_prefix(path, {{"gen/meta", &gm}, {"disc/meta", &dm}});
  GeneratorConfig gc;
  gc.d = static_cast<int>(gm[0]);
  gc.heads = static_cast<int>(gm[1]);
  gc.layers = static_cast<int>(gm[2]);
  gc.ffn_inner = static_cast<int>(gm[3]);
  gc.d_poi = static_cast<int>(gm[4]);
  gc.d_cat = static_cast<int>(gm[5]);
  gc.d_user = static_cast<int>(gm[6]);
  gc.max_len = static_cast<int>(gm[7]);
  DiscriminatorConfig dc;
  dc.d_poi = static_cast<int>(dm[0]);
  dc.hidden = static_cast<int>(dm[1]);
  dc.head_inner = static_cast<int>(dm[2]);
  Rng dummy(0);
  gen = GeneratorModel(gc, static_cast<int>(gm[8]), static_cast<int>(gm[9]),
                       static_cast<int>(gm[10]), dummy);
  disc = DiscriminatorModel(dc, static_cast<int>(dm[3]), dummy);
  load_models(path, gen, disc);
}

}  // namespace ant
