#pragma once

#include <string>
#include <vector>

#include "ant/dataset.hpp"
#include "ant/discriminator.hpp"
#include "ant/evaluation.hpp"
#include "ant/generator.hpp"

namespace ant {

struct TrainConfig {
  int batch_size = 32;
  int pretrain_epochs = 12;
  int adv_epochs = 3;         // n_epoches of the adversarial loop
  int batches_per_epoch = 8;  // m_batches
  double lr_pretrain = 1e-4;
  double lr_adv = 1e-5;
  double baseline_decay = 0.9;
  bool baseline_enabled = true;
  bool teacher_forcing = true;
  std::uint64_t rng_seed = 1;
  int n_candidates = 50;
  int disc_pretrain_epochs = 3;
  int workers = 1;
};

/// Exponential moving average of the discriminator reward, used to center
/// the policy-gradient advantage. Starts at 0, matching the raw-reward
/// objective until the first update.
struct RewardBaseline {
  double ema = 0.0;
  double decay = 0.9;

  void update(double mean_reward) { ema = decay * ema + (1.0 - decay) * mean_reward; }
};

struct PretrainStats {
  double batch_loss = 0.0;   // mean per-trip sum of -log p over demonstrated steps
  double total_nats = 0.0;
  long long counted_steps = 0;
};

/// One supervised step on a batch of (query, real trip) demonstrations.
/// Each step's distribution is conditioned on the model's own sampled
/// prefix; ground-truth targets that are visited or infeasible under that
/// prefix are skipped. One Adam update at the given rate.
PretrainStats pretrain_generator_step(const std::vector<const CorpusTrip*>& batch,
                                      GeneratorModel& gen, const TripHypergraph& g,
                                      const World& world, const TimeModel& tm,
                                      const AdamConfig& adam, int n_candidates, Rng& rng);

/// REINFORCE step: one sampled rollout per query, terminal reward
/// D_phi(trip) applied to every step, EMA baseline subtracted when enabled.
/// Returns the mean reward. The discriminator is read-only here.
double policy_gradient_step(const std::vector<TripQuery>& queries, GeneratorModel& gen,
                            DiscriminatorModel& disc, const TripHypergraph& g, const World& world,
                            const TimeModel& tm, const AdamConfig& adam, RewardBaseline* baseline,
                            int n_candidates, Rng& rng);

/// Teacher forcing is the supervised loss at the adversarial learning rate.
inline PretrainStats teacher_forcing_step(const std::vector<const CorpusTrip*>& batch,
                                          GeneratorModel& gen, const TripHypergraph& g,
                                          const World& world, const TimeModel& tm,
                                          const AdamConfig& adam, int n_candidates, Rng& rng) {
  return pretrain_generator_step(batch, gen, g, world, tm, adam, n_candidates, rng);
}

/// Generates one fake per real trip with the current generator and takes one
/// Adam step on the discriminator loss. The generator is read-only here.
double update_discriminator(GeneratorModel& gen, DiscriminatorModel& disc,
                            const std::vector<const CorpusTrip*>& real_batch,
                            const TripHypergraph& g, const World& world, const TimeModel& tm,
                            const AdamConfig& adam, int n_candidates, Rng& rng);

struct MetricsRow {
  int epoch = 0;
  std::string phase;  // pretrain_d | pretrain | adversarial
  double loss = 0.0;
  double mean_reward = 0.0;
  double val_hr = 0.0;
  double val_osp = 0.0;
  double seconds = 0.0;  // wall clock, zeroed on write unless timing enabled
};

struct TrainResult {
  GeneratorModel gen;
  DiscriminatorModel disc;
  std::vector<MetricsRow> history;
  double best_val_hr = 0.0;
  int best_epoch = -1;
};

struct ModelSettings {
  GeneratorConfig gen;
  DiscriminatorConfig disc;
};

/// Full training procedure: initialize both models, generate fakes and
/// pre-train the discriminator, pre-train the generator from demonstrations,
/// then alternate discriminator updates, policy-gradient updates and teacher
/// forcing. Tracks validation HR per epoch and keeps the best checkpoint in
/// memory (and on disk when ckpt_dir is non-empty).
TrainResult train(const Corpus& corpus, const TrainConfig& cfg, const ModelSettings& models,
                  const std::string& ckpt_dir = "");

void write_metrics_csv(const std::vector<MetricsRow>& history, const std::string& path,
                       bool include_timing);

/// Joint generator + discriminator checkpoint with model dimensions.
void save_models(const std::string& path, GeneratorModel& gen, DiscriminatorModel& disc);
void load_models(const std::string& path, GeneratorModel& gen, DiscriminatorModel& disc);
/// Reconstructs both models (shapes included) from a checkpoint.
void load_models_auto(const std::string& path, GeneratorModel& gen, DiscriminatorModel& disc);

}  // namespace ant
