#pragma once

#include <optional>
#include <unordered_map>
#include <vector>

#include "ant/candidates.hpp"
#include "ant/geo.hpp"
#include "ant/nn.hpp"

namespace ant {

struct GeneratorConfig {
  int d = 64;
  int heads = 4;
  int layers = 2;
  int ffn_inner = 64;
  int d_poi = 64;
  int d_cat = 16;
  int d_user = 32;
  int max_len = 20;

  static GeneratorConfig desk() { return {}; }
  static GeneratorConfig paper() { return {256, 8, 6, 256, 256, 32, 256, 20}; }
};

/// Attention encoder-decoder over a candidate set: joint embedding,
/// self-attention encoder without positional information, and a decoder that
/// tracks remaining time, glimpses feasible candidates, and predicts the next
/// POI through a single-head attention layer with time/visit masking.
struct GeneratorModel {
  GeneratorConfig cfg;
  int n_pois = 0;
  int n_categories = 0;
  int n_users = 0;

  Parameter poi_table, cat_table, user_table;
  Linear input_proj;
  std::vector<EncoderLayer> encoder;
  Parameter glimpse_wq, glimpse_wk, glimpse_wv;  // [(2d+1) x d], [d x d], [d x d]
  Parameter predict_wq, predict_wk;              // [d x d]

  GeneratorModel() = default;
  GeneratorModel(const GeneratorConfig& cfg, int n_pois, int n_categories, int n_users, Rng& rng);

  std::vector<Parameter*> parameters();
  std::vector<NamedTensor> checkpoint_tensors();

  /// H0: one row per candidate slot combining POI, category and user
  /// embeddings through the input projection.
  Val joint_embed(Tape& t, const TripQuery& q, const CandidateSet& cand, const World& world);
  /// L stacked encoder layers over the joint embedding.
  Val encode(Tape& t, Val h0, const RunMode& mode);
};

struct DecoderState {
  std::vector<int> selected_slots;  // slot indices; position 0 is the start slot
  std::vector<char> visited;        // per candidate slot
  double cost_s = 0.0;              // exact time cost of the selected prefix
  double remaining_s = 0.0;         // budget - cost_s
  int step = 1;
};

struct Rollout {
  Trip trip;
  std::vector<double> step_log_probs;
  double total_time_s = 0.0;
};

enum class DecodeMode { kSample, kGreedy };

/// Per-query decode machinery: owns the encoded candidate representations
/// and the time bookkeeping shared by rollout, replay and training losses.
class GeneratorRun {
 public:
  GeneratorRun(Tape& t, GeneratorModel& model, const CandidateSet& cand, const World& world,
               const TimeModel& tm, const RunMode& mode);

  DecoderState initial_state() const;

  /// advance_cost from the candidate in slot `prev` to every slot (cached).
  const std::vector<double>& advance_costs(int prev_slot);
  bool feasible(const DecoderState& s, int slot);
  std::vector<char> feasible_mask(const DecoderState& s);
  /// True if any unvisited slot fits the remaining budget.
  bool any_feasible(const DecoderState& s);

  /// 1 x N log-probabilities for the next slot given the state; probability
  /// is exactly zero on visited or time-infeasible slots. nullopt when no
  /// slot is feasible (decoding terminates).
  std::optional<Val> next_log_probs(const DecoderState& s);

  void advance(DecoderState& s, int slot);

  int slots() const { return static_cast<int>(cand_.pois.size()); }
  const CandidateSet& candidates() const { return cand_; }
  Tape& tape() { return t_; }

 private:
  Tape& t_;
  GeneratorModel& model_;
  const CandidateSet& cand_;
  const World& world_;
  const TimeModel& tm_;
  double budget_;

  Val h_enc_;                 // [N x d]
  Val mean_h_;                // [1 x d]
  std::vector<Val> glimpse_k_, glimpse_v_;  // per head, [N x d_h]
  Val predict_k_;             // [N x d]
  std::unordered_map<int, std::vector<double>> advance_cache_;
};

struct RolloutResult {
  Rollout rollout;
  std::vector<Val> log_prob_nodes;  // one scalar node per decoding step
  std::vector<int> slots;           // chosen slot per step (start excluded)
};

/// Categorical draw over a 1 x N log-probability row (masked entries carry
/// zero mass). CDF walk in slot order; deterministic given the rng state.
int sample_slot(const Tensor& log_probs, Rng& rng);
/// Argmax with ties broken toward the lowest slot index.
int greedy_slot(const Tensor& log_probs);

/// Runs the decode loop on an existing tape (used by training).
RolloutResult rollout_trip(GeneratorRun& run, DecodeMode mode, Rng* rng, int max_len);

/// Inference entry point: fresh gradient-free tape, frozen statistics.
/// Throws DataError when the budget cannot even cover the start POI.
Rollout generate_trip(GeneratorModel& model, const TripQuery& q, const CandidateSet& cand,
                      const World& world, const TimeModel& tm, DecodeMode mode, int max_len,
                      Rng* rng);

/// Replays a fixed trip through the decoder and returns the per-step log
/// probabilities the model assigns to it (teacher replay).
std::vector<double> replay_log_probs(GeneratorModel& model, const CandidateSet& cand,
                                     const World& world, const TimeModel& tm,
                                     const std::vector<int>& trip_pois);

}  // namespace ant
