#include "ant/generator.hpp"

#include <cmath>
#include <stdexcept>

namespace ant {

GeneratorModel::GeneratorModel(const GeneratorConfig& cfg_, int n_pois_, int n_categories_,
                               int n_users_, Rng& rng)
    : cfg(cfg_), n_pois(n_pois_), n_categories(n_categories_), n_users(n_users_) {
  if (cfg.d % cfg.heads != 0) throw std::invalid_argument("model width not divisible by head count");
  poi_table = Parameter("gen/poi_table", uniform_init(n_pois, cfg.d_poi, cfg.d_poi, rng));
  cat_table = Parameter("gen/cat_table", uniform_init(n_categories, cfg.d_cat, cfg.d_cat, rng));
  user_table = Parameter("gen/user_table", uniform_init(n_users, cfg.d_user, cfg.d_user, rng));
  const int in_w = cfg.d_poi + cfg.d_cat + cfg.d_user;
  input_proj = Linear("gen/input_proj", in_w, cfg.d, rng);
  encoder.reserve(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l)
    encoder.emplace_back("gen/enc" + std::to_string(l), cfg.d, cfg.heads, cfg.ffn_inner, rng);
  glimpse_wq = Parameter("gen/glimpse_wq", uniform_init(2 * cfg.d + 1, cfg.d, 2 * cfg.d + 1, rng));
  glimpse_wk = Parameter("gen/glimpse_wk", uniform_init(cfg.d, cfg.d, cfg.d, rng));
  glimpse_wv = Parameter("gen/glimpse_wv", uniform_init(cfg.d, cfg.d, cfg.d, rng));
  predict_wq = Parameter("gen/predict_wq", uniform_init(cfg.d, cfg.d, cfg.d, rng));
  predict_wk = Parameter("gen/predict_wk", uniform_init(cfg.d, cfg.d, cfg.d, rng));
}

std::vector<Parameter*> GeneratorModel::parameters() {
  std::vector<Parameter*> ps = {&poi_table, &cat_table, &user_table, &input_proj.w, &input_proj.b};
  for (EncoderLayer& l : encoder) {
    ps.push_back(&l.mha.wq);
    ps.push_back(&l.mha.wk);
    ps.push_back(&l.mha.wv);
    ps.push_back(&l.mha.wo);
    ps.push_back(&l.bn1.gamma);
    ps.push_back(&l.bn1.beta);
    ps.push_back(&l.ffn.l1.w);
    ps.push_back(&l.ffn.l1.b);
    ps.push_back(&l.ffn.l2.w);
    ps.push_back(&l.ffn.l2.b);
    ps.push_back(&l.bn2.gamma);
    ps.push_back(&l.bn2.beta);
  }
  ps.push_back(&glimpse_wq);
  ps.push_back(&glimpse_wk);
  ps.push_back(&glimpse_wv);
  ps.push_back(&predict_wq);
  ps.push_back(&predict_wk);
  return ps;
}

std::vector<NamedTensor> GeneratorModel::checkpoint_tensors() {
  std::vector<NamedTensor> blocks;
  for (Parameter* p : parameters()) blocks.push_back({p->name, &p->value});
  for (size_t l = 0; l < encoder.size(); ++l) {
    const std::string base = "gen/enc" + std::to_string(l);
    blocks.push_back({base + "/bn1/running_mean", &encoder[l].bn1.running_mean});
    blocks.push_back({base + "/bn1/running_var", &encoder[l].bn1.running_var});
    blocks.push_back({base + "/bn2/running_mean", &encoder[l].bn2.running_mean});
    blocks.push_back({base + "/bn2/running_var", &encoder[l].bn2.running_var});
  }
  return blocks;
}

Val GeneratorModel::joint_embed(Tape& t, const TripQuery& q, const CandidateSet& cand,
                                const World& world) {
  if (q.user < 0 || q.user >= n_users) throw DataError("unknown user id: " + std::to_string(q.user));
  std::vector<int> poi_rows, cat_rows, user_rows;
  poi_rows.reserve(cand.pois.size());
  for (int pid : cand.pois) {
    if (pid < 0 || pid >= n_pois) throw DataError("unknown POI id: " + std::to_string(pid));
    const Poi& p = world.poi(pid);
    if (p.category < 0 || p.category >= n_categories)
      throw DataError("unknown category id: " + std::to_string(p.category));
    poi_rows.push_back(pid);
    cat_rows.push_back(p.category);
    user_rows.push_back(q.user);
  }
  Val x = t.concat_cols({t.gather_rows(t.leaf(poi_table), poi_rows),
                         t.gather_rows(t.leaf(cat_table), cat_rows),
                         t.gather_rows(t.leaf(user_table), user_rows)});
  return input_proj.forward(t, x);
}

Val GeneratorModel::encode(Tape& t, Val h0, const RunMode& mode) {
  Val h = h0;
  for (EncoderLayer& layer : encoder) h = layer.forward(t, h, mode);
  return h;
}

GeneratorRun::GeneratorRun(Tape& t, GeneratorModel& model, const CandidateSet& cand,
                           const World& world, const TimeModel& tm, const RunMode& mode)
    : t_(t), model_(model), cand_(cand), world_(world), tm_(tm), budget_(cand.query.budget_s) {
  h_enc_ = model.encode(t, model.joint_embed(t, cand.query, cand, world), mode);
  mean_h_ = t.mean_rows(h_enc_);
  const int d = model.cfg.d;
  const int heads = model.cfg.heads;
  const int dh = d / heads;
  Val k_full = t.matmul(h_enc_, t.leaf(model.glimpse_wk));
  Val v_full = t.matmul(h_enc_, t.leaf(model.glimpse_wv));
  for (int m = 0; m < heads; ++m) {
    glimpse_k_.push_back(t.slice_cols(k_full, m * dh, (m + 1) * dh));
    glimpse_v_.push_back(t.slice_cols(v_full, m * dh, (m + 1) * dh));
  }
  predict_k_ = t.matmul(h_enc_, t.leaf(model.predict_wk));
}

DecoderState GeneratorRun::initial_state() const {
  DecoderState s;
  s.selected_slots = {0};
  s.visited.assign(cand_.pois.size(), 0);
  s.visited[0] = 1;
  s.cost_s = tm_.duration(cand_.pois[0]);
  s.remaining_s = budget_ - s.cost_s;
  s.step = 1;
  return s;
}

const std::vector<double>& GeneratorRun::advance_costs(int prev_slot) {
  auto it = advance_cache_.find(prev_slot);
  if (it != advance_cache_.end()) return it->second;
  std::vector<double> row(cand_.pois.size());
  const Poi& prev = world_.poi(cand_.pois[prev_slot]);
  for (size_t j = 0; j < cand_.pois.size(); ++j)
    row[j] = advance_cost(prev, world_.poi(cand_.pois[j]), tm_);
  return advance_cache_.emplace(prev_slot, std::move(row)).first->second;
}

bool GeneratorRun::feasible(const DecoderState& s, int slot) {
  if (s.visited[slot]) return false;
  const double adv = advance_costs(s.selected_slots.back())[slot];
  return s.cost_s + adv <= budget_;
}

std::vector<char> GeneratorRun::feasible_mask(const DecoderState& s) {
  std::vector<char> mask(cand_.pois.size(), 0);
  const auto& adv = advance_costs(s.selected_slots.back());
  for (size_t j = 0; j < mask.size(); ++j)
    mask[j] = !s.visited[j] && s.cost_s + adv[j] <= budget_;
  return mask;
}

bool GeneratorRun::any_feasible(const DecoderState& s) {
  const auto mask = feasible_mask(s);
  for (char m : mask)
    if (m) return true;
  return false;
}

std::optional<Val> GeneratorRun::next_log_probs(const DecoderState& s) {
  const int n = slots();
  const auto mask = feasible_mask(s);
  bool any = false;
  Tensor mask_row(1, n);
  for (int j = 0; j < n; ++j) {
    mask_row[j] = mask[j] ? 0.0 : kMaskedLogit;
    any = any || mask[j];
  }
  if (!any) return std::nullopt;
  Val mask_v = t_.constant(std::move(mask_row));

  // context: [mean-pooled encoding; previous POI encoding; normalized T_t]
  const int prev_slot = s.selected_slots.back();
  Val t_feature = t_.constant(Tensor::scalar(s.remaining_s / budget_));
  Val h_c = t_.concat_cols({mean_h_, t_.row(h_enc_, prev_slot), t_feature});

  // glimpse over feasible candidates, one attention head per encoder head
  const int d = model_.cfg.d;
  const int heads = model_.cfg.heads;
  const int dh = d / heads;
  Val q_full = t_.matmul(h_c, t_.leaf(model_.glimpse_wq));
  std::vector<Val> refined;
  refined.reserve(heads);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int m = 0; m < heads; ++m) {
    Val qm = t_.slice_cols(q_full, m * dh, (m + 1) * dh);
    Val scores = t_.scale(t_.matmul_nt(qm, glimpse_k_[m]), inv_sqrt_dh);
    Val alpha = t_.softmax_rows(t_.add(scores, mask_v));
    refined.push_back(t_.matmul(alpha, glimpse_v_[m]));
  }
  Val h_glimpse = t_.concat_cols(refined);

  // single-head prediction over the same feasible set
  Val pq = t_.matmul(h_glimpse, t_.leaf(model_.predict_wq));
  Val logits = t_.scale(t_.matmul_nt(pq, predict_k_), 1.0 / std::sqrt(static_cast<double>(d)));
  return t_.log_softmax_rows(t_.add(logits, mask_v));
}

void GeneratorRun::advance(DecoderState& s, int slot) {
  if (!feasible(s, slot))
    throw std::logic_error("advance on infeasible slot " + std::to_string(slot));
  s.cost_s += advance_costs(s.selected_slots.back())[slot];
  s.remaining_s = budget_ - s.cost_s;
  s.selected_slots.push_back(slot);
  s.visited[slot] = 1;
  s.step += 1;
}

int greedy_slot(const Tensor& log_probs) {
  int best = 0;
  double best_v = log_probs[0];
  for (int j = 1; j < log_probs.cols(); ++j)
    if (log_probs[j] > best_v) {  // ties keep the lowest slot index
      best_v = log_probs[j];
      best = j;
    }
  return best;
}

int sample_slot(const Tensor& log_probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last_positive = -1;
  for (int j = 0; j < log_probs.cols(); ++j) {
    const double p = log_probs[j] > kMaskThreshold ? std::exp(log_probs[j]) : 0.0;
    if (p > 0.0) last_positive = j;
    acc += p;
    if (acc >= u && p > 0.0) return j;
  }
  return last_positive;  // guards the acc < u tail from rounding
}

namespace {

int pick_slot(const Tensor& log_probs, DecodeMode mode, Rng* rng) {
  if (mode == DecodeMode::kGreedy) return greedy_slot(log_probs);
  if (rng == nullptr) throw std::invalid_argument("sample mode requires an rng");
  return sample_slot(log_probs, *rng);
}

}  // namespace

RolloutResult rollout_trip(GeneratorRun& run, DecodeMode mode, Rng* rng, int max_len) {
  RolloutResult result;
  const CandidateSet& cand = run.candidates();
  DecoderState s = run.initial_state();
  result.rollout.trip.user = cand.query.user;
  result.rollout.trip.pois = {cand.query.start};

  while (static_cast<int>(result.rollout.trip.pois.size()) < max_len) {
    auto log_probs = run.next_log_probs(s);
    if (!log_probs) break;
    const int slot = pick_slot(run.tape().value(*log_probs), mode, rng);
    Val lp = run.tape().at(*log_probs, 0, slot);
    result.log_prob_nodes.push_back(lp);
    result.rollout.step_log_probs.push_back(run.tape().value(lp).item());
    result.slots.push_back(slot);
    run.advance(s, slot);
    result.rollout.trip.pois.push_back(cand.pois[slot]);
  }
  result.rollout.total_time_s = s.cost_s;
  return result;
}

Rollout generate_trip(GeneratorModel& model, const TripQuery& q, const CandidateSet& cand,
                      const World& world, const TimeModel& tm, DecodeMode mode, int max_len,
                      Rng* rng) {
  if (q.budget_s < tm.duration(q.start))
    throw DataError("infeasible query: budget below the start POI duration");
  Tape tape(/*grad_enabled=*/false);
  GeneratorRun run(tape, model, cand, world, tm, RunMode::eval());
  return rollout_trip(run, mode, rng, max_len).rollout;
}

std::vector<double> replay_log_probs(GeneratorModel& model, const CandidateSet& cand,
                                     const World& world, const TimeModel& tm,
                                     const std::vector<int>& trip_pois) {
  if (trip_pois.empty() || trip_pois.front() != cand.query.start)
    throw std::invalid_argument("replay trip must begin at the query start");
  std::unordered_map<int, int> slot_of;
  for (size_t j = 0; j < cand.pois.size(); ++j) slot_of[cand.pois[j]] = static_cast<int>(j);

  Tape tape(/*grad_enabled=*/false);
  GeneratorRun run(tape, model, cand, world, tm, RunMode::eval());
  DecoderState s = run.initial_state();
  std::vector<double> out;
  for (size_t i = 1; i < trip_pois.size(); ++i) {
    auto it = slot_of.find(trip_pois[i]);
    if (it == slot_of.end()) throw DataError("replay POI not in candidate set");
    auto log_probs = run.next_log_probs(s);
    if (!log_probs) throw DataError("replay trip infeasible under the model mask");
    out.push_back(tape.value(*log_probs)[it->second]);
    run.advance(s, it->second);
  }
  return out;
}

}  // namespace ant
