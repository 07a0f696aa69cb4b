#include "ant/discriminator.hpp"

#include <stdexcept>

namespace ant {

DiscriminatorModel::DiscriminatorModel(const DiscriminatorConfig& cfg_, int n_pois_, Rng& rng)
    : cfg(cfg_), n_pois(n_pois_) {
  poi_table = Parameter("disc/poi_table", uniform_init(n_pois, cfg.d_poi, cfg.d_poi, rng));
  gru = GruCell("disc/gru", cfg.d_poi, cfg.hidden, rng);
  head1 = Linear("disc/head1", cfg.hidden, cfg.head_inner, rng);
  head2 = Linear("disc/head2", cfg.head_inner, 2, rng);
}

std::vector<Parameter*> DiscriminatorModel::parameters() {
  return {&poi_table, &gru.wxz, &gru.whz, &gru.bz,    &gru.wxr,  &gru.whr, &gru.br,
          &gru.wxh,   &gru.whh, &gru.bh,  &head1.w,   &head1.b,  &head2.w, &head2.b};
}

std::vector<NamedTensor> DiscriminatorModel::checkpoint_tensors() {
  std::vector<NamedTensor> blocks;
  for (Parameter* p : parameters()) blocks.push_back({p->name, &p->value});
  return blocks;
}

Val DiscriminatorModel::trip_logits(Tape& t, const std::vector<int>& pois) {
  if (pois.empty()) throw std::invalid_argument("discriminator input trip is empty");
  for (int p : pois)
    if (p < 0 || p >= n_pois) throw DataError("unknown POI id: " + std::to_string(p));
  Val h = t.constant(Tensor(1, cfg.hidden));
  Val table = t.leaf(poi_table);
  for (int p : pois) {
    Val x = t.gather_rows(table, {p});
    h = gru.step(t, x, h);
  }
  return head2.forward(t, t.relu(head1.forward(t, h)));
}

Val DiscriminatorModel::log_real(Tape& t, const std::vector<int>& pois) {
  return t.at(t.log_softmax_rows(trip_logits(t, pois)), 0, 1);
}

Val DiscriminatorModel::log_fake(Tape& t, const std::vector<int>& pois) {
  return t.at(t.log_softmax_rows(trip_logits(t, pois)), 0, 0);
}

double score_trip(DiscriminatorModel& model, const Trip& trip) {
  Tape t(/*grad_enabled=*/false);
  Val probs = t.softmax_rows(model.trip_logits(t, trip.pois));
  return t.value(probs)[1];
}

Val discriminator_loss_node(Tape& t, DiscriminatorModel& model, const std::vector<Trip>& real,
                            const std::vector<Trip>& fake) {
  if (real.empty() || fake.empty())
    throw std::invalid_argument("discriminator loss needs non-empty real and fake batches");
  Val acc = t.constant(Tensor::scalar(0.0));
  for (const Trip& trip : real)
    acc = t.add(acc, t.scale(model.log_real(t, trip.pois), -1.0 / static_cast<double>(real.size())));
  for (const Trip& trip : fake)
    acc = t.add(acc, t.scale(model.log_fake(t, trip.pois), -1.0 / static_cast<double>(fake.size())));
  return acc;
}

double discriminator_loss(DiscriminatorModel& model, const std::vector<Trip>& real,
                          const std::vector<Trip>& fake) {
  Tape t(/*grad_enabled=*/false);
  return t.value(discriminator_loss_node(t, model, real, fake)).item();
}

}  // namespace ant
