#pragma once

#include <vector>

#include "ant/geo.hpp"
#include "ant/nn.hpp"

namespace ant {

struct DiscriminatorConfig {
  int d_poi = 64;
  int hidden = 64;
  int head_inner = 32;

  static DiscriminatorConfig desk() { return {}; }
  static DiscriminatorConfig paper() { return {256, 256, 32}; }
};

/// GRU over POI embeddings followed by a two-layer feed-forward head with a
/// two-way softmax over {fake, real}. Owns its POI table; the generator's
/// embeddings are not shared.
struct DiscriminatorModel {
  DiscriminatorConfig cfg;
  int n_pois = 0;

  Parameter poi_table;
  GruCell gru;
  Linear head1, head2;

  DiscriminatorModel() = default;
  DiscriminatorModel(const DiscriminatorConfig& cfg, int n_pois, Rng& rng);

  std::vector<Parameter*> parameters();
  std::vector<NamedTensor> checkpoint_tensors();

  /// Logits [1 x 2] in order (fake, real).
  Val trip_logits(Tape& t, const std::vector<int>& pois);
  /// log D(trip) and log(1 - D(trip)), computed stably from the logits.
  Val log_real(Tape& t, const std::vector<int>& pois);
  Val log_fake(Tape& t, const std::vector<int>& pois);
};

/// D_phi(trip): probability the trip is a real-life trajectory, in (0,1).
double score_trip(DiscriminatorModel& model, const Trip& trip);

/// -mean log D(real) - mean log(1 - D(fake)).
double discriminator_loss(DiscriminatorModel& model, const std::vector<Trip>& real,
                          const std::vector<Trip>& fake);

/// Same loss on a gradient tape; used by training steps.
Val discriminator_loss_node(Tape& t, DiscriminatorModel& model, const std::vector<Trip>& real,
                            const std::vector<Trip>& fake);

}  // namespace ant
