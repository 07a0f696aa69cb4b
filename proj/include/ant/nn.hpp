#pragma once

#include <string>
#include <vector>

#include "ant/autodiff.hpp"
#include "ant/rng.hpp"
#include "ant/tensor.hpp"

namespace ant {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam step with bias correction. Increments step_count and clears the
/// gradient afterwards.
void adam_update(Parameter& p, const AdamConfig& cfg);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
Tensor uniform_init(int rows, int cols, int fan_in, Rng& rng);

/// Forward options threaded through layers that distinguish training from
/// inference. update_stats only matters in training mode: replay passes
/// (finite-difference checks, teacher replay) keep batch statistics live
/// without touching the running averages.
struct RunMode {
  bool training = false;
  bool update_stats = false;

  static RunMode train() { return {true, true}; }
  static RunMode replay() { return {true, false}; }
  static RunMode eval() { return {false, false}; }
};

struct Linear {
  Parameter w;  // [in x out]
  Parameter b;  // [1 x out]

  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng);
  Val forward(Tape& t, Val x);
};

/// y = softmax(Q K^T / sqrt(d_k)) V with rows of q attending over rows of k/v.
Val scaled_dot_attention(Tape& t, Val q, Val k, Val v);

/// Batch normalization over the row (set) dimension, one statistic per
/// feature column. Statistics come from the current set whenever it has at
/// least two rows (training and inference alike — per-query feature scales
/// do not transfer between candidate sets); running averages cover the
/// single-row inference case and are refreshed only during training steps.
struct BatchNorm {
  Parameter gamma;  // [1 x d]
  Parameter beta;   // [1 x d]
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm() = default;
  BatchNorm(const std::string& name, int d);
  Val forward(Tape& t, Val x, const RunMode& mode);
};

struct MultiHeadAttention {
  Parameter wq, wk, wv, wo;  // all [d x d]
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int d, int heads, Rng& rng);
  Val forward(Tape& t, Val h);
};

struct FeedForward {
  Linear l1, l2;

  FeedForward() = default;
  FeedForward(const std::string& name, int d, int inner, Rng& rng);
  Val forward(Tape& t, Val x);
};

/// One encoder layer: BN(H + MHA(H)) then BN(H' + FFN(H')).
struct EncoderLayer {
  MultiHeadAttention mha;
  BatchNorm bn1;
  FeedForward ffn;
  BatchNorm bn2;

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, int d, int heads, int ffn_inner, Rng& rng);
  Val forward(Tape& t, Val h, const RunMode& mode);
};

/// Standard GRU cell; x is [1 x d_in], h is [1 x d_h].
struct GruCell {
  Parameter wxz, whz, bz;
  Parameter wxr, whr, br;
  Parameter wxh, whh, bh;
  int hidden = 0;

  GruCell() = default;
  GruCell(const std::string& name, int d_in, int d_h, Rng& rng);
  Val step(Tape& t, Val x, Val h);
};

/// Named tensor view used for checkpoints: parameters plus persistent
/// non-trainable state (batch-norm running statistics, model dimensions).
struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

/// Binary checkpoint: "ANT1" magic, little-endian u64 block count, then per
/// block u32 name length, name bytes, u32 rank, u64 dims, raw doubles.
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& blocks);
/// Loads into the given blocks; every block must be present with a matching
/// shape. Throws on magic/shape/name mismatch.
void load_checkpoint(const std::string& path, const std::vector<NamedTensor>& blocks);
/// Reads only the leading blocks of a checkpoint (used to recover model
/// dimensions before the full load).
void load_checkpoint_prefix(const std::string& path, const std::vector<NamedTensor>& blocks);

}  // namespace ant
