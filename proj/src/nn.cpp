#include "ant/nn.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ant {

void adam_update(Parameter& p, const AdamConfig& cfg) {
  p.step_count += 1;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(p.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(p.step_count));
  for (size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad[i];
    p.adam_m[i] = b1 * p.adam_m[i] + (1.0 - b1) * g;
    p.adam_v[i] = b2 * p.adam_v[i] + (1.0 - b2) * g * g;
    const double mhat = p.adam_m[i] / bc1;
    const double vhat = p.adam_v[i] / bc2;
    p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  p.zero_grad();
}

Tensor uniform_init(int rows, int cols, int fan_in, Rng& rng) {
  Tensor t(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : w(name + "/w", uniform_init(in, out, in, rng)), b(name + "/b", Tensor(1, out)) {}

Val Linear::forward(Tape& t, Val x) {
  return t.add_row(t.matmul(x, t.leaf(w)), t.leaf(b));
}

Val scaled_dot_attention(Tape& t, Val q, Val k, Val v) {
  const int dk = t.value(k).cols();
  Val scores = t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dk)));
  return t.matmul(t.softmax_rows(scores), v);
}

BatchNorm::BatchNorm(const std::string& name, int d)
    : gamma(name + "/gamma", Tensor::full(1, d, 1.0)),
      beta(name + "/beta", Tensor(1, d)),
      running_mean(1, d),
      running_var(Tensor::full(1, d, 1.0)) {}

Val BatchNorm::forward(Tape& t, Val x, const RunMode& mode) {
  const Tensor& xv = t.value(x);
  if (mode.training && xv.rows() < 2)
    throw std::invalid_argument("batch norm needs at least 2 rows in training mode");
  Val mean, var;
  if (xv.rows() >= 2) {
    // statistics of the current set, in training and at inference alike; a
    // frozen global average does not transfer between candidate sets (their
    // per-feature scales differ by query) and wrecks evaluation
    mean = t.mean_rows(x);
    Val centered = t.sub_row(x, mean);
    var = t.mean_rows(t.mul(centered, centered));
    if (mode.update_stats) {
      const Tensor& mv = t.value(mean);
      const Tensor& vv = t.value(var);
      for (int j = 0; j < running_mean.cols(); ++j) {
        running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mv[j];
        running_var[j] = (1.0 - momentum) * running_var[j] + momentum * vv[j];
      }
    }
  } else {
    // single-row input: fall back to the stored running statistics
    mean = t.constant(running_mean);
    var = t.constant(running_var);
  }
  Val denom = t.sqrt(t.add_scalar(var, eps));
  Val norm = t.div_row(t.sub_row(x, mean), denom);
  return t.add_row(t.mul_row(norm, t.leaf(gamma)), t.leaf(beta));
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, int d, int heads_, Rng& rng)
    : wq(name + "/wq", uniform_init(d, d, d, rng)),
      wk(name + "/wk", uniform_init(d, d, d, rng)),
      wv(name + "/wv", uniform_init(d, d, d, rng)),
      wo(name + "/wo", uniform_init(d, d, d, rng)),
      heads(heads_) {
  if (d % heads_ != 0) throw std::invalid_argument("model width not divisible by head count");
}

Val MultiHeadAttention::forward(Tape& t, Val h) {
  const int d = t.value(h).cols();
  const int dh = d / heads;
  Val q = t.matmul(h, t.leaf(wq));
  Val k = t.matmul(h, t.leaf(wk));
  Val v = t.matmul(h, t.leaf(wv));
  std::vector<Val> outs;
  outs.reserve(heads);
  for (int m = 0; m < heads; ++m) {
    Val qm = t.slice_cols(q, m * dh, (m + 1) * dh);
    Val km = t.slice_cols(k, m * dh, (m + 1) * dh);
    Val vm = t.slice_cols(v, m * dh, (m + 1) * dh);
    outs.push_back(scaled_dot_attention(t, qm, km, vm));
  }
  return t.matmul(t.concat_cols(outs), t.leaf(wo));
}

FeedForward::FeedForward(const std::string& name, int d, int inner, Rng& rng)
    : l1(name + "/l1", d, inner, rng), l2(name + "/l2", inner, d, rng) {}

Val FeedForward::forward(Tape& t, Val x) {
  return l2.forward(t, t.relu(l1.forward(t, x)));
}

EncoderLayer::EncoderLayer(const std::string& name, int d, int heads, int ffn_inner, Rng& rng)
    : mha(name + "/mha", d, heads, rng),
      bn1(name + "/bn1", d),
      ffn(name + "/ffn", d, ffn_inner, rng),
      bn2(name + "/bn2", d) {}

Val EncoderLayer::forward(Tape& t, Val h, const RunMode& mode) {
  Val h1 = bn1.forward(t, t.add(h, mha.forward(t, h)), mode);
  return bn2.forward(t, t.add(h1, ffn.forward(t, h1)), mode);
}

GruCell::GruCell(const std::string& name, int d_in, int d_h, Rng& rng)
    : wxz(name + "/wxz", uniform_init(d_in, d_h, d_in, rng)),
      whz(name + "/whz", uniform_init(d_h, d_h, d_h, rng)),
      bz(name + "/bz", Tensor(1, d_h)),
      wxr(name + "/wxr", uniform_init(d_in, d_h, d_in, rng)),
      whr(name + "/whr", uniform_init(d_h, d_h, d_h, rng)),
      br(name + "/br", Tensor(1, d_h)),
      wxh(name + "/wxh", uniform_init(d_in, d_h, d_in, rng)),
      whh(name + "/whh", uniform_init(d_h, d_h, d_h, rng)),
      bh(name + "/bh", Tensor(1, d_h)),
      hidden(d_h) {}

Val GruCell::step(Tape& t, Val x, Val h) {
  Val z = t.sigmoid(t.add_row(t.add(t.matmul(x, t.leaf(wxz)), t.matmul(h, t.leaf(whz))), t.leaf(bz)));
  Val r = t.sigmoid(t.add_row(t.add(t.matmul(x, t.leaf(wxr)), t.matmul(h, t.leaf(whr))), t.leaf(br)));
  Val cand = t.tanh(
      t.add_row(t.add(t.matmul(x, t.leaf(wxh)), t.matmul(t.mul(r, h), t.leaf(whh))), t.leaf(bh)));
  // h' = (1 - z) .* h + z .* cand
  Val one_minus_z = t.add_scalar(t.neg(z), 1.0);
  return t.add(t.mul(one_minus_z, h), t.mul(z, cand));
}

namespace {

constexpr char kMagic[4] = {'A', 'N', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& blocks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  write_pod<std::uint64_t>(out, blocks.size());
  for (const auto& b : blocks) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    write_pod<std::uint32_t>(out, 2);
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(b.tensor->rows()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(b.tensor->cols()));
    out.write(reinterpret_cast<const char*>(b.tensor->data()),
              static_cast<std::streamsize>(b.tensor->size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

namespace {

void load_blocks(std::ifstream& in, const std::string& path, const std::vector<NamedTensor>& blocks);

}  // namespace

void load_checkpoint(const std::string& path, const std::vector<NamedTensor>& blocks) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  const auto count = read_pod<std::uint64_t>(in);
  if (count != blocks.size())
    throw std::runtime_error("checkpoint block count mismatch in " + path);
  load_blocks(in, path, blocks);
}

void load_checkpoint_prefix(const std::string& path, const std::vector<NamedTensor>& blocks) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  const auto count = read_pod<std::uint64_t>(in);
  if (count < blocks.size())
    throw std::runtime_error("checkpoint has fewer blocks than requested in " + path);
  load_blocks(in, path, blocks);
}

namespace {

void load_blocks(std::ifstream& in, const std::string& path, const std::vector<NamedTensor>& blocks) {
  for (const auto& b : blocks) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in || name != b.name)
      throw std::runtime_error("checkpoint block name mismatch: expected " + b.name + ", got " + name);
    const auto rank = read_pod<std::uint32_t>(in);
    if (rank != 2) throw std::runtime_error("unsupported checkpoint tensor rank");
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    if (rows != static_cast<std::uint64_t>(b.tensor->rows()) ||
        cols != static_cast<std::uint64_t>(b.tensor->cols()))
      throw std::runtime_error("checkpoint shape mismatch for " + b.name);
    in.read(reinterpret_cast<char*>(b.tensor->data()),
            static_cast<std::streamsize>(b.tensor->size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint truncated while reading " + b.name);
  }
}

}  // namespace

}  // namespace ant
