#pragma once

#include <functional>
#include <vector>

#include "ant/tensor.hpp"

namespace ant {

/// A trainable tensor with its gradient accumulator and Adam state.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  long long step_count = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(value.rows(), value.cols()),
        adam_m(value.rows(), value.cols()),
        adam_v(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Logit values at or below this threshold are treated as fully masked:
/// softmax assigns them probability exactly 0 and no gradient flows to them.
/// A finite sentinel is used instead of -inf so tensors stay finite.
constexpr double kMaskedLogit = -1e9;
constexpr double kMaskThreshold = -1e8;

/// Handle to a node on a Tape. Only valid for the tape that created it.
struct Val {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Eager reverse-mode autodiff tape. Every operation computes its value
/// immediately and, when gradients are enabled, records a closure that
/// propagates adjoints to its inputs. backward() walks nodes in reverse
/// creation order, so the tape itself is the topological order.
///
/// Tapes are single-threaded. For inference construct with grad_enabled =
/// false; values are still computed but no backward closures are kept.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true);

  bool grad_enabled() const { return grad_enabled_; }
  size_t size() const { return nodes_.size(); }
  void clear();

  /// When set, every new node value is checked for NaN/Inf and a
  /// std::runtime_error is thrown on violation. Off by default (hot path).
  void set_check_finite(bool on) { check_finite_ = on; }

  Val constant(Tensor t);
  /// Trainable leaf: backward() accumulates into p.grad.
  Val leaf(Parameter& p);

  const Tensor& value(Val v) const { return nodes_[v.id].value; }
  const Tensor& grad(Val v) const;

  // ---- primitives ----
  Val matmul(Val a, Val b);     // [n x k] * [k x m]
  Val matmul_nt(Val a, Val b);  // [n x k] * [m x k]^T
  Val add(Val a, Val b);
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);        // elementwise
  Val add_row(Val a, Val row);  // broadcast row vector over rows of a
  Val sub_row(Val a, Val row);
  Val mul_row(Val a, Val row);
  Val div_row(Val a, Val row);
  Val scale(Val a, double s);
  Val add_scalar(Val a, double s);
  Val neg(Val a) { return scale(a, -1.0); }
  Val relu(Val a);
  Val sigmoid(Val a);
  Val tanh(Val a);
  Val sqrt(Val a);
  Val exp(Val a);
  Val log(Val a);
  Val transpose(Val a);
  Val concat_cols(const std::vector<Val>& parts);
  Val slice_cols(Val a, int c0, int c1);  // columns [c0, c1)
  Val row(Val a, int r);                  // 1 x C copy of one row
  Val at(Val a, int r, int c);            // 1 x 1
  Val gather_rows(Val table, std::vector<int> indices);
  Val mean_rows(Val a);  // [n x c] -> [1 x c]
  Val sum(Val a);        // -> 1 x 1
  Val mean_all(Val a);   // -> 1 x 1
  /// Row-wise softmax. Entries <= kMaskThreshold get probability exactly 0
  /// and are excluded from the max/sum. Throws if a row is fully masked.
  Val softmax_rows(Val a);
  /// Row-wise log-softmax with the same masking semantics; masked entries
  /// keep the kMaskedLogit sentinel in the output.
  Val log_softmax_rows(Val a);

  /// Reverse pass from a scalar node. Gradients of reachable Parameter
  /// leaves are accumulated into Parameter::grad.
  void backward(Val loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    std::function<void()> backprop;
    bool needs_grad = false;
  };

  Val push(Tensor value, bool needs_grad, std::function<void()> backprop);
  bool track(Val v) const { return grad_enabled_ && nodes_[v.id].needs_grad; }
  Tensor& grad_buf(int id);

  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool check_finite_ = false;
};

}  // namespace ant
