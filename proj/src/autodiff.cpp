#include "ant/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ant {

namespace {

// Tape workloads allocate and free many MB-sized tensors per query. With the
// default glibc mmap threshold each one becomes an mmap/munmap pair plus page
// faults, an order of magnitude slower than arena reuse. Raise the threshold
// once so large tensor buffers stay in the heap.
struct AllocatorTuning {
  AllocatorTuning() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 64 * 1024 * 1024);
#endif
  }
};

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tape::Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {
  static AllocatorTuning tuning;
}

void Tape::clear() { nodes_.clear(); }

const Tensor& Tape::grad(Val v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) throw std::logic_error("grad requested before backward reached this node");
  return n.grad;
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

Val Tape::push(Tensor value, bool needs_grad, std::function<void()> backprop) {
  if (check_finite_ && !value.all_finite())
    throw std::runtime_error("non-finite value produced by a tensor primitive");
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_enabled_ && needs_grad;
  if (n.needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Val{static_cast<int>(nodes_.size()) - 1};
}

Val Tape::constant(Tensor t) { return push(std::move(t), false, nullptr); }

Val Tape::leaf(Parameter& p) {
  Parameter* pp = &p;
  Val out = push(p.value, true, nullptr);
  if (grad_enabled_) {
    int id = out.id;
    nodes_[id].backprop = [this, pp, id]() {
      const Tensor& g = nodes_[id].grad;
      for (size_t i = 0; i < g.size(); ++i) pp->grad[i] += g[i];
    };
  }
  return out;
}

Val Tape::matmul(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.cols() == tb.rows(), "matmul shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out(ta.rows(), tb.cols());
  matmul_acc(ta, tb, false, out);
  bool ng = track(a) || track(b);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, ib = b.id, io = v.id;
    bool na = track(a), nb = track(b);
    nodes_[io].backprop = [this, ia, ib, io, na, nb]() {
      const Tensor& g = nodes_[io].grad;
      if (na) matmul_acc(g, nodes_[ib].value, true, grad_buf(ia));       // dA += G * B^T
      if (nb) matmul_tn_acc(nodes_[ia].value, g, grad_buf(ib));          // dB += A^T * G
    };
  }
  return v;
}

Val Tape::matmul_nt(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.cols() == tb.cols(), "matmul_nt shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out(ta.rows(), tb.rows());
  matmul_acc(ta, tb, true, out);
  bool ng = track(a) || track(b);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, ib = b.id, io = v.id;
    bool na = track(a), nb = track(b);
    nodes_[io].backprop = [this, ia, ib, io, na, nb]() {
      const Tensor& g = nodes_[io].grad;
      if (na) matmul_acc(g, nodes_[ib].value, false, grad_buf(ia));      // dA += G * B
      if (nb) matmul_tn_acc(g, nodes_[ia].value, grad_buf(ib));          // dB += G^T * A
    };
  }
  return v;
}

Val Tape::add(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb), "add shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  bool ng = track(a) || track(b);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, ib = b.id, io = v.id;
    bool na = track(a), nb = track(b);
    nodes_[io].backprop = [this, ia, ib, io, na, nb]() {
      const Tensor& g = nodes_[io].grad;
      if (na) {
        Tensor& da = grad_buf(ia);
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (nb) {
        Tensor& db = grad_buf(ib);
        for (size_t i = 0; i < g.size(); ++i) db[i] += g[i];
      }
    };
  }
  return v;
}

Val Tape::sub(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb), "sub shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
  bool ng = track(a) || track(b);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, ib = b.id, io = v.id;
    bool na = track(a), nb = track(b);
    nodes_[io].backprop = [this, ia, ib, io, na, nb]() {
      const Tensor& g = nodes_[io].grad;
      if (na) {
        Tensor& da = grad_buf(ia);
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (nb) {
        Tensor& db = grad_buf(ib);
        for (size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
      }
    };
  }
  return v;
}

Val Tape::mul(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb), "mul shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  bool ng = track(a) || track(b);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, ib = b.id, io = v.id;
    bool na = track(a), nb = track(b);
    nodes_[io].backprop = [this, ia, ib, io, na, nb]() {
      const Tensor& g = nodes_[io].grad;
      if (na) {
        Tensor& da = grad_buf(ia);
        const Tensor& vb = nodes_[ib].value;
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * vb[i];
      }
      if (nb) {
        Tensor& db = grad_buf(ib);
        const Tensor& va = nodes_[ia].value;
        for (size_t i = 0; i < g.size(); ++i) db[i] += g[i] * va[i];
      }
    };
  }
  return v;
}

Val Tape::add_row(Val a, Val rv) {
  const Tensor& ta = value(a);
  const Tensor& tr = value(rv);
  require(tr.rows() == 1 && tr.cols() == ta.cols(),
          "add_row shape mismatch: " + ta.shape_str() + " vs " + tr.shape_str());
  Tensor out = ta;
  for (int i = 0; i < out.rows(); ++i) {
    double* r = out.row_ptr(i);
    for (int j = 0; j < out.cols(); ++j) r[j] += tr[j];
  }
  bool ng = track(a) || track(rv);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, ir = rv.id, io = v.id;
    bool na = track(a), nr = track(rv);
    nodes_[io].backprop = [this, ia, ir, io, na, nr]() {
      const Tensor& g = nodes_[io].grad;
      if (na) {
        Tensor& da = grad_buf(ia);
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (nr) {
        Tensor& dr = grad_buf(ir);
        for (int i = 0; i < g.rows(); ++i) {
          const double* gr = g.row_ptr(i);
          for (int j = 0; j < g.cols(); ++j) dr[j] += gr[j];
        }
      }
    };
  }
  return v;
}

Val Tape::sub_row(Val a, Val rv) {
  const Tensor& ta = value(a);
  const Tensor& tr = value(rv);
  require(tr.rows() == 1 && tr.cols() == ta.cols(),
          "sub_row shape mismatch: " + ta.shape_str() + " vs " + tr.shape_str());
  Tensor out = ta;
  for (int i = 0; i < out.rows(); ++i) {
    double* r = out.row_ptr(i);
    for (int j = 0; j < out.cols(); ++j) r[j] -= tr[j];
  }
  bool ng = track(a) || track(rv);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, ir = rv.id, io = v.id;
    bool na = track(a), nr = track(rv);
    nodes_[io].backprop = [this, ia, ir, io, na, nr]() {
      const Tensor& g = nodes_[io].grad;
      if (na) {
        Tensor& da = grad_buf(ia);
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (nr) {
        Tensor& dr = grad_buf(ir);
        for (int i = 0; i < g.rows(); ++i) {
          const double* gr = g.row_ptr(i);
          for (int j = 0; j < g.cols(); ++j) dr[j] -= gr[j];
        }
      }
    };
  }
  return v;
}

Val Tape::mul_row(Val a, Val rv) {
  const Tensor& ta = value(a);
  const Tensor& tr = value(rv);
  require(tr.rows() == 1 && tr.cols() == ta.cols(),
          "mul_row shape mismatch: " + ta.shape_str() + " vs " + tr.shape_str());
  Tensor out = ta;
  for (int i = 0; i < out.rows(); ++i) {
    double* r = out.row_ptr(i);
    for (int j = 0; j < out.cols(); ++j) r[j] *= tr[j];
  }
  bool ng = track(a) || track(rv);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, ir = rv.id, io = v.id;
    bool na = track(a), nr = track(rv);
    nodes_[io].backprop = [this, ia, ir, io, na, nr]() {
      const Tensor& g = nodes_[io].grad;
      const Tensor& va = nodes_[ia].value;
      const Tensor& vr = nodes_[ir].value;
      if (na) {
        Tensor& da = grad_buf(ia);
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) da.at(i, j) += g.at(i, j) * vr[j];
      }
      if (nr) {
        Tensor& dr = grad_buf(ir);
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) dr[j] += g.at(i, j) * va.at(i, j);
      }
    };
  }
  return v;
}

Val Tape::div_row(Val a, Val rv) {
  const Tensor& ta = value(a);
  const Tensor& tr = value(rv);
  require(tr.rows() == 1 && tr.cols() == ta.cols(),
          "div_row shape mismatch: " + ta.shape_str() + " vs " + tr.shape_str());
  Tensor out = ta;
  for (int i = 0; i < out.rows(); ++i) {
    double* r = out.row_ptr(i);
    for (int j = 0; j < out.cols(); ++j) r[j] /= tr[j];
  }
  bool ng = track(a) || track(rv);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, ir = rv.id, io = v.id;
    bool na = track(a), nr = track(rv);
    nodes_[io].backprop = [this, ia, ir, io, na, nr]() {
      const Tensor& g = nodes_[io].grad;
      const Tensor& vo = nodes_[io].value;
      const Tensor& vr = nodes_[ir].value;
      if (na) {
        Tensor& da = grad_buf(ia);
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) da.at(i, j) += g.at(i, j) / vr[j];
      }
      if (nr) {
        Tensor& dr = grad_buf(ir);
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) dr[j] -= g.at(i, j) * vo.at(i, j) / vr[j];
      }
    };
  }
  return v;
}

Val Tape::scale(Val a, double s) {
  Tensor out = value(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] *= s;
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io, s]() {
      const Tensor& g = nodes_[io].grad;
      Tensor& da = grad_buf(ia);
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * s;
    };
  }
  return v;
}

Val Tape::add_scalar(Val a, double s) {
  Tensor out = value(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] += s;
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io]() {
      const Tensor& g = nodes_[io].grad;
      Tensor& da = grad_buf(ia);
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    };
  }
  return v;
}

Val Tape::relu(Val a) {
  Tensor out = value(a);
  for (size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] = 0.0;
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io]() {
      const Tensor& g = nodes_[io].grad;
      const Tensor& va = nodes_[ia].value;
      Tensor& da = grad_buf(ia);
      for (size_t i = 0; i < g.size(); ++i)
        if (va[i] > 0.0) da[i] += g[i];
    };
  }
  return v;
}

Val Tape::sigmoid(Val a) {
  Tensor out = value(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(out[i]);
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io]() {
      const Tensor& g = nodes_[io].grad;
      const Tensor& y = nodes_[io].value;
      Tensor& da = grad_buf(ia);
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
    };
  }
  return v;
}

Val Tape::tanh(Val a) {
  Tensor out = value(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io]() {
      const Tensor& g = nodes_[io].grad;
      const Tensor& y = nodes_[io].value;
      Tensor& da = grad_buf(ia);
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
    };
  }
  return v;
}

Val Tape::sqrt(Val a) {
  Tensor out = value(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io]() {
      const Tensor& g = nodes_[io].grad;
      const Tensor& y = nodes_[io].value;
      Tensor& da = grad_buf(ia);
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * 0.5 / y[i];
    };
  }
  return v;
}

Val Tape::exp(Val a) {
  Tensor out = value(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io]() {
      const Tensor& g = nodes_[io].grad;
      const Tensor& y = nodes_[io].value;
      Tensor& da = grad_buf(ia);
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i];
    };
  }
  return v;
}

Val Tape::log(Val a) {
  Tensor out = value(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io]() {
      const Tensor& g = nodes_[io].grad;
      const Tensor& va = nodes_[ia].value;
      Tensor& da = grad_buf(ia);
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] / va[i];
    };
  }
  return v;
}

Val Tape::transpose(Val a) {
  const Tensor& ta = value(a);
  Tensor out(ta.cols(), ta.rows());
  for (int i = 0; i < ta.rows(); ++i)
    for (int j = 0; j < ta.cols(); ++j) out.at(j, i) = ta.at(i, j);
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io]() {
      const Tensor& g = nodes_[io].grad;
      Tensor& da = grad_buf(ia);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) da.at(j, i) += g.at(i, j);
    };
  }
  return v;
}

Val Tape::concat_cols(const std::vector<Val>& parts) {
  require(!parts.empty(), "concat_cols: empty part list");
  int rows = value(parts[0]).rows();
  int cols = 0;
  bool ng = false;
  for (Val p : parts) {
    require(value(p).rows() == rows, "concat_cols: row count mismatch");
    cols += value(p).cols();
    ng = ng || track(p);
  }
  Tensor out(rows, cols);
  int off = 0;
  for (Val p : parts) {
    const Tensor& tp = value(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < tp.cols(); ++j) out.at(i, off + j) = tp.at(i, j);
    off += tp.cols();
  }
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    std::vector<int> ids;
    std::vector<int> widths;
    for (Val p : parts) {
      ids.push_back(p.id);
      widths.push_back(value(p).cols());
    }
    int io = v.id;
    nodes_[io].backprop = [this, ids, widths, io]() {
      const Tensor& g = nodes_[io].grad;
      int off2 = 0;
      for (size_t k = 0; k < ids.size(); ++k) {
        if (nodes_[ids[k]].needs_grad) {
          Tensor& dp = grad_buf(ids[k]);
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < widths[k]; ++j) dp.at(i, j) += g.at(i, off2 + j);
        }
        off2 += widths[k];
      }
    };
  }
  return v;
}

Val Tape::slice_cols(Val a, int c0, int c1) {
  const Tensor& ta = value(a);
  require(0 <= c0 && c0 < c1 && c1 <= ta.cols(), "slice_cols: bad range");
  Tensor out(ta.rows(), c1 - c0);
  for (int i = 0; i < ta.rows(); ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = ta.at(i, j);
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io, c0]() {
      const Tensor& g = nodes_[io].grad;
      Tensor& da = grad_buf(ia);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) da.at(i, c0 + j) += g.at(i, j);
    };
  }
  return v;
}

Val Tape::row(Val a, int r) {
  const Tensor& ta = value(a);
  require(0 <= r && r < ta.rows(), "row: index out of range");
  Tensor out(1, ta.cols());
  for (int j = 0; j < ta.cols(); ++j) out[j] = ta.at(r, j);
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io, r]() {
      const Tensor& g = nodes_[io].grad;
      Tensor& da = grad_buf(ia);
      for (int j = 0; j < g.cols(); ++j) da.at(r, j) += g[j];
    };
  }
  return v;
}

Val Tape::at(Val a, int r, int c) {
  const Tensor& ta = value(a);
  require(0 <= r && r < ta.rows() && 0 <= c && c < ta.cols(), "at: index out of range");
  Tensor out = Tensor::scalar(ta.at(r, c));
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io, r, c]() {
      grad_buf(ia).at(r, c) += nodes_[io].grad[0];
    };
  }
  return v;
}

Val Tape::gather_rows(Val table, std::vector<int> indices) {
  const Tensor& tt = value(table);
  for (int idx : indices)
    require(0 <= idx && idx < tt.rows(), "gather_rows: index out of range");
  Tensor out(static_cast<int>(indices.size()), tt.cols());
  for (size_t i = 0; i < indices.size(); ++i)
    for (int j = 0; j < tt.cols(); ++j) out.at(static_cast<int>(i), j) = tt.at(indices[i], j);
  bool ng = track(table);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int it = table.id, io = v.id;
    nodes_[io].backprop = [this, it, io, indices = std::move(indices)]() {
      const Tensor& g = nodes_[io].grad;
      Tensor& dt = grad_buf(it);
      for (size_t i = 0; i < indices.size(); ++i)
        for (int j = 0; j < g.cols(); ++j) dt.at(indices[i], j) += g.at(static_cast<int>(i), j);
    };
  }
  return v;
}

Val Tape::mean_rows(Val a) {
  const Tensor& ta = value(a);
  require(ta.rows() >= 1, "mean_rows: empty tensor");
  Tensor out(1, ta.cols());
  for (int i = 0; i < ta.rows(); ++i)
    for (int j = 0; j < ta.cols(); ++j) out[j] += ta.at(i, j);
  const double inv = 1.0 / ta.rows();
  for (int j = 0; j < ta.cols(); ++j) out[j] *= inv;
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io, inv]() {
      const Tensor& g = nodes_[io].grad;
      Tensor& da = grad_buf(ia);
      for (int i = 0; i < da.rows(); ++i)
        for (int j = 0; j < da.cols(); ++j) da.at(i, j) += g[j] * inv;
    };
  }
  return v;
}

Val Tape::sum(Val a) {
  const Tensor& ta = value(a);
  double s = 0.0;
  for (size_t i = 0; i < ta.size(); ++i) s += ta[i];
  bool ng = track(a);
  Val v = push(Tensor::scalar(s), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io]() {
      const double g = nodes_[io].grad[0];
      Tensor& da = grad_buf(ia);
      for (size_t i = 0; i < da.size(); ++i) da[i] += g;
    };
  }
  return v;
}

Val Tape::mean_all(Val a) {
  const Tensor& ta = value(a);
  require(ta.size() > 0, "mean_all: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(ta.size()));
}

Val Tape::softmax_rows(Val a) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows(), ta.cols());
  for (int i = 0; i < ta.rows(); ++i) {
    double mx = -HUGE_VAL;
    for (int j = 0; j < ta.cols(); ++j)
      if (ta.at(i, j) > kMaskThreshold && ta.at(i, j) > mx) mx = ta.at(i, j);
    if (mx == -HUGE_VAL) throw std::domain_error("fully masked distribution");
    double denom = 0.0;
    for (int j = 0; j < ta.cols(); ++j) {
      if (ta.at(i, j) > kMaskThreshold) {
        out.at(i, j) = std::exp(ta.at(i, j) - mx);
        denom += out.at(i, j);
      } else {
        out.at(i, j) = 0.0;
      }
    }
    const double inv = 1.0 / denom;
    for (int j = 0; j < ta.cols(); ++j) out.at(i, j) *= inv;
  }
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io]() {
      const Tensor& g = nodes_[io].grad;
      const Tensor& y = nodes_[io].value;
      Tensor& da = grad_buf(ia);
      for (int i = 0; i < g.rows(); ++i) {
        double dot = 0.0;
        for (int j = 0; j < g.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
        // masked entries have y == 0 exactly, so their gradient stays 0
        for (int j = 0; j < g.cols(); ++j) da.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
      }
    };
  }
  return v;
}

Val Tape::log_softmax_rows(Val a) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows(), ta.cols());
  Tensor probs(ta.rows(), ta.cols());
  for (int i = 0; i < ta.rows(); ++i) {
    double mx = -HUGE_VAL;
    for (int j = 0; j < ta.cols(); ++j)
      if (ta.at(i, j) > kMaskThreshold && ta.at(i, j) > mx) mx = ta.at(i, j);
    if (mx == -HUGE_VAL) throw std::domain_error("fully masked distribution");
    double denom = 0.0;
    for (int j = 0; j < ta.cols(); ++j)
      if (ta.at(i, j) > kMaskThreshold) denom += std::exp(ta.at(i, j) - mx);
    const double lse = mx + std::log(denom);
    for (int j = 0; j < ta.cols(); ++j) {
      if (ta.at(i, j) > kMaskThreshold) {
        out.at(i, j) = ta.at(i, j) - lse;
        probs.at(i, j) = std::exp(out.at(i, j));
      } else {
        out.at(i, j) = kMaskedLogit;
        probs.at(i, j) = 0.0;
      }
    }
  }
  bool ng = track(a);
  Val v = push(std::move(out), ng, nullptr);
  if (ng) {
    int ia = a.id, io = v.id;
    nodes_[io].backprop = [this, ia, io, probs = std::move(probs)]() {
      const Tensor& g = nodes_[io].grad;
      const Tensor& x = nodes_[ia].value;  // masked status comes from the input
      Tensor& da = grad_buf(ia);
      for (int i = 0; i < g.rows(); ++i) {
        double gsum = 0.0;
        for (int j = 0; j < g.cols(); ++j)
          if (x.at(i, j) > kMaskThreshold) gsum += g.at(i, j);
        for (int j = 0; j < g.cols(); ++j)
          if (x.at(i, j) > kMaskThreshold) da.at(i, j) += g.at(i, j) - probs.at(i, j) * gsum;
      }
    };
  }
  return v;
}

void Tape::backward(Val loss) {
  if (!grad_enabled_) throw std::logic_error("backward on a gradient-disabled tape");
  const Tensor& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got " + lv.shape_str());
  grad_buf(loss.id)[0] += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backprop) continue;
    n.backprop();
  }
}

}  // namespace ant
