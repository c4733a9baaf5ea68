#include "hce/ad/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hce/kernels/kernels.hpp"

namespace hce::ad {

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kLookup: return "lookup";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kLinear: return "linear";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kSliceRows: return "slice_rows";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kSum: return "sum";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kMask: return "mask";
    case OpKind::kUnfold: return "unfold";
    case OpKind::kSegmentMax: return "segment_max";
    case OpKind::kAffine: return "affine";
    case OpKind::kTreeCell: return "tree_cell";
  }
  return "?";
}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return {this, it->second};
  Node n;
  n.kind = OpKind::kParameter;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_ids_[&p] = id;
  return {this, id};
}

Var Tape::sink(OpKind kind, Tensor value, BackwardFn backward) {
  Node n;
  n.kind = kind;
  n.requires_grad = true;
  n.backward = std::move(backward);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(OpKind kind, std::vector<int> operands, Tensor value, BackwardFn backward) {
#ifndef NDEBUG
  if (!value.all_finite()) {
    throw ContractError(std::string("non-finite value produced by ") + to_string(kind));
  }
#endif
  Node n;
  n.kind = kind;
  n.requires_grad = backward && any_requires_grad(operands);
  if (n.requires_grad) n.backward = std::move(backward);
  n.operands = std::move(operands);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

bool Tape::any_requires_grad(std::span<const int> ids) const {
  return std::any_of(ids.begin(), ids.end(), [&](int i) { return requires_grad(i); });
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_ready) {
    n.grad = Tensor(n.value.shape());
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
  if (value(loss.id).size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + value(loss.id).shape_str());
  }
  grad(loss.id)[0] += 1;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_ready || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      auto dst = n.param->grad.values();
      auto src = n.grad.values();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void shape_fail(OpKind k, const std::string& detail) {
  throw ShapeError(std::string(to_string(k)) + ": " + detail);
}

void require_same_tape(OpKind k, Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) shape_fail(k, "operands live on different tapes");
}

void add_into(Tensor& dst, const Tensor& src) {
  kernels::axpy(1, src.values(), dst.values());
}

// Helper: accumulate into operand gradient only when that operand needs one.
template <typename F>
void if_grad(Tape& t, int id, F&& f) {
  if (t.requires_grad(id)) f(t.grad(id));
}

Var elementwise_binary(OpKind k, Var a, Var b) {
  require_same_tape(k, a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.size() != B.size() || A.cols() != B.cols()) {
    shape_fail(k, A.shape_str() + " vs " + B.shape_str());
  }
  Tensor out = Tensor::uninitialized(A.shape());
  switch (k) {
    case OpKind::kAdd:
      for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
      break;
    case OpKind::kSub:
      for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] - B[i];
      break;
    default:
      kernels::hadamard(A.values(), B.values(), out.values());
  }
  const int ia = a.id, ib = b.id;
  return a.tape->record(k, {ia, ib}, std::move(out), [k, ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (k == OpKind::kMul) {
      if (t.requires_grad(ia)) {
        Tensor& ga = t.grad(ia);
        const Tensor& vb = t.value(ib);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (t.requires_grad(ib)) {
        Tensor& gb = t.grad(ib);
        const Tensor& va = t.value(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
      return;
    }
    if_grad(t, ia, [&](Tensor& ga) { add_into(ga, g); });
    if_grad(t, ib, [&](Tensor& gb) { kernels::axpy(k == OpKind::kSub ? -1 : 1, g.values(), gb.values()); });
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(OpKind::kMatmul, a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) shape_fail(OpKind::kMatmul, A.shape_str() + " x " + B.shape_str());
  Tensor out = Tensor::uninitialized({m, n});
  kernels::gemm(false, false, m, n, k, 1, A.data(), B.data(), 0, out.data());
  const int ia = a.id, ib = b.id;
  return a.tape->record(OpKind::kMatmul, {ia, ib}, std::move(out), [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if_grad(t, ia, [&](Tensor& ga) {
      kernels::gemm(false, true, m, k, n, 1, g.data(), t.value(ib).data(), 1, ga.data());
    });
    if_grad(t, ib, [&](Tensor& gb) {
      kernels::gemm(true, false, k, n, m, 1, t.value(ia).data(), g.data(), 1, gb.data());
    });
  });
}

Var linear(Var x, Var w) {
  require_same_tape(OpKind::kLinear, x, w);
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  const std::size_t m = X.rows(), k = X.cols(), n = W.rows();
  if (W.cols() != k) shape_fail(OpKind::kLinear, X.shape_str() + " x " + W.shape_str() + "^T");
  Tensor out = Tensor::uninitialized({m, n});
  kernels::gemm(false, true, m, n, k, 1, X.data(), W.data(), 0, out.data());
  const int ix = x.id, iw = w.id;
  return x.tape->record(OpKind::kLinear, {ix, iw}, std::move(out), [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if_grad(t, ix, [&](Tensor& gx) {
      kernels::gemm(false, false, m, k, n, 1, g.data(), t.value(iw).data(), 1, gx.data());
    });
    if_grad(t, iw, [&](Tensor& gw) {
      kernels::gemm(true, false, n, k, m, 1, g.data(), t.value(ix).data(), 1, gw.data());
    });
  });
}

Var add(Var a, Var b) { return elementwise_binary(OpKind::kAdd, a, b); }
Var sub(Var a, Var b) { return elementwise_binary(OpKind::kSub, a, b); }
Var mul(Var a, Var b) { return elementwise_binary(OpKind::kMul, a, b); }

Var add_row(Var x, Var b) {
  require_same_tape(OpKind::kAddRow, x, b);
  const Tensor& X = x.value();
  const Tensor& B = b.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  if (B.size() != cols) shape_fail(OpKind::kAddRow, X.shape_str() + " + row " + B.shape_str());
  Tensor out = X;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += B[c];
  }
  const int ix = x.id, ib = b.id;
  return x.tape->record(OpKind::kAddRow, {ix, ib}, std::move(out), [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if_grad(t, ix, [&](Tensor& gx) { add_into(gx, g); });
    if_grad(t, ib, [&](Tensor& gb) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
    });
  });
}

Var scale(Var a, Real s) {
  Tensor out = a.value();
  for (Real& v : out.values()) v *= s;
  const int ia = a.id;
  return a.tape->record(OpKind::kScale, {ia}, std::move(out), [=](Tape& t, int self) {
    kernels::axpy(s, t.grad(self).values(), t.grad(ia).values());
  });
}

Var sigmoid(Var a) {
  Tensor out = Tensor::uninitialized(a.value().shape());
  kernels::sigmoid(a.value().values(), out.values());
  const int ia = a.id;
  return a.tape->record(OpKind::kSigmoid, {ia}, std::move(out), [=](Tape& t, int self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * y[i] * (1 - y[i]);
  });
}

Var tanh(Var a) {
  Tensor out = Tensor::uninitialized(a.value().shape());
  kernels::tanh(a.value().values(), out.values());
  const int ia = a.id;
  return a.tape->record(OpKind::kTanh, {ia}, std::move(out), [=](Tape& t, int self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * (1 - y[i] * y[i]);
  });
}

namespace {

// Row-wise log-sum-exp shifted by the row max.
Tensor log_softmax_value(const Tensor& x) {
  Tensor out = Tensor::uninitialized(x.shape());
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const Real mx = *std::max_element(in.begin(), in.end());
    Real s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(in[c] - mx);
    const Real lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) o[c] = in[c] - lse;
  }
  return out;
}

}  // namespace

Var softmax(Var a) {
  if (a.value().cols() == 0) shape_fail(OpKind::kSoftmax, "empty last axis");
  Tensor out = log_softmax_value(a.value());
  for (Real& v : out.values()) v = std::exp(v);
  const int ia = a.id;
  return a.tape->record(OpKind::kSoftmax, {ia}, std::move(out), [=](Tape& t, int self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    const std::size_t cols = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      Real dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        ga[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
      }
    }
  });
}

Var log_softmax(Var a) {
  if (a.value().cols() == 0) shape_fail(OpKind::kLogSoftmax, "empty last axis");
  Tensor out = log_softmax_value(a.value());
  const int ia = a.id;
  return a.tape->record(OpKind::kLogSoftmax, {ia}, std::move(out), [=](Tape& t, int self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    const std::size_t cols = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      Real s = 0;
      for (std::size_t c = 0; c < cols; ++c) s += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        ga[r * cols + c] += g[r * cols + c] - std::exp(y[r * cols + c]) * s;
      }
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) shape_fail(OpKind::kConcatCols, "no operands");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    require_same_tape(OpKind::kConcatCols, parts[0], p);
    if (p.rows() != rows) {
      shape_fail(OpKind::kConcatCols, parts[0].value().shape_str() + " vs " + p.value().shape_str());
    }
    ids.push_back(p.id);
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out = Tensor::uninitialized({rows, total});
  std::size_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = parts[i].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * widths[i], widths[i], out.data() + r * total + off);
    }
    off += widths[i];
  }
  return parts[0].tape->record(OpKind::kConcatCols, ids, std::move(out),
                               [=](Tape& t, int self) {
                                 const Tensor& g = t.grad(self);
                                 std::size_t o = 0;
                                 for (std::size_t i = 0; i < ids.size(); ++i) {
                                   if (t.requires_grad(ids[i])) {
                                     Tensor& gi = t.grad(ids[i]);
                                     for (std::size_t r = 0; r < rows; ++r) {
                                       for (std::size_t c = 0; c < widths[i]; ++c) {
                                         gi[r * widths[i] + c] += g[r * total + o + c];
                                       }
                                     }
                                   }
                                   o += widths[i];
                                 }
                               });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  const std::size_t rows = A.rows(), cols = A.cols();
  if (begin > end || end > cols) {
    shape_fail(OpKind::kSliceCols, A.shape_str() + " cols [" + std::to_string(begin) + "," +
                                       std::to_string(end) + ")");
  }
  const std::size_t w = end - begin;
  Tensor out = Tensor::uninitialized({rows, w});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(A.data() + r * cols + begin, w, out.data() + r * w);
  }
  const int ia = a.id;
  return a.tape->record(OpKind::kSliceCols, {ia}, std::move(out), [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < w; ++c) ga[r * cols + begin + c] += g[r * w + c];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) shape_fail(OpKind::kConcatRows, "no operands");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<int> ids;
  std::vector<std::size_t> sizes;
  for (const Var& p : parts) {
    require_same_tape(OpKind::kConcatRows, parts[0], p);
    if (p.cols() != cols) {
      shape_fail(OpKind::kConcatRows, parts[0].value().shape_str() + " vs " + p.value().shape_str());
    }
    ids.push_back(p.id);
    sizes.push_back(p.value().size());
    rows += p.rows();
  }
  Tensor out = Tensor::uninitialized({rows, cols});
  std::size_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::copy_n(parts[i].value().data(), sizes[i], out.data() + off);
    off += sizes[i];
  }
  return parts[0].tape->record(OpKind::kConcatRows, ids, std::move(out),
                               [=](Tape& t, int self) {
                                 const Tensor& g = t.grad(self);
                                 std::size_t o = 0;
                                 for (std::size_t i = 0; i < ids.size(); ++i) {
                                   if (t.requires_grad(ids[i])) {
                                     kernels::axpy(1, g.values().subspan(o, sizes[i]),
                                                   t.grad(ids[i]).values());
                                   }
                                   o += sizes[i];
                                 }
                               });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  const std::size_t cols = A.cols();
  if (begin > end || end > A.rows()) {
    shape_fail(OpKind::kSliceRows, A.shape_str() + " rows [" + std::to_string(begin) + "," +
                                       std::to_string(end) + ")");
  }
  Tensor out = Tensor::uninitialized({end - begin, cols});
  std::copy_n(A.data() + begin * cols, out.size(), out.data());
  const int ia = a.id;
  return a.tape->record(OpKind::kSliceRows, {ia}, std::move(out), [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    kernels::axpy(1, g.values(), t.grad(ia).values().subspan(begin * cols, g.size()));
  });
}

Var gather_rows(std::span<const Var> sources, std::span<const RowRef> refs) {
  if (sources.empty()) shape_fail(OpKind::kGatherRows, "no sources");
  const std::size_t cols = sources[0].cols();
  std::vector<int> ids;
  for (const Var& s : sources) {
    require_same_tape(OpKind::kGatherRows, sources[0], s);
    if (s.cols() != cols) {
      shape_fail(OpKind::kGatherRows, sources[0].value().shape_str() + " vs " + s.value().shape_str());
    }
    ids.push_back(s.id);
  }
  Tensor out = Tensor::uninitialized({refs.size(), cols});
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const RowRef& r = refs[i];
    if (r.source >= sources.size() || r.row >= sources[r.source].rows()) {
      shape_fail(OpKind::kGatherRows, "row reference out of range");
    }
    std::copy_n(sources[r.source].value().data() + r.row * cols, cols, out.data() + i * cols);
  }
  std::vector<RowRef> saved(refs.begin(), refs.end());
  return sources[0].tape->record(
      OpKind::kGatherRows, ids, std::move(out), [ids, saved = std::move(saved), cols](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        for (std::size_t i = 0; i < saved.size(); ++i) {
          const int src = ids[saved[i].source];
          if (!t.requires_grad(src)) continue;
          Real* dst = t.grad(src).data() + saved[i].row * cols;
          const Real* from = g.data() + i * cols;
          for (std::size_t c = 0; c < cols; ++c) dst[c] += from[c];
        }
      });
}

Var lookup(Tape& tape, Parameter& table, std::span<const std::size_t> rows) {
  const std::size_t cols = table.value.cols();
  const std::size_t n = table.value.rows();
  Tensor out = Tensor::uninitialized({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) {
      shape_fail(OpKind::kLookup, table.name + " " + table.value.shape_str() + " row " +
                                      std::to_string(rows[i]));
    }
    std::copy_n(table.value.data() + rows[i] * cols, cols, out.data() + i * cols);
  }
  std::vector<std::size_t> saved(rows.begin(), rows.end());
  Parameter* p = &table;
  return tape.sink(OpKind::kLookup, std::move(out),
                   [p, saved = std::move(saved), cols](Tape& t, int self) {
                     const Tensor& g = t.grad(self);
                     for (std::size_t i = 0; i < saved.size(); ++i) {
                       Real* dst = p->grad.data() + saved[i] * cols;
                       const Real* from = g.data() + i * cols;
                       for (std::size_t c = 0; c < cols; ++c) dst[c] += from[c];
                       if (p->row_sparse) p->touch_row(saved[i]);
                     }
                   });
}

Var sum(Var a) {
  Real s = 0;
  for (Real v : a.value().values()) s += v;
  const int ia = a.id;
  return a.tape->record(OpKind::kSum, {ia}, Tensor::scalar(s), [=](Tape& t, int self) {
    const Real g = t.grad(self)[0];
    for (Real& v : t.grad(ia).values()) v += g;
  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Tensor& X = logits.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  if (targets.size() != rows) {
    shape_fail(OpKind::kCrossEntropy, X.shape_str() + " with " + std::to_string(targets.size()) +
                                          " targets");
  }
  Tensor logp = log_softmax_value(X);
  Real loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) {
      shape_fail(OpKind::kCrossEntropy, "target " + std::to_string(targets[r]) + " >= " +
                                            std::to_string(cols) + " classes");
    }
    loss -= logp(r, targets[r]);
  }
  std::vector<std::size_t> saved(targets.begin(), targets.end());
  const int ix = logits.id;
  return logits.tape->record(
      OpKind::kCrossEntropy, {ix}, Tensor::scalar(loss),
      [ix, logp = std::move(logp), saved = std::move(saved)](Tape& t, int self) {
        const Real g = t.grad(self)[0];
        Tensor& gx = t.grad(ix);
        const std::size_t cols = logp.cols();
        for (std::size_t r = 0; r < saved.size(); ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            gx[r * cols + c] += g * (std::exp(logp(r, c)) - (c == saved[r] ? 1 : 0));
          }
        }
      });
}

Var apply_mask(Var a, const Tensor& mask) {
  const Tensor& A = a.value();
  if (A.size() != mask.size()) shape_fail(OpKind::kMask, A.shape_str() + " vs " + mask.shape_str());
  Tensor out = Tensor::uninitialized(A.shape());
  kernels::hadamard(A.values(), mask.values(), out.values());
  const int ia = a.id;
  return a.tape->record(OpKind::kMask, {ia}, std::move(out), [ia, mask](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

Var unfold(Var x, std::size_t width) {
  const Tensor& X = x.value();
  const std::size_t T = X.rows(), D = X.cols();
  if (width == 0 || width > T) {
    shape_fail(OpKind::kUnfold, X.shape_str() + " width " + std::to_string(width));
  }
  const std::size_t n = T - width + 1, w = width * D;
  Tensor out = Tensor::uninitialized({n, w});
  // Window t is the contiguous block of rows t..t+width-1.
  for (std::size_t t = 0; t < n; ++t) std::copy_n(X.data() + t * D, w, out.data() + t * w);
  const int ix = x.id;
  return x.tape->record(OpKind::kUnfold, {ix}, std::move(out), [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < w; ++c) gx[r * D + c] += g[r * w + c];
    }
  });
}

Var segment_max(Var x, std::span<const std::size_t> offsets) {
  const Tensor& X = x.value();
  const std::size_t cols = X.cols();
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != X.rows()) {
    shape_fail(OpKind::kSegmentMax, X.shape_str() + " with bad segment offsets");
  }
  const std::size_t S = offsets.size() - 1;
  Tensor out = Tensor::uninitialized({S, cols});
  std::vector<std::size_t> arg(S * cols);
  for (std::size_t s = 0; s < S; ++s) {
    if (offsets[s] >= offsets[s + 1]) shape_fail(OpKind::kSegmentMax, "empty segment");
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t best = offsets[s];
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
        if (X(r, c) > X(best, c)) best = r;
      }
      arg[s * cols + c] = best;
      out(s, c) = X(best, c);
    }
  }
  const int ix = x.id;
  return x.tape->record(OpKind::kSegmentMax, {ix}, std::move(out),
                        [ix, arg = std::move(arg), cols](Tape& t, int self) {
                          const Tensor& g = t.grad(self);
                          Tensor& gx = t.grad(ix);
                          for (std::size_t i = 0; i < arg.size(); ++i) {
                            gx[arg[i] * cols + i % cols] += g[i];
                          }
                        });
}

Var affine(std::span<const Var> xs, std::span<const Var> ws, Var bias) {
  constexpr OpKind k = OpKind::kAffine;
  if (xs.empty() || xs.size() != ws.size()) shape_fail(k, "needs one weight per input");
  const std::size_t m = xs[0].rows(), n = ws[0].rows();
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require_same_tape(k, xs[0], xs[i]);
    require_same_tape(k, xs[0], ws[i]);
    const Tensor& X = xs[i].value();
    const Tensor& W = ws[i].value();
    if (X.rows() != m || W.rows() != n || W.cols() != X.cols()) {
      shape_fail(k, "term " + std::to_string(i) + ": " + X.shape_str() + " x " + W.shape_str() + "^T");
    }
    ids.push_back(xs[i].id);
    ids.push_back(ws[i].id);
    widths.push_back(X.cols());
  }
  Tensor out = Tensor::uninitialized({m, n});
  Real beta = 0;
  if (bias.valid()) {
    require_same_tape(k, xs[0], bias);
    const Tensor& B = bias.value();
    if (B.size() != n) shape_fail(k, "bias " + B.shape_str() + " for width " + std::to_string(n));
    for (std::size_t r = 0; r < m; ++r) std::copy_n(B.data(), n, out.data() + r * n);
    ids.push_back(bias.id);
    beta = 1;
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    kernels::gemm(false, true, m, n, widths[i], 1, xs[i].value().data(), ws[i].value().data(), beta, out.data());
    beta = 1;
  }
  const bool has_bias = bias.valid();
  return xs[0].tape->record(k, ids, std::move(out), [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const int ix = ids[2 * i], iw = ids[2 * i + 1];
      const std::size_t kk = widths[i];
      if_grad(t, ix, [&](Tensor& gx) {
        kernels::gemm(false, false, m, kk, n, 1, g.data(), t.value(iw).data(), 1, gx.data());
      });
      if_grad(t, iw, [&](Tensor& gw) {
        kernels::gemm(true, false, n, kk, m, 1, g.data(), t.value(ix).data(), 1, gw.data());
      });
    }
    if (has_bias) {
      if_grad(t, ids.back(), [&](Tensor& gb) {
        for (std::size_t r = 0; r < m; ++r) kernels::axpy(1, g.row(r), gb.values());
      });
    }
  });
}

Var tree_cell(Var pre, Var c_l, Var c_r) {
  constexpr OpKind k = OpKind::kTreeCell;
  const Tensor& P = pre.value();
  if (P.cols() == 0 || P.cols() % 5 != 0) shape_fail(k, "pre-activations " + P.shape_str());
  const std::size_t N = P.rows(), H = P.cols() / 5;
  if (c_l.valid() != c_r.valid()) shape_fail(k, "child cells must be given together");
  const bool children = c_l.valid();
  std::vector<int> ids{pre.id};
  if (children) {
    for (Var c : {c_l, c_r}) {
      require_same_tape(k, pre, c);
      if (c.rows() != N || c.cols() != H) shape_fail(k, "child cell " + c.value().shape_str());
      ids.push_back(c.id);
    }
  }
  Tensor out = Tensor::uninitialized({N, 7 * H});
  for (std::size_t r = 0; r < N; ++r) {
    auto p = P.row(r);
    auto o = out.row(r);
    kernels::sigmoid(p.first(4 * H), o.first(4 * H));
    kernels::tanh(p.subspan(4 * H, H), o.subspan(4 * H, H));
    const Real* gi = o.data();
    const Real* ct = o.data() + 4 * H;
    Real* c = o.data() + 5 * H;
    for (std::size_t j = 0; j < H; ++j) c[j] = gi[j] * ct[j];
    if (children) {
      const Real* fl = o.data() + H;
      const Real* fr = o.data() + 2 * H;
      const Real* cl = c_l.value().data() + r * H;
      const Real* cr = c_r.value().data() + r * H;
      for (std::size_t j = 0; j < H; ++j) c[j] += fl[j] * cl[j] + fr[j] * cr[j];
    }
    Real* h = o.data() + 6 * H;
    kernels::tanh(std::span<const Real>(c, H), std::span<Real>(h, H));
    const Real* og = o.data() + 3 * H;
    for (std::size_t j = 0; j < H; ++j) h[j] *= og[j];
  }
  return pre.tape->record(k, ids, std::move(out), [=](Tape& t, int self) {
    const Tensor& Y = t.value(self);
    const Tensor& G = t.grad(self);
    Tensor* gp = t.requires_grad(ids[0]) ? &t.grad(ids[0]) : nullptr;
    Tensor* gl = children && t.requires_grad(ids[1]) ? &t.grad(ids[1]) : nullptr;
    Tensor* gr = children && t.requires_grad(ids[2]) ? &t.grad(ids[2]) : nullptr;
    std::vector<Real> tc(H);
    for (std::size_t r = 0; r < N; ++r) {
      const Real* y = Y.data() + r * 7 * H;
      const Real* g = G.data() + r * 7 * H;
      const Real *i = y, *fl = y + H, *fr = y + 2 * H, *o = y + 3 * H, *ct = y + 4 * H, *c = y + 5 * H;
      kernels::tanh(std::span<const Real>(c, H), tc);
      const Real* cl = children ? t.value(ids[1]).data() + r * H : nullptr;
      const Real* cr = children ? t.value(ids[2]).data() + r * H : nullptr;
      for (std::size_t j = 0; j < H; ++j) {
        const Real gh = g[6 * H + j];
        const Real gc = g[5 * H + j] + gh * o[j] * (1 - tc[j] * tc[j]);
        if (gp) {
          Real* d = gp->data() + r * 5 * H;
          const Real gi = g[j] + gc * ct[j];
          const Real go = g[3 * H + j] + gh * tc[j];
          const Real gct = g[4 * H + j] + gc * i[j];
          Real gfl = g[H + j], gfr = g[2 * H + j];
          if (children) {
            gfl += gc * cl[j];
            gfr += gc * cr[j];
          }
          d[j] += gi * i[j] * (1 - i[j]);
          d[H + j] += gfl * fl[j] * (1 - fl[j]);
          d[2 * H + j] += gfr * fr[j] * (1 - fr[j]);
          d[3 * H + j] += go * o[j] * (1 - o[j]);
          d[4 * H + j] += gct * (1 - ct[j] * ct[j]);
        }
        if (gl) (*gl)[r * H + j] += gc * fl[j];
        if (gr) (*gr)[r * H + j] += gc * fr[j];
      }
    }
  });
}

Var apply(OpKind kind, std::span<const Var> operands) {
  auto need = [&](std::size_t n) {
    if (operands.size() != n) {
      shape_fail(kind, "expects " + std::to_string(n) + " operands, got " +
                           std::to_string(operands.size()));
    }
  };
  switch (kind) {
    case OpKind::kMatmul: need(2); return matmul(operands[0], operands[1]);
    case OpKind::kLinear: need(2); return linear(operands[0], operands[1]);
    case OpKind::kAdd: need(2); return add(operands[0], operands[1]);
    case OpKind::kSub: need(2); return sub(operands[0], operands[1]);
    case OpKind::kAddRow: need(2); return add_row(operands[0], operands[1]);
    case OpKind::kMul: need(2); return mul(operands[0], operands[1]);
    case OpKind::kSigmoid: need(1); return sigmoid(operands[0]);
    case OpKind::kTanh: need(1); return tanh(operands[0]);
    case OpKind::kSoftmax: need(1); return softmax(operands[0]);
    case OpKind::kLogSoftmax: need(1); return log_softmax(operands[0]);
    case OpKind::kSum: need(1); return sum(operands[0]);
    case OpKind::kConcatCols: return concat_cols(operands);
    case OpKind::kConcatRows: return concat_rows(operands);
    default:
      throw ContractError(std::string("apply: ") + to_string(kind) + " needs extra arguments");
  }
}

}  // namespace hce::ad
