#pragma once

// Define-by-run reverse-mode differentiation. Every primitive appends one
// record to the tape; backward() walks the records in exact reverse order.

#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "hce/ad/parameter.hpp"
#include "hce/ad/tensor.hpp"
#include "hce/common/error.hpp"

namespace hce::ad {

enum class OpKind {
  kConstant,
  kParameter,
  kLookup,
  kMatmul,
  kLinear,
  kAdd,
  kSub,
  kAddRow,
  kMul,
  kScale,
  kSigmoid,
  kTanh,
  kSoftmax,
  kLogSoftmax,
  kConcatCols,
  kSliceCols,
  kConcatRows,
  kSliceRows,
  kGatherRows,
  kSum,
  kCrossEntropy,
  kMask,
  kUnfold,
  kSegmentMax,
  kAffine,
  kTreeCell,
};

const char* to_string(OpKind k);

class Tape;

/// Handle to a tape record.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// The same parameter always maps to the same record within one tape. The
  /// value is copied on first use, so later edits to the parameter are not
  /// seen by this tape.
  Var param(Parameter& p);

  /// Appends a record. `backward` may be empty for ops that need no gradient.
  Var record(OpKind kind, std::vector<int> operands, Tensor value, BackwardFn backward);
  /// Operand-free record that always requires gradient; `backward` writes
  /// straight into external storage (embedding tables).
  Var sink(OpKind kind, Tensor value, BackwardFn backward);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  bool any_requires_grad(std::span<const int> ids) const;
  /// Gradient accumulator, zero-initialised on first access.
  Tensor& grad(int id);
  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad_ready; }

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(int id) const { return nodes_[static_cast<std::size_t>(id)].kind; }
  const std::vector<int>& operands(int id) const { return nodes_[static_cast<std::size_t>(id)].operands; }

  /// Reverse sweep from a scalar. Parameter gradients accumulate additively
  /// into Parameter::grad. Throws ContractError if `loss` is not scalar.
  void backward(Var loss);

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::vector<int> operands;
    Tensor value;
    Tensor grad;
    bool grad_ready = false;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_ids_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

// ---------------------------------------------------------------------------
// Primitives. Shape mismatches throw ShapeError naming the op and shapes.

/// a[m,k] · b[k,n]
Var matmul(Var a, Var b);
/// x[m,k] · w[n,k]ᵀ
Var linear(Var x, Var w);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// x[m,n] + b broadcast over rows; b has n elements.
Var add_row(Var x, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Real s);
Var sigmoid(Var a);
Var tanh(Var a);
/// Row-wise softmax over the last axis.
Var softmax(Var a);
Var log_softmax(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);

struct RowRef {
  std::size_t source = 0;
  std::size_t row = 0;
};
/// Stacks rows picked from several sources of equal width.
Var gather_rows(std::span<const Var> sources, std::span<const RowRef> refs);

/// Rows of an embedding table; gradient is scattered into table.grad and the
/// touched rows are recorded.
Var lookup(Tape& tape, Parameter& table, std::span<const std::size_t> rows);

Var sum(Var a);
/// Σ_rows −log softmax(logits)[row, target[row]].
Var cross_entropy(Var logits, std::span<const std::size_t> targets);
/// Elementwise product with a constant tensor (dropout masks).
Var apply_mask(Var a, const Tensor& mask);
/// Sliding windows of width w over rows: x[T,D] → [T−w+1, w·D].
Var unfold(Var x, std::size_t width);
/// Column-wise max within consecutive row segments. offsets has S+1 entries
/// delimiting S non-empty segments.
Var segment_max(Var x, std::span<const std::size_t> offsets);

/// Σ_i xs[i] · ws[i]ᵀ (+ bias broadcast over rows), accumulated into one
/// output. bias may be an invalid Var.
Var affine(std::span<const Var> xs, std::span<const Var> ws, Var bias);
/// Binary tree-LSTM cell. pre[N,5H] holds the pre-activations of the gates
/// i, f_l, f_r, o followed by the candidate. c_l and c_r are [N,H] child
/// cells, or both invalid for leaves. The output is [N,7H]:
/// i, f_l, f_r, o, c̃, c = i⊙c̃ + f_l⊙c_l + f_r⊙c_r, h = o⊙tanh(c).
Var tree_cell(Var pre, Var c_l, Var c_r);
/// Generic entry for unary/binary elementwise-style primitives.
Var apply(OpKind kind, std::span<const Var> operands);

}  // namespace hce::ad
