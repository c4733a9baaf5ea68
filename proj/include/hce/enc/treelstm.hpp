#pragma once

// Binary tree-structured LSTM over glyph trees. For a node n with children
// l and r, every gate block g in {i, f_l, f_r, o, c~} has the pre-activation
//   U_l h_l + U_r h_r + V x_n + V_l x_l + V_r x_r + b
// and c_n = i*c~ + f_l*c_l + f_r*c_r, h_n = o*tanh(c_n). Leaves use zero
// child states and zero x_l / x_r.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hce/ad/tape.hpp"
#include "hce/common/rng.hpp"
#include "hce/enc/vocab.hpp"
#include "hce/ids/ids.hpp"

namespace hce::enc {

enum class Gate { kInput = 0, kForgetLeft = 1, kForgetRight = 2, kOutput = 3, kCandidate = 4 };
enum class Part { kUl, kUr, kV, kVl, kVr };

inline constexpr int kGateCount = 5;

/// Gate blocks are stacked by rows in Gate order. U = [U_l | U_r] is
/// [5H, 2H], V is [5H, D], Vlr = [V_l | V_r] is [5H, 2D], b is [5H].
struct TreeLstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  ad::Parameter* U = nullptr;
  ad::Parameter* V = nullptr;
  ad::Parameter* Vlr = nullptr;
  ad::Parameter* b = nullptr;  // null when biases are disabled

  static TreeLstmParams create(ad::ParameterStore& store, const std::string& prefix,
                               std::size_t input_dim, std::size_t hidden, bool bias, Rng& rng);
  /// Binds to parameters already present in `store`.
  static TreeLstmParams bind(ad::ParameterStore& store, const std::string& prefix);

  /// One of the 25 weight matrices, H x H or H x D.
  ad::Tensor block(Gate g, Part p) const;
  void set_block(Gate g, Part p, const ad::Tensor& m);
};

/// Gate activations and outputs of a batch of nodes, one row per node.
/// `cell` is the fused [N, 7H] record: the five gates in Gate order, then c
/// and h. Only c and h are split out as separate records.
struct NodeState {
  ad::Var cell;
  ad::Var c, h;
  std::size_t hidden = 0;

  /// Row r of gate g, viewed inside `cell`.
  std::span<const Real> gate_row(Gate g, std::size_t r) const {
    return cell.value().row(r).subspan(static_cast<std::size_t>(g) * hidden, hidden);
  }
};

/// Evaluates the cell on a batch of rows. Invalid (default) Vars drop their
/// term entirely, which equals feeding zeros. x_n is required unless both
/// operator inputs are dropped too.
NodeState treelstm_node(const TreeLstmParams& p, ad::Var x_n, ad::Var x_l, ad::Var x_r, ad::Var h_l,
                        ad::Var h_r, ad::Var c_l, ad::Var c_r);

/// Sequential reference: one cell application per node in post-order, with
/// explicit zero vectors at the leaves. `op_inputs=false` removes the V terms
/// at inner nodes.
struct TreeResult {
  ad::Var root_h;
  std::vector<NodeState> nodes;  // indexed like GlyphTree nodes
};
TreeResult treelstm_forward(ad::Tape& tape, const TreeLstmParams& p, ad::Parameter& table,
                            const TokenVocab& vocab, const ids::GlyphTree& tree, bool op_inputs = true);

/// Nodes of a batch grouped by level (leaves at 0, parent = 1 + max child).
/// Slots are numbered level by level; each level is a contiguous slot range.
struct LevelSchedule {
  static constexpr std::size_t kNone = SIZE_MAX;
  struct Slot {
    std::size_t tree = 0;
    std::size_t node = 0;
    std::size_t left = kNone;   // child slots
    std::size_t right = kNone;
  };
  std::vector<Slot> slots;
  std::vector<std::size_t> level_begin;  // size levels()+1
  std::vector<std::vector<std::size_t>> node_slot;  // [tree][node] -> slot
  std::vector<std::size_t> root_slot;

  std::size_t levels() const { return level_begin.size() - 1; }
  std::size_t level_size(std::size_t l) const { return level_begin[l + 1] - level_begin[l]; }
  std::size_t level_of(std::size_t slot) const;
};

/// Throws ContractError on an empty batch.
LevelSchedule build_level_schedule(std::span<const ids::GlyphTree* const> trees);

struct BatchResult {
  ad::Var roots;  // [B, H], batch order
  LevelSchedule schedule;
  std::vector<NodeState> levels;  // one batched state per level
};

/// Level-by-level evaluation. `x` holds the input embedding of every slot in
/// slot order ([N, D]).
BatchResult treelstm_batch_forward(const TreeLstmParams& p, ad::Var x, LevelSchedule schedule,
                                   bool op_inputs = true);

/// Token id of every slot, for building `x`.
std::vector<std::size_t> slot_tokens(const LevelSchedule& s, std::span<const ids::GlyphTree* const> trees,
                                     const TokenVocab& vocab);

}  // namespace hce::enc
