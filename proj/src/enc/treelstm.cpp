#include "hce/enc/treelstm.hpp"

#include <algorithm>

namespace hce::enc {

using ad::Tensor;
using ad::Var;

namespace {

std::size_t part_col(Part p, std::size_t H, std::size_t D) {
  switch (p) {
    case Part::kUl: return 0;
    case Part::kUr: return H;
    case Part::kV: return 0;
    case Part::kVl: return 0;
    case Part::kVr: return D;
  }
  return 0;
}

ad::Parameter& part_param(const TreeLstmParams& tp, Part p) {
  switch (p) {
    case Part::kUl:
    case Part::kUr: return *tp.U;
    case Part::kV: return *tp.V;
    default: return *tp.Vlr;
  }
}

ad::Tape* tape_of(std::initializer_list<Var> vars) {
  for (const Var& v : vars) {
    if (v.valid()) return v.tape;
  }
  return nullptr;
}

}  // namespace

TreeLstmParams TreeLstmParams::create(ad::ParameterStore& store, const std::string& prefix,
                                      std::size_t input_dim, std::size_t hidden, bool bias, Rng& rng) {
  TreeLstmParams p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  const std::size_t G = kGateCount * hidden;
  p.U = &store.add(prefix + ".U", ad::init_fan_in(G, 2 * hidden, rng));
  p.V = &store.add(prefix + ".V", ad::init_fan_in(G, input_dim, rng));
  p.Vlr = &store.add(prefix + ".Vlr", ad::init_fan_in(G, 2 * input_dim, rng));
  if (bias) p.b = &store.add(prefix + ".b", Tensor({G}));
  return p;
}

TreeLstmParams TreeLstmParams::bind(ad::ParameterStore& store, const std::string& prefix) {
  TreeLstmParams p;
  p.U = &store.at(prefix + ".U");
  p.V = &store.at(prefix + ".V");
  p.Vlr = &store.at(prefix + ".Vlr");
  p.b = store.find(prefix + ".b");
  p.hidden = p.U->value.cols() / 2;
  p.input_dim = p.V->value.cols();
  return p;
}

Tensor TreeLstmParams::block(Gate g, Part part) const {
  const ad::Parameter& src = part_param(*this, part);
  const std::size_t H = hidden;
  const std::size_t w = (part == Part::kUl || part == Part::kUr) ? H : input_dim;
  const std::size_t c0 = part_col(part, H, input_dim);
  const std::size_t r0 = static_cast<std::size_t>(g) * H;
  Tensor out({H, w});
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < w; ++c) out(r, c) = src.value(r0 + r, c0 + c);
  }
  return out;
}

void TreeLstmParams::set_block(Gate g, Part part, const Tensor& m) {
  ad::Parameter& dst = part_param(*this, part);
  const std::size_t H = hidden;
  const std::size_t w = (part == Part::kUl || part == Part::kUr) ? H : input_dim;
  if (m.rows() != H || m.cols() != w) {
    throw ShapeError("set_block: expected [" + std::to_string(H) + "," + std::to_string(w) + "], got " +
                     m.shape_str());
  }
  const std::size_t c0 = part_col(part, H, input_dim);
  const std::size_t r0 = static_cast<std::size_t>(g) * H;
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < w; ++c) dst.value(r0 + r, c0 + c) = m(r, c);
  }
}

NodeState treelstm_node(const TreeLstmParams& p, Var x_n, Var x_l, Var x_r, Var h_l, Var h_r, Var c_l,
                        Var c_r) {
  ad::Tape* tape = tape_of({x_n, x_l, x_r, h_l, h_r});
  if (!tape) throw ContractError("treelstm_node: no inputs");
  if (h_l.valid() != h_r.valid() || x_l.valid() != x_r.valid()) {
    throw ContractError("treelstm_node: left and right inputs must be given together");
  }
  const std::size_t H = p.hidden;
  // All present terms accumulate into one pre-activation buffer.
  std::vector<Var> xs, ws;
  if (h_l.valid()) {
    const Var hs[] = {h_l, h_r};
    xs.push_back(ad::concat_cols(hs));
    ws.push_back(tape->param(*p.U));
  }
  if (x_n.valid()) {
    xs.push_back(x_n);
    ws.push_back(tape->param(*p.V));
  }
  if (x_l.valid()) {
    const Var lr[] = {x_l, x_r};
    xs.push_back(ad::concat_cols(lr));
    ws.push_back(tape->param(*p.Vlr));
  }
  if (xs.empty()) throw ContractError("treelstm_node: every term dropped");
  const Var pre = ad::affine(xs, ws, p.b ? tape->param(*p.b) : Var{});
  const Var cell = ad::tree_cell(pre, c_l, c_r);

  NodeState s;
  s.cell = cell;
  s.c = ad::slice_cols(cell, 5 * H, 6 * H);
  s.h = ad::slice_cols(cell, 6 * H, 7 * H);
  s.hidden = H;
  return s;
}

TreeResult treelstm_forward(ad::Tape& tape, const TreeLstmParams& p, ad::Parameter& table,
                            const TokenVocab& vocab, const ids::GlyphTree& tree, bool op_inputs) {
  if (tree.empty()) throw ContractError("treelstm_forward: empty tree");
  TreeResult out;
  out.nodes.resize(tree.node_count());
  std::vector<Var> x(tree.node_count());
  const Var zx = tape.constant(Tensor::zeros(1, p.input_dim));
  const Var zh = tape.constant(Tensor::zeros(1, p.hidden));
  for (std::size_t i = 0; i < tree.node_count(); ++i) {
    const auto& n = tree.node(i);
    const std::size_t tok = vocab.index(n.label);
    x[i] = ad::lookup(tape, table, std::span(&tok, 1));
    if (n.is_leaf()) {
      out.nodes[i] = treelstm_node(p, x[i], zx, zx, zh, zh, zh, zh);
    } else {
      const auto l = static_cast<std::size_t>(n.left);
      const auto r = static_cast<std::size_t>(n.right);
      out.nodes[i] = op_inputs
                         ? treelstm_node(p, x[i], x[l], x[r], out.nodes[l].h, out.nodes[r].h,
                                         out.nodes[l].c, out.nodes[r].c)
                         : treelstm_node(p, Var{}, Var{}, Var{}, out.nodes[l].h, out.nodes[r].h,
                                         out.nodes[l].c, out.nodes[r].c);
    }
  }
  out.root_h = out.nodes.back().h;
  return out;
}

std::size_t LevelSchedule::level_of(std::size_t slot) const {
  auto it = std::upper_bound(level_begin.begin(), level_begin.end(), slot);
  return static_cast<std::size_t>(it - level_begin.begin()) - 1;
}

LevelSchedule build_level_schedule(std::span<const ids::GlyphTree* const> trees) {
  if (trees.empty()) throw ContractError("build_level_schedule: empty batch");
  std::vector<std::vector<std::size_t>> level(trees.size());
  std::size_t max_level = 0;
  std::vector<std::size_t> count;
  for (std::size_t t = 0; t < trees.size(); ++t) {
    const auto& tree = *trees[t];
    if (tree.empty()) throw ContractError("build_level_schedule: empty tree in batch");
    level[t].resize(tree.node_count());
    for (std::size_t i = 0; i < tree.node_count(); ++i) {
      const auto& n = tree.node(i);
      level[t][i] = n.is_leaf() ? 0
                                : 1 + std::max(level[t][static_cast<std::size_t>(n.left)],
                                               level[t][static_cast<std::size_t>(n.right)]);
      max_level = std::max(max_level, level[t][i]);
      if (count.size() <= level[t][i]) count.resize(level[t][i] + 1, 0);
      ++count[level[t][i]];
    }
  }
  LevelSchedule s;
  s.level_begin.assign(max_level + 2, 0);
  for (std::size_t l = 0; l <= max_level; ++l) s.level_begin[l + 1] = s.level_begin[l] + count[l];
  s.slots.resize(s.level_begin.back());
  s.node_slot.resize(trees.size());
  std::vector<std::size_t> next(s.level_begin.begin(), s.level_begin.end() - 1);
  // Within a level, slots follow (tree, node) order.
  for (std::size_t l = 0; l <= max_level; ++l) {
    for (std::size_t t = 0; t < trees.size(); ++t) {
      s.node_slot[t].resize(trees[t]->node_count());
      for (std::size_t i = 0; i < trees[t]->node_count(); ++i) {
        if (level[t][i] != l) continue;
        const std::size_t slot = next[l]++;
        s.node_slot[t][i] = slot;
        LevelSchedule::Slot& sl = s.slots[slot];
        sl.tree = t;
        sl.node = i;
        const auto& n = trees[t]->node(i);
        if (!n.is_leaf()) {
          sl.left = s.node_slot[t][static_cast<std::size_t>(n.left)];
          sl.right = s.node_slot[t][static_cast<std::size_t>(n.right)];
        }
      }
    }
  }
  for (std::size_t t = 0; t < trees.size(); ++t) s.root_slot.push_back(s.node_slot[t].back());
  return s;
}

std::vector<std::size_t> slot_tokens(const LevelSchedule& s, std::span<const ids::GlyphTree* const> trees,
                                     const TokenVocab& vocab) {
  std::vector<std::size_t> out(s.slots.size());
  for (std::size_t k = 0; k < s.slots.size(); ++k) {
    out[k] = vocab.index(trees[s.slots[k].tree]->node(s.slots[k].node).label);
  }
  return out;
}

BatchResult treelstm_batch_forward(const TreeLstmParams& p, Var x, LevelSchedule schedule, bool op_inputs) {
  if (x.rows() != schedule.slots.size() || x.cols() != p.input_dim) {
    throw ShapeError("treelstm_batch_forward: inputs " + x.value().shape_str() + " for " +
                     std::to_string(schedule.slots.size()) + " slots of dim " + std::to_string(p.input_dim));
  }
  BatchResult out;
  std::vector<Var> hs, cs;
  auto ref = [&](std::size_t slot) {
    const std::size_t l = schedule.level_of(slot);
    return ad::RowRef{l, slot - schedule.level_begin[l]};
  };
  for (std::size_t l = 0; l < schedule.levels(); ++l) {
    const std::size_t b = schedule.level_begin[l], e = schedule.level_begin[l + 1];
    const Var xn = ad::slice_rows(x, b, e);
    NodeState st;
    if (l == 0) {
      st = treelstm_node(p, xn, {}, {}, {}, {}, {}, {});
    } else {
      std::vector<ad::RowRef> lrefs, rrefs, lx, rx;
      for (std::size_t k = b; k < e; ++k) {
        const auto& sl = schedule.slots[k];
        lrefs.push_back(ref(sl.left));
        rrefs.push_back(ref(sl.right));
        lx.push_back({0, sl.left});
        rx.push_back({0, sl.right});
      }
      const Var hl = ad::gather_rows(hs, lrefs), hr = ad::gather_rows(hs, rrefs);
      const Var cl = ad::gather_rows(cs, lrefs), cr = ad::gather_rows(cs, rrefs);
      if (op_inputs) {
        const Var xsrc[] = {x};
        st = treelstm_node(p, xn, ad::gather_rows(xsrc, lx), ad::gather_rows(xsrc, rx), hl, hr, cl, cr);
      } else {
        st = treelstm_node(p, {}, {}, {}, hl, hr, cl, cr);
      }
    }
    hs.push_back(st.h);
    cs.push_back(st.c);
    out.levels.push_back(st);
  }
  std::vector<ad::RowRef> roots;
  for (std::size_t slot : schedule.root_slot) roots.push_back(ref(slot));
  out.roots = ad::gather_rows(hs, roots);
  out.schedule = std::move(schedule);
  return out;
}

}  // namespace hce::enc
