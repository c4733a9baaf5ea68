#include "hce/diag/diag.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "hce/common/error.hpp"
#include "hce/common/utf8.hpp"

namespace hce::diag {

using ad::Tensor;
using ad::Var;

namespace {

Real norm(std::span<const Real> v) {
  Real s = 0;
  for (Real x : v) s += x * x;
  return std::sqrt(s);
}

/// Level state and row within it for slot `slot`.
std::pair<const enc::NodeState*, std::size_t> slot_state(const enc::BatchResult& r, std::size_t slot) {
  const std::size_t level = r.schedule.level_of(slot);
  return {&r.levels[level], slot - r.schedule.level_begin[level]};
}

enc::TreeLstmEncoder& require_tree(pron::PronModel& model) {
  auto* e = dynamic_cast<enc::TreeLstmEncoder*>(&model.encoder());
  if (!e) throw ContractError("operation requires a treeLSTM model, got " + model.config().encoder.model_name());
  return *e;
}

}  // namespace

std::optional<double> GateBiasReport::percentage() const {
  if (total == 0) return std::nullopt;
  return 100.0 * static_cast<double>(prefer_right) / static_cast<double>(total);
}

nlohmann::json GateBiasReport::to_json() const {
  const auto p = percentage();
  return {{"total", total}, {"prefer_right", prefer_right},
          {"percentage", p ? nlohmann::json(*p) : nlohmann::json("n/a")}};
}

GateBiasReport gate_bias(enc::TreeLstmEncoder& encoder, std::span<const ids::GlyphTree> trees) {
  std::vector<const ids::GlyphTree*> selected;
  for (const auto& t : trees) {
    if (!t.empty() && t.root_node().label == ids::kLeftToRight) selected.push_back(&t);
  }
  GateBiasReport report;
  constexpr std::size_t kBatch = 256;
  for (std::size_t b = 0; b < selected.size(); b += kBatch) {
    const std::span<const ids::GlyphTree* const> part(selected.data() + b, std::min(kBatch, selected.size() - b));
    ad::Tape tape;
    const enc::BatchResult r = encoder.encode_detailed(tape, part, {});
    for (std::size_t i = 0; i < part.size(); ++i) {
      const std::size_t slot = r.schedule.root_slot[i];
      const auto [state, row] = slot_state(r, slot);
      const Real fl = norm(state->gate_row(enc::Gate::kForgetLeft, row));
      const Real fr = norm(state->gate_row(enc::Gate::kForgetRight, row));
      ++report.total;
      if (fr > fl) ++report.prefer_right;
    }
  }
  return report;
}

GateBiasReport gate_bias(pron::PronModel& model, std::span<const ids::GlyphTree> trees) {
  return gate_bias(require_tree(model), trees);
}

ProbeTrace probe(pron::PronModel& model, const ids::GlyphTree& tree) {
  ProbeTrace trace;
  ad::Tape tape;
  Var states;
  std::vector<std::pair<std::size_t, char32_t>> labels;
  const ids::GlyphTree* one[] = {&tree};
  const auto& cfg = model.config().encoder;
  if (cfg.kind == enc::EncoderKind::kTreeLstm) {
    auto& e = require_tree(model);
    const enc::BatchResult r = e.encode_detailed(tape, one, {});
    Tensor h({tree.node_count(), e.output_dim()});
    for (std::size_t n = 0; n < tree.node_count(); ++n) {
      const auto [state, r_idx] = slot_state(r, r.schedule.node_slot[0][n]);
      const auto row = state->h.value().row(r_idx);
      std::copy(row.begin(), row.end(), h.row(n).begin());
      labels.emplace_back(n, tree.node(n).label);
    }
    states = tape.constant(std::move(h));
  } else if (cfg.kind == enc::EncoderKind::kCnn) {
    throw ContractError("probe supports treeLSTM and LSTM encoders only");
  } else {
    auto& e = dynamic_cast<enc::LstmEncoder&>(model.encoder());
    const std::u32string seq = enc::encoder_tokens(cfg, tree);
    if (seq.empty()) throw DataError("probe: empty token sequence");
    states = e.step_states(tape, seq);
    for (std::size_t p = 0; p < seq.size(); ++p) labels.emplace_back(p, seq[p]);
  }
  const pron::HeadOutput out = model.head().forward(states);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto row = states.value().row(r);
    trace.rows.push_back(
        {labels[r].first, labels[r].second, pron::decode(out, model.inventories(), r), {row.begin(), row.end()}});
  }
  return trace;
}

void write_probe_csv(std::ostream& out, const ProbeTrace& trace) {
  out << "node,label,onset,nucleus,coda";
  const std::size_t H = trace.rows.empty() ? 0 : trace.rows[0].h.size();
  for (std::size_t k = 0; k < H; ++k) out << ",h" << k;
  out << '\n';
  for (const auto& r : trace.rows) {
    out << r.node << ',' << utf8::encode(r.label) << ',' << r.decoded.onset << ',' << r.decoded.nucleus << ','
        << r.decoded.coda;
    for (Real v : r.h) out << ',' << v;
    out << '\n';
  }
}

Real cosine(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw ShapeError("cosine: lengths differ");
  Real dot = 0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot / (norm(a) * norm(b));
}

NeighborResult nearest_neighbors(std::span<const char32_t> chars, const Tensor& vectors,
                                 std::span<const Real> query, char32_t query_char, std::size_t k) {
  if (k == 0) throw ValidationError("k must be at least 1");
  if (chars.size() != vectors.rows()) throw ShapeError("nearest_neighbors: chars and rows differ");
  if (norm(query) == 0) throw DataError("query embedding has zero norm");
  NeighborResult out;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (chars[i] == query_char) continue;
    const auto row = vectors.row(i);
    if (norm(row) == 0) {
      out.warnings.push_back("skipping " + utf8::encode(chars[i]) + ": zero-norm embedding");
      continue;
    }
    out.neighbors.push_back({chars[i], cosine(query, row)});
  }
  std::sort(out.neighbors.begin(), out.neighbors.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.ch < b.ch;
  });
  if (out.neighbors.size() > k) out.neighbors.resize(k);
  return out;
}

Tensor pron_embeddings(pron::PronModel& model, std::span<const char32_t> chars, const ids::RuleTable& rules) {
  std::vector<ids::GlyphTree> trees;
  for (char32_t c : chars) trees.push_back(ids::decompose(c, rules));
  const auto ptrs = pron::pointers(trees);
  Tensor out({chars.size(), model.encoder().output_dim()});
  constexpr std::size_t kBatch = 256;
  for (std::size_t b = 0; b < ptrs.size(); b += kBatch) {
    const std::span<const ids::GlyphTree* const> part(ptrs.data() + b, std::min(kBatch, ptrs.size() - b));
    ad::Tape tape;
    const Tensor& h = model.encoder().encode(tape, part, {}).value();
    for (std::size_t r = 0; r < part.size(); ++r) std::copy(h.row(r).begin(), h.row(r).end(), out.row(b + r).begin());
  }
  return out;
}

Tensor lm_embeddings(lm::LmModel& model, std::span<const char32_t> chars, const ids::RuleTable* rules) {
  std::map<char32_t, ids::GlyphTree> extra;
  if (rules && model.config().input == lm::LmInput::kHierarchical) {
    for (char32_t c : chars) {
      if (!model.chars().contains(c) && rules->contains(c)) extra.emplace(c, ids::decompose(c, *rules));
    }
  }
  ad::Tape tape;
  return model.embed_chars(tape, chars, {}, &extra).value();
}

}  // namespace hce::diag
