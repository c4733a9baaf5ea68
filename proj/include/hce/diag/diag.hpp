#pragma once

// Inspection tools for trained models: forget-gate direction statistics,
// per-node prediction traces and cosine nearest neighbours.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hce/ids/ids.hpp"
#include "hce/lm/lm.hpp"
#include "hce/pron/model.hpp"

namespace hce::diag {

struct GateBiasReport {
  std::size_t total = 0;         // trees rooted in a left-right operator
  std::size_t prefer_right = 0;  // ‖f_r‖ > ‖f_l‖ at the root
  /// Empty when there are no qualifying trees.
  std::optional<double> percentage() const;
  nlohmann::json to_json() const;
};

/// Compares L2 norms of the two forget gates at the root of every tree whose
/// root operator is ⿰. Equal norms count as not preferring the right child.
GateBiasReport gate_bias(enc::TreeLstmEncoder& encoder, std::span<const ids::GlyphTree> trees);
/// Throws ContractError unless the model uses a treeLSTM encoder.
GateBiasReport gate_bias(pron::PronModel& model, std::span<const ids::GlyphTree> trees);

struct ProbeRow {
  std::size_t node = 0;  // post-order node index, or sequence position
  char32_t label = 0;
  phono::Syllable decoded;
  std::vector<Real> h;
};

struct ProbeTrace {
  std::vector<ProbeRow> rows;
};

/// Feeds every intermediate state to the head. treeLSTM: one row per node in
/// evaluation (post-) order, root last. LSTM/biLSTM: one row per input
/// position. Throws ContractError for CNN encoders.
ProbeTrace probe(pron::PronModel& model, const ids::GlyphTree& tree);

/// `node,label,onset,nucleus,coda,h0,h1,...`
void write_probe_csv(std::ostream& out, const ProbeTrace& trace);

Real cosine(std::span<const Real> a, std::span<const Real> b);

struct Neighbor {
  char32_t ch = 0;
  Real similarity = 0;
};

struct NeighborResult {
  std::vector<Neighbor> neighbors;
  std::vector<std::string> warnings;
};

/// Top-k rows of `vectors` by cosine similarity to `query`, skipping
/// `query_char` and zero vectors; ties go to the lower codepoint. Throws
/// ValidationError for k = 0 and DataError for a zero query.
NeighborResult nearest_neighbors(std::span<const char32_t> chars, const ad::Tensor& vectors,
                                 std::span<const Real> query, char32_t query_char, std::size_t k);

/// Root embeddings of `chars` under a pronunciation model.
ad::Tensor pron_embeddings(pron::PronModel& model, std::span<const char32_t> chars, const ids::RuleTable& rules);
/// LM input vectors of `chars`; hierarchical models compose unseen
/// characters from `rules`.
ad::Tensor lm_embeddings(lm::LmModel& model, std::span<const char32_t> chars, const ids::RuleTable* rules);

}  // namespace hce::diag
