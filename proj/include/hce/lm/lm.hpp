#pragma once

// Character language model over a stacked LSTM. Inputs come either from a
// lookup table or from treeLSTM compositions of each character's glyph tree.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hce/ad/checkpoint.hpp"
#include "hce/enc/encoder.hpp"
#include "hce/ids/ids.hpp"

namespace hce::lm {

/// End-of-sentence symbol appended to every line.
inline constexpr char32_t kEos = U'\n';

enum class LmInput { kLookup, kHierarchical };
const char* to_string(LmInput i);
LmInput parse_lm_input(std::string_view s);

struct LmConfig {
  LmInput input = LmInput::kLookup;
  /// Width of the character input vector (lookup rows or treeLSTM hidden).
  std::size_t embed_dim = 64;
  /// treeLSTM token embedding width.
  std::size_t token_dim = 32;
  std::vector<std::size_t> layers = {256, 256};
  Real dropout_input = 0.1;
  Real dropout_hidden = 0.1;
  Real dropout_output = 0.25;
  Real lr = 2e-3;
  int epochs = 10;
  std::size_t batch_size = 16;  // parallel streams
  std::size_t bptt = 35;
  std::uint64_t seed = 0;
  Real clip = 1.0;

  nlohmann::json to_json() const;
  static LmConfig from_json(const nlohmann::json& j);
};

/// One sentence per line; empty lines are skipped. Throws IoError when the
/// file cannot be read.
std::vector<std::u32string> read_corpus(const std::filesystem::path& path);

/// EOS, then every line followed by EOS. Position 0 is context only.
std::u32string corpus_stream(std::span<const std::u32string> lines);

/// Glyph tree used as the input of `c`: its decomposition when the table
/// knows it, else a single leaf.
ids::GlyphTree input_tree(char32_t c, const ids::RuleTable& rules);

/// Precomputed input vectors for a fixed parameter version.
struct EmbeddingCache {
  std::uint64_t version = 0;
  std::map<char32_t, std::size_t> index;
  ad::Tensor vectors;  // [rows, embed_dim]

  bool valid_for(std::uint64_t v) const { return !index.empty() && v == version; }
};

struct LmState {
  std::vector<ad::Tensor> h;
  std::vector<ad::Tensor> c;
};

class LmModel {
 public:
  /// Output vocabulary: UNK, EOS and every character of `train`.
  LmModel(const LmConfig& config, std::span<const std::u32string> train, const ids::RuleTable& rules);
  explicit LmModel(const ad::Checkpoint& ckpt);

  ad::Checkpoint checkpoint(const nlohmann::json& extra = nlohmann::json::object()) const;

  const LmConfig& config() const { return config_; }
  const enc::TokenVocab& chars() const { return chars_; }
  std::size_t vocab_size() const { return chars_.size(); }
  ad::ParameterStore& store() { return *store_; }
  const ad::ParameterStore& store() const { return *store_; }
  ad::Parameter& output_weight() { return *out_w_; }
  ad::Parameter* output_bias() { return out_b_; }
  /// Lookup table (baseline input only).
  ad::Parameter* lookup_table() { return lookup_; }
  enc::TreeLstmEncoder* tree_encoder() { return tree_enc_.get(); }
  const std::vector<ids::GlyphTree>& char_trees() const { return char_trees_; }

  /// Input rows for characters; out-of-vocabulary characters map to UNK for
  /// lookup input and are composed from `extra` trees for hierarchical input
  /// when present. Returns [chars.size(), embed_dim].
  ad::Var embed_chars(ad::Tape& tape, std::span<const char32_t> chars, const enc::EncodeOptions& opt,
                      const std::map<char32_t, ids::GlyphTree>* extra = nullptr,
                      const EmbeddingCache* cache = nullptr);

  LmState initial_state(std::size_t batch) const;
  /// One step for a batch of inputs: returns logits [B, V] and advances state.
  ad::Var step(ad::Tape& tape, ad::Var x, std::vector<ad::Var>& h, std::vector<ad::Var>& c,
               const enc::EncodeOptions& opt);

 private:
  void build(Rng* rng);

  LmConfig config_;
  enc::TokenVocab chars_{false};
  std::vector<ids::GlyphTree> char_trees_;  // hierarchical input, by char index
  std::unique_ptr<ad::ParameterStore> store_;
  ad::Parameter* lookup_ = nullptr;
  std::unique_ptr<enc::TreeLstmEncoder> tree_enc_;
  std::vector<enc::LstmParams> layers_;
  ad::Parameter* out_w_ = nullptr;
  ad::Parameter* out_b_ = nullptr;
};

/// One treeLSTM forward over every vocabulary character (plus `extra`).
EmbeddingCache build_cache(LmModel& model, const std::map<char32_t, ids::GlyphTree>* extra = nullptr);

/// Next-character distribution after feeding `c`; advances `state`.
std::vector<Real> lm_step(LmModel& model, LmState& state, char32_t c, const EmbeddingCache* cache = nullptr);

struct LmEval {
  double bpc = 0;
  double ppl = 0;
  std::size_t predictions = 0;
  /// Out-of-vocabulary input characters, and those given a composed
  /// embedding instead of UNK.
  std::size_t oov_inputs = 0;
  std::size_t oov_composed = 0;

  nlohmann::json to_json() const;
};

struct LmEvalOptions {
  bool use_cache = true;
  /// Rules for composing out-of-vocabulary characters (hierarchical only).
  const ids::RuleTable* rules = nullptr;
  std::size_t chunk = 256;
};

/// BPC over the stream of `lines`; PPL = 2^BPC.
LmEval eval_lm(LmModel& model, std::span<const std::u32string> lines, const LmEvalOptions& opt = {});

struct LmEpoch {
  int epoch = 0;
  double train_bpc = 0;  // running estimate with dropout active
  std::optional<double> valid_bpc;

  friend bool operator==(const LmEpoch&, const LmEpoch&) = default;
};

struct LmTrainResult {
  ad::Checkpoint checkpoint;
  std::vector<LmEpoch> history;
};

/// Truncated backpropagation over `batch_size` contiguous streams. For
/// hierarchical input each step composes only the characters present in the
/// chunk. Throws DataError on an empty corpus.
LmTrainResult train_lm(const LmConfig& config, std::span<const std::u32string> train,
                       std::span<const std::u32string> valid, const ids::RuleTable& rules);

/// Greedy continuation of `prefix` for `n` characters.
std::u32string generate(LmModel& model, std::u32string_view prefix, std::size_t n);

}  // namespace hce::lm
