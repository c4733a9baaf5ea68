#pragma once

// Encoder plus chained head, with everything needed to rebuild it from a
// checkpoint (encoder config, token vocabulary, class inventories).

#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "hce/ad/checkpoint.hpp"
#include "hce/enc/encoder.hpp"
#include "hce/ids/ids.hpp"
#include "hce/phono/phono.hpp"
#include "hce/pron/head.hpp"

namespace hce::pron {

struct PronModelConfig {
  enc::EncoderConfig encoder;
  OutputOrder output_order = OutputOrder::kCodaFirst;
  bool head_bias = true;

  nlohmann::json to_json() const;
  static PronModelConfig from_json(const nlohmann::json& j);
};

/// Decomposes every entry's character.
std::vector<ids::GlyphTree> decompose_entries(std::span<const phono::PronEntry> entries,
                                              const ids::RuleTable& rules);

/// Every label appearing in `trees`, plus the operators.
enc::TokenVocab vocab_from_trees(std::span<const ids::GlyphTree> trees);

std::vector<const ids::GlyphTree*> pointers(std::span<const ids::GlyphTree> trees);

class PronModel {
 public:
  /// Fresh parameters drawn from `rng`.
  PronModel(const PronModelConfig& config, enc::TokenVocab vocab, Inventories inv, Rng& rng);
  /// Rebuilds a model saved with checkpoint().
  explicit PronModel(const ad::Checkpoint& ckpt);

  /// Parameters plus a manifest describing the model; `extra` is merged in.
  ad::Checkpoint checkpoint(const nlohmann::json& extra = nlohmann::json::object()) const;
  void load_parameters(const ad::Checkpoint& ckpt);

  /// Root embeddings of a batch, with input dropout and dropout on the root
  /// state when training.
  ad::Var embed(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees, const enc::EncodeOptions& opt);
  HeadOutput forward(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees, const enc::EncodeOptions& opt);

  /// Argmax decoding in evaluation mode.
  std::vector<phono::Syllable> predict(std::span<const ids::GlyphTree* const> trees, std::size_t batch = 256);

  const PronModelConfig& config() const { return config_; }
  const Inventories& inventories() const { return inv_; }
  ad::ParameterStore& store() { return *store_; }
  const ad::ParameterStore& store() const { return *store_; }
  enc::Encoder& encoder() { return *encoder_; }
  const PronHead& head() const { return head_; }

 private:
  void build(Rng* rng);

  PronModelConfig config_;
  Inventories inv_;
  std::unique_ptr<ad::ParameterStore> store_;
  std::unique_ptr<enc::Encoder> encoder_;
  PronHead head_;
};

}  // namespace hce::pron
