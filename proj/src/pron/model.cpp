#include "hce/pron/model.hpp"

#include <set>

#include "hce/ad/optim.hpp"
#include "hce/common/utf8.hpp"

namespace hce::pron {

nlohmann::json PronModelConfig::to_json() const {
  return {{"encoder", encoder.to_json()}, {"output_order", to_string(output_order)}, {"head_bias", head_bias}};
}

PronModelConfig PronModelConfig::from_json(const nlohmann::json& j) {
  PronModelConfig c;
  c.encoder = enc::EncoderConfig::from_json(j.at("encoder"));
  c.output_order = parse_output_order(j.at("output_order").get<std::string>());
  c.head_bias = j.value("head_bias", true);
  return c;
}

std::vector<ids::GlyphTree> decompose_entries(std::span<const phono::PronEntry> entries,
                                              const ids::RuleTable& rules) {
  std::vector<ids::GlyphTree> trees;
  trees.reserve(entries.size());
  for (const auto& e : entries) trees.push_back(ids::decompose(e.ch, rules));
  return trees;
}

enc::TokenVocab vocab_from_trees(std::span<const ids::GlyphTree> trees) {
  std::set<char32_t> tokens;
  for (const auto& t : trees) {
    for (const auto& n : t.nodes()) tokens.insert(n.label);
  }
  return enc::TokenVocab(tokens, true);
}

std::vector<const ids::GlyphTree*> pointers(std::span<const ids::GlyphTree> trees) {
  std::vector<const ids::GlyphTree*> out;
  out.reserve(trees.size());
  for (const auto& t : trees) out.push_back(&t);
  return out;
}

PronModel::PronModel(const PronModelConfig& config, enc::TokenVocab vocab, Inventories inv, Rng& rng)
    : config_(config), inv_(std::move(inv)), store_(std::make_unique<ad::ParameterStore>()) {
  encoder_ = enc::make_encoder(config_.encoder, std::move(vocab), *store_, "enc", &rng);
  head_ = PronHead(*store_, "head", encoder_->output_dim(), inv_, config_.output_order, config_.head_bias, &rng);
}

PronModel::PronModel(const ad::Checkpoint& ckpt) : store_(std::make_unique<ad::ParameterStore>()) {
  const auto& m = ckpt.manifest.at("model");
  config_ = PronModelConfig::from_json(m.at("config"));
  inv_ = Inventories::from_json(m.at("inventories"));
  auto vocab = enc::TokenVocab::from_utf8(m.at("vocab").get<std::string>());
  // Register parameters with placeholder values, then overwrite them.
  Rng rng(0);
  encoder_ = enc::make_encoder(config_.encoder, std::move(vocab), *store_, "enc", &rng);
  head_ = PronHead(*store_, "head", encoder_->output_dim(), inv_, config_.output_order, config_.head_bias, &rng);
  ad::restore(*store_, ckpt);
}

ad::Checkpoint PronModel::checkpoint(const nlohmann::json& extra) const {
  nlohmann::json m = extra;
  m["kind"] = "pron";
  m["model"] = {{"config", config_.to_json()},
                {"inventories", inv_.to_json()},
                {"vocab", encoder_->vocab().to_utf8()}};
  return ad::snapshot(*store_, m);
}

void PronModel::load_parameters(const ad::Checkpoint& ckpt) { ad::restore(*store_, ckpt); }

ad::Var PronModel::embed(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees,
                         const enc::EncodeOptions& opt) {
  ad::Var h = encoder_->encode(tape, trees, opt);
  if (opt.training && opt.dropout > 0) {
    h = ad::apply_mask(h, ad::dropout_mask({h.rows(), h.cols()}, opt.dropout, *opt.rng, true));
  }
  return h;
}

HeadOutput PronModel::forward(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees,
                              const enc::EncodeOptions& opt) {
  return head_.forward(embed(tape, trees, opt));
}

std::vector<phono::Syllable> PronModel::predict(std::span<const ids::GlyphTree* const> trees, std::size_t batch) {
  std::vector<phono::Syllable> out;
  out.reserve(trees.size());
  for (std::size_t b = 0; b < trees.size(); b += batch) {
    const auto part = trees.subspan(b, std::min(batch, trees.size() - b));
    ad::Tape tape;
    const HeadOutput o = forward(tape, part, {});
    for (std::size_t r = 0; r < part.size(); ++r) out.push_back(decode(o, inv_, r));
  }
  return out;
}

}  // namespace hce::pron
