#pragma once

#include <memory>
#include <span>
#include <string>

#include <json.hpp>

#include "hce/ad/tape.hpp"
#include "hce/common/rng.hpp"
#include "hce/enc/treelstm.hpp"
#include "hce/enc/vocab.hpp"
#include "hce/ids/ids.hpp"

namespace hce::enc {

enum class EncoderKind { kTreeLstm, kLstm, kBiLstm, kCnn };

const char* to_string(EncoderKind k);
/// Accepts "treelstm", "lstm", "bilstm", "cnn" (case-insensitive).
EncoderKind parse_encoder_kind(std::string_view s);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kTreeLstm;
  std::size_t input_dim = 64;
  std::size_t hidden = 256;
  int layers = 1;  // LSTM / biLSTM only
  /// false: treeLSTM drops the V terms at inner nodes; sequence encoders
  /// drop operator tokens from their input.
  bool op_inputs = true;
  bool bias = true;
  ids::LinearOrder order = ids::LinearOrder::kPreOrder;
  std::size_t cnn_filters = 200;
  std::size_t cnn_max_width = 7;

  /// Display name such as "treeLSTM" or "2-layer LSTM".
  std::string model_name() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

struct EncodeOptions {
  bool training = false;
  Real dropout = 0;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

/// Maps a batch of glyph trees to a [B, output_dim] matrix.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual ad::Var encode(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees,
                         const EncodeOptions& opt) = 0;
  virtual std::size_t output_dim() const = 0;

  const EncoderConfig& config() const { return config_; }
  const TokenVocab& vocab() const { return vocab_; }
  ad::Parameter& table() { return *table_; }

 protected:
  Encoder(EncoderConfig config, TokenVocab vocab) : config_(config), vocab_(std::move(vocab)) {}
  /// Embedding rows for `tokens` with input dropout applied.
  ad::Var embed(ad::Tape& tape, std::span<const std::size_t> tokens, const EncodeOptions& opt);

  EncoderConfig config_;
  TokenVocab vocab_;
  ad::Parameter* table_ = nullptr;
};

/// Creates parameters under `prefix` in `store` (fresh initialisation from
/// `rng`), or binds to existing ones when `rng` is null.
std::unique_ptr<Encoder> make_encoder(const EncoderConfig& config, TokenVocab vocab,
                                      ad::ParameterStore& store, const std::string& prefix, Rng* rng);

class TreeLstmEncoder : public Encoder {
 public:
  TreeLstmEncoder(EncoderConfig config, TokenVocab vocab, ad::ParameterStore& store,
                  const std::string& prefix, Rng* rng);
  ad::Var encode(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees,
                 const EncodeOptions& opt) override;
  std::size_t output_dim() const override { return config_.hidden; }

  /// Encode keeping per-level states for diagnostics.
  BatchResult encode_detailed(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees,
                              const EncodeOptions& opt);
  const TreeLstmParams& params() const { return params_; }

 private:
  TreeLstmParams params_;
};

/// Token sequence a sequence encoder sees for `tree`.
std::u32string encoder_tokens(const EncoderConfig& config, const ids::GlyphTree& tree);

/// Single direction LSTM weights: W = [W_x | W_h] is [4H, D+H] with gate
/// rows ordered i, f, o, g; b is [4H].
struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  ad::Parameter* W = nullptr;
  ad::Parameter* b = nullptr;

  static LstmParams create(ad::ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                           std::size_t hidden, bool bias, Rng& rng);
  static LstmParams bind(ad::ParameterStore& store, const std::string& prefix);
};

/// One LSTM step on a batch of rows: returns (h, c).
std::pair<ad::Var, ad::Var> lstm_cell(const LstmParams& p, ad::Var x, ad::Var h, ad::Var c);

/// Runs a layer over time-major inputs where step t holds the rows of all
/// sequences longer than t (sequences sorted by length, longest first).
/// Returns the hidden output of every step.
std::vector<ad::Var> lstm_layer(ad::Tape& tape, const LstmParams& p, std::span<const ad::Var> inputs);

class LstmEncoder : public Encoder {
 public:
  LstmEncoder(EncoderConfig config, TokenVocab vocab, ad::ParameterStore& store, const std::string& prefix,
              Rng* rng);
  ad::Var encode(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees,
                 const EncodeOptions& opt) override;
  std::size_t output_dim() const override;

  /// Encodes raw token sequences; every sequence must be non-empty.
  ad::Var encode_sequences(ad::Tape& tape, std::span<const std::u32string> seqs, const EncodeOptions& opt);
  /// Per-timestep top-layer hidden states of one sequence (forward direction;
  /// for biLSTM the backward state at the same position is appended).
  ad::Var step_states(ad::Tape& tape, const std::u32string& seq);

  const std::vector<LstmParams>& forward_layers() const { return fwd_; }
  const std::vector<LstmParams>& backward_layers() const { return bwd_; }

 private:
  struct Run {
    std::vector<std::size_t> order;    // sorted position -> batch index
    std::vector<std::size_t> lengths;  // by sorted position
    std::vector<ad::Var> fwd, bwd;     // top-layer outputs per step
  };
  Run run(ad::Tape& tape, std::span<const std::u32string> seqs, const EncodeOptions& opt);

  std::vector<LstmParams> fwd_;
  std::vector<LstmParams> bwd_;
};

class CnnEncoder : public Encoder {
 public:
  CnnEncoder(EncoderConfig config, TokenVocab vocab, ad::ParameterStore& store, const std::string& prefix,
             Rng* rng);
  ad::Var encode(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees,
                 const EncodeOptions& opt) override;
  std::size_t output_dim() const override { return config_.hidden; }

  /// Sequences are padded with zero vectors to at least the widest kernel.
  ad::Var encode_sequences(ad::Tape& tape, std::span<const std::u32string> seqs, const EncodeOptions& opt);

  /// Bank for kernel width w (1-based): weights [F, w*D] and bias [F].
  ad::Parameter& kernel(std::size_t w) { return *kernels_[w - 1]; }
  ad::Parameter& kernel_bias(std::size_t w) { return *kernel_bias_[w - 1]; }
  ad::Parameter& fc() { return *fc_; }
  ad::Parameter& fc_bias() { return *fc_bias_; }

 private:
  std::vector<ad::Parameter*> kernels_;
  std::vector<ad::Parameter*> kernel_bias_;
  ad::Parameter* fc_ = nullptr;
  ad::Parameter* fc_bias_ = nullptr;
};

}  // namespace hce::enc
