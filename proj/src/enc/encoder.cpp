#include "hce/enc/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "hce/ad/optim.hpp"

namespace hce::enc {

using ad::Tensor;
using ad::Var;

namespace {

constexpr Real kEmbeddingInitBound = 0.1;

ad::Parameter* make_table(ad::ParameterStore& store, const std::string& prefix, std::size_t rows,
                          std::size_t dim, Rng* rng) {
  const std::string name = prefix + ".tokens";
  if (!rng) {
    ad::Parameter& t = store.at(name);
    if (t.value.rows() != rows || t.value.cols() != dim) {
      throw DataError(name + " has shape " + t.value.shape_str() + ", vocabulary needs [" +
                      std::to_string(rows) + "," + std::to_string(dim) + "]");
    }
    return &t;
  }
  return &store.add(name, ad::init_uniform(rows, dim, kEmbeddingInitBound, *rng), true);
}

std::vector<std::u32string> tree_sequences(const EncoderConfig& c,
                                           std::span<const ids::GlyphTree* const> trees) {
  std::vector<std::u32string> out;
  out.reserve(trees.size());
  for (const auto* t : trees) out.push_back(encoder_tokens(c, *t));
  return out;
}

}  // namespace

const char* to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::kTreeLstm: return "treelstm";
    case EncoderKind::kLstm: return "lstm";
    case EncoderKind::kBiLstm: return "bilstm";
    case EncoderKind::kCnn: return "cnn";
  }
  return "?";
}

EncoderKind parse_encoder_kind(std::string_view s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "treelstm") return EncoderKind::kTreeLstm;
  if (l == "lstm") return EncoderKind::kLstm;
  if (l == "bilstm") return EncoderKind::kBiLstm;
  if (l == "cnn") return EncoderKind::kCnn;
  throw ValidationError("unknown encoder '" + std::string(s) + "' (treelstm|lstm|bilstm|cnn)");
}

std::string EncoderConfig::model_name() const {
  switch (kind) {
    case EncoderKind::kTreeLstm: return "treeLSTM";
    case EncoderKind::kLstm: return layers == 2 ? "2-layer LSTM" : "LSTM";
    case EncoderKind::kBiLstm: return layers == 2 ? "2-layer biLSTM" : "biLSTM";
    case EncoderKind::kCnn: return "CNN";
  }
  return "?";
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"kind", to_string(kind)},
          {"input_dim", input_dim},
          {"hidden", hidden},
          {"layers", layers},
          {"op_inputs", op_inputs},
          {"bias", bias},
          {"order", ids::to_string(order)},
          {"cnn_filters", cnn_filters},
          {"cnn_max_width", cnn_max_width}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.kind = parse_encoder_kind(j.at("kind").get<std::string>());
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.op_inputs = j.value("op_inputs", c.op_inputs);
  c.bias = j.value("bias", c.bias);
  c.order = ids::parse_linear_order(j.value("order", std::string("pre")));
  c.cnn_filters = j.value("cnn_filters", c.cnn_filters);
  c.cnn_max_width = j.value("cnn_max_width", c.cnn_max_width);
  return c;
}

std::u32string encoder_tokens(const EncoderConfig& config, const ids::GlyphTree& tree) {
  std::u32string seq = ids::linearize(tree, config.order);
  if (!config.op_inputs) seq = ids::strip_operators(seq);
  return seq;
}

Var Encoder::embed(ad::Tape& tape, std::span<const std::size_t> tokens, const EncodeOptions& opt) {
  Var e = ad::lookup(tape, *table_, tokens);
  if (opt.training && opt.dropout > 0) {
    if (!opt.rng) throw ContractError("dropout requires a random generator");
    e = ad::apply_mask(e, ad::dropout_mask(e.value().shape(), opt.dropout, *opt.rng, true));
  }
  return e;
}

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& config, TokenVocab vocab,
                                      ad::ParameterStore& store, const std::string& prefix, Rng* rng) {
  if (config.input_dim == 0 || config.hidden == 0) throw ValidationError("encoder dimensions must be positive");
  switch (config.kind) {
    case EncoderKind::kTreeLstm:
      return std::make_unique<TreeLstmEncoder>(config, std::move(vocab), store, prefix, rng);
    case EncoderKind::kLstm:
    case EncoderKind::kBiLstm:
      return std::make_unique<LstmEncoder>(config, std::move(vocab), store, prefix, rng);
    case EncoderKind::kCnn:
      return std::make_unique<CnnEncoder>(config, std::move(vocab), store, prefix, rng);
  }
  throw ContractError("unknown encoder kind");
}

// ---------------------------------------------------------------------------

TreeLstmEncoder::TreeLstmEncoder(EncoderConfig config, TokenVocab vocab, ad::ParameterStore& store,
                                 const std::string& prefix, Rng* rng)
    : Encoder(config, std::move(vocab)) {
  table_ = make_table(store, prefix, vocab_.size(), config_.input_dim, rng);
  params_ = rng ? TreeLstmParams::create(store, prefix + ".tree", config_.input_dim, config_.hidden,
                                         config_.bias, *rng)
                : TreeLstmParams::bind(store, prefix + ".tree");
}

BatchResult TreeLstmEncoder::encode_detailed(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees,
                                             const EncodeOptions& opt) {
  LevelSchedule s = build_level_schedule(trees);
  const auto tokens = slot_tokens(s, trees, vocab_);
  return treelstm_batch_forward(params_, embed(tape, tokens, opt), std::move(s), config_.op_inputs);
}

Var TreeLstmEncoder::encode(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees,
                            const EncodeOptions& opt) {
  return encode_detailed(tape, trees, opt).roots;
}

// ---------------------------------------------------------------------------

LstmParams LstmParams::create(ad::ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                              std::size_t hidden, bool bias, Rng& rng) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  p.W = &store.add(prefix + ".W", ad::init_fan_in(4 * hidden, input_dim + hidden, rng));
  if (bias) p.b = &store.add(prefix + ".b", Tensor({4 * hidden}));
  return p;
}

LstmParams LstmParams::bind(ad::ParameterStore& store, const std::string& prefix) {
  LstmParams p;
  p.W = &store.at(prefix + ".W");
  p.b = store.find(prefix + ".b");
  p.hidden = p.W->value.rows() / 4;
  p.input_dim = p.W->value.cols() - p.hidden;
  return p;
}

std::pair<Var, Var> lstm_cell(const LstmParams& p, Var x, Var h, Var c) {
  ad::Tape& tape = *x.tape;
  const std::size_t H = p.hidden;
  const Var xh[] = {x, h};
  Var pre = ad::linear(ad::concat_cols(xh), tape.param(*p.W));
  if (p.b) pre = ad::add_row(pre, tape.param(*p.b));
  const Var gates = ad::sigmoid(ad::slice_cols(pre, 0, 3 * H));
  const Var i = ad::slice_cols(gates, 0, H);
  const Var f = ad::slice_cols(gates, H, 2 * H);
  const Var o = ad::slice_cols(gates, 2 * H, 3 * H);
  const Var g = ad::tanh(ad::slice_cols(pre, 3 * H, 4 * H));
  Var c_new = ad::mul(i, g);
  if (c.valid()) c_new = ad::add(ad::mul(f, c), c_new);
  return {ad::mul(o, ad::tanh(c_new)), c_new};
}

std::vector<Var> lstm_layer(ad::Tape& tape, const LstmParams& p, std::span<const Var> inputs) {
  std::vector<Var> out;
  if (inputs.empty()) return out;
  Var h = tape.constant(Tensor::zeros(inputs[0].rows(), p.hidden));
  Var c;
  for (const Var& x : inputs) {
    const std::size_t n = x.rows();
    if (n > h.rows()) throw ShapeError("lstm_layer: active rows must not grow over time");
    if (n < h.rows()) {
      h = ad::slice_rows(h, 0, n);
      if (c.valid()) c = ad::slice_rows(c, 0, n);
    }
    std::tie(h, c) = lstm_cell(p, x, h, c);
    out.push_back(h);
  }
  return out;
}

LstmEncoder::LstmEncoder(EncoderConfig config, TokenVocab vocab, ad::ParameterStore& store,
                         const std::string& prefix, Rng* rng)
    : Encoder(config, std::move(vocab)) {
  if (config_.layers < 1 || config_.layers > 2) throw ValidationError("LSTM layers must be 1 or 2");
  table_ = make_table(store, prefix, vocab_.size(), config_.input_dim, rng);
  const bool bi = config_.kind == EncoderKind::kBiLstm;
  for (int l = 0; l < config_.layers; ++l) {
    const std::size_t in = l == 0 ? config_.input_dim : (bi ? 2 : 1) * config_.hidden;
    const std::string name = prefix + ".fwd" + std::to_string(l);
    fwd_.push_back(rng ? LstmParams::create(store, name, in, config_.hidden, config_.bias, *rng)
                       : LstmParams::bind(store, name));
    if (bi) {
      const std::string bname = prefix + ".bwd" + std::to_string(l);
      bwd_.push_back(rng ? LstmParams::create(store, bname, in, config_.hidden, config_.bias, *rng)
                         : LstmParams::bind(store, bname));
    }
  }
}

std::size_t LstmEncoder::output_dim() const {
  return config_.kind == EncoderKind::kBiLstm ? 2 * config_.hidden : config_.hidden;
}

LstmEncoder::Run LstmEncoder::run(ad::Tape& tape, std::span<const std::u32string> seqs,
                                  const EncodeOptions& opt) {
  if (seqs.empty()) throw ContractError("LSTM encoder: empty batch");
  Run r;
  r.order.resize(seqs.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return seqs[a].size() > seqs[b].size(); });
  for (std::size_t j : r.order) {
    if (seqs[j].empty()) throw ContractError("LSTM encoder: empty sequence");
    r.lengths.push_back(seqs[j].size());
  }
  const std::size_t T = r.lengths.front();
  // Time-major token layout: step t holds sorted rows 0..active(t)-1.
  std::vector<std::size_t> active(T), offset(T + 1, 0), tokens;
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t n = 0;
    while (n < r.lengths.size() && r.lengths[n] > t) {
      tokens.push_back(vocab_.index(seqs[r.order[n]][t]));
      ++n;
    }
    active[t] = n;
    offset[t + 1] = offset[t] + n;
  }
  const Var X = embed(tape, tokens, opt);
  std::vector<Var> fin, bin;
  for (std::size_t t = 0; t < T; ++t) fin.push_back(ad::slice_rows(X, offset[t], offset[t + 1]));
  const bool bi = config_.kind == EncoderKind::kBiLstm;
  // Row of (sorted sequence j, position pos) in a time-major list.
  auto at = [&](std::size_t j, std::size_t pos) { return ad::RowRef{pos, j}; };
  auto reversed_refs = [&](std::size_t t) {
    std::vector<ad::RowRef> refs;
    for (std::size_t j = 0; j < active[t]; ++j) refs.push_back(at(j, r.lengths[j] - 1 - t));
    return refs;
  };
  if (bi) {
    const Var xs[] = {X};
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<ad::RowRef> refs;
      for (const auto& ref : reversed_refs(t)) refs.push_back({0, offset[ref.source] + ref.row});
      bin.push_back(ad::gather_rows(xs, refs));
    }
  }
  for (std::size_t l = 0; l < fwd_.size(); ++l) {
    r.fwd = lstm_layer(tape, fwd_[l], fin);
    if (bi) r.bwd = lstm_layer(tape, bwd_[l], bin);
    if (l + 1 == fwd_.size()) break;
    if (!bi) {
      fin = r.fwd;
      continue;
    }
    // Next layer sees [h_fwd, h_bwd] at each position, in its own direction.
    std::vector<Var> nf, nb;
    for (std::size_t t = 0; t < T; ++t) {
      const auto refs = reversed_refs(t);
      const Var f_parts[] = {r.fwd[t], ad::gather_rows(r.bwd, refs)};
      nf.push_back(ad::concat_cols(f_parts));
      const Var b_parts[] = {ad::gather_rows(r.fwd, refs), r.bwd[t]};
      nb.push_back(ad::concat_cols(b_parts));
    }
    fin = std::move(nf);
    bin = std::move(nb);
  }
  return r;
}

Var LstmEncoder::encode_sequences(ad::Tape& tape, std::span<const std::u32string> seqs,
                                  const EncodeOptions& opt) {
  const Run r = run(tape, seqs, opt);
  std::vector<std::size_t> sorted_pos(seqs.size());
  for (std::size_t j = 0; j < r.order.size(); ++j) sorted_pos[r.order[j]] = j;
  std::vector<ad::RowRef> finals;
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    const std::size_t j = sorted_pos[b];
    finals.push_back({r.lengths[j] - 1, j});
  }
  const Var hf = ad::gather_rows(r.fwd, finals);
  if (config_.kind != EncoderKind::kBiLstm) return hf;
  const Var parts[] = {hf, ad::gather_rows(r.bwd, finals)};
  return ad::concat_cols(parts);
}

Var LstmEncoder::encode(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees,
                        const EncodeOptions& opt) {
  const auto seqs = tree_sequences(config_, trees);
  return encode_sequences(tape, seqs, opt);
}

Var LstmEncoder::step_states(ad::Tape& tape, const std::u32string& seq) {
  const std::u32string one[] = {seq};
  const Run r = run(tape, one, {});
  const std::size_t L = seq.size();
  std::vector<Var> rows;
  for (std::size_t p = 0; p < L; ++p) {
    if (config_.kind == EncoderKind::kBiLstm) {
      const Var parts[] = {r.fwd[p], r.bwd[L - 1 - p]};
      rows.push_back(ad::concat_cols(parts));
    } else {
      rows.push_back(r.fwd[p]);
    }
  }
  return ad::concat_rows(rows);
}

// ---------------------------------------------------------------------------

CnnEncoder::CnnEncoder(EncoderConfig config, TokenVocab vocab, ad::ParameterStore& store,
                       const std::string& prefix, Rng* rng)
    : Encoder(config, std::move(vocab)) {
  if (config_.cnn_max_width == 0 || config_.cnn_filters == 0) throw ValidationError("CNN needs filters");
  table_ = make_table(store, prefix, vocab_.size(), config_.input_dim, rng);
  const std::size_t D = config_.input_dim, F = config_.cnn_filters;
  for (std::size_t w = 1; w <= config_.cnn_max_width; ++w) {
    const std::string name = prefix + ".conv" + std::to_string(w);
    if (rng) {
      kernels_.push_back(&store.add(name + ".W", ad::init_fan_in(F, w * D, *rng)));
      kernel_bias_.push_back(config_.bias ? &store.add(name + ".b", Tensor({F})) : nullptr);
    } else {
      kernels_.push_back(&store.at(name + ".W"));
      kernel_bias_.push_back(store.find(name + ".b"));
    }
  }
  const std::size_t pooled = F * config_.cnn_max_width;
  if (rng) {
    fc_ = &store.add(prefix + ".fc.W", ad::init_fan_in(config_.hidden, pooled, *rng));
    fc_bias_ = config_.bias ? &store.add(prefix + ".fc.b", Tensor({config_.hidden})) : nullptr;
  } else {
    fc_ = &store.at(prefix + ".fc.W");
    fc_bias_ = store.find(prefix + ".fc.b");
  }
}

Var CnnEncoder::encode_sequences(ad::Tape& tape, std::span<const std::u32string> seqs,
                                 const EncodeOptions& opt) {
  if (seqs.empty()) throw ContractError("CNN encoder: empty batch");
  const std::size_t D = config_.input_dim, W = config_.cnn_max_width;
  std::vector<std::size_t> tokens, offset{0};
  for (const auto& s : seqs) {
    if (s.empty()) throw ContractError("CNN encoder: empty sequence");
    for (char32_t c : s) tokens.push_back(vocab_.index(c));
    offset.push_back(tokens.size());
  }
  const Var X = embed(tape, tokens, opt);
  std::vector<Var> padded;
  for (std::size_t j = 0; j < seqs.size(); ++j) {
    Var s = ad::slice_rows(X, offset[j], offset[j + 1]);
    const std::size_t T = offset[j + 1] - offset[j];
    if (T < W) {
      const Var parts[] = {s, tape.constant(Tensor::zeros(W - T, D))};
      s = ad::concat_rows(parts);
    }
    padded.push_back(s);
  }
  std::vector<Var> pooled;
  for (std::size_t w = 1; w <= W; ++w) {
    std::vector<Var> windows;
    std::vector<std::size_t> seg{0};
    for (const Var& s : padded) {
      windows.push_back(ad::unfold(s, w));
      seg.push_back(seg.back() + windows.back().rows());
    }
    Var resp = ad::linear(ad::concat_rows(windows), tape.param(*kernels_[w - 1]));
    if (kernel_bias_[w - 1]) resp = ad::add_row(resp, tape.param(*kernel_bias_[w - 1]));
    pooled.push_back(ad::segment_max(resp, seg));
  }
  Var out = ad::linear(ad::concat_cols(pooled), tape.param(*fc_));
  if (fc_bias_) out = ad::add_row(out, tape.param(*fc_bias_));
  return out;
}

Var CnnEncoder::encode(ad::Tape& tape, std::span<const ids::GlyphTree* const> trees,
                       const EncodeOptions& opt) {
  const auto seqs = tree_sequences(config_, trees);
  return encode_sequences(tape, seqs, opt);
}

}  // namespace hce::enc
