#include "hce/lm/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "hce/ad/optim.hpp"
#include "hce/common/error.hpp"
#include "hce/common/utf8.hpp"

namespace hce::lm {

using ad::Tensor;
using ad::Var;

namespace {

constexpr Real kEmbeddingInitBound = 0.1;
const double kLn2 = std::log(2.0);

Var dropout(Var x, Real rate, const enc::EncodeOptions& opt) {
  if (!opt.training || rate <= 0) return x;
  return ad::apply_mask(x, ad::dropout_mask({x.rows(), x.cols()}, rate, *opt.rng, true));
}

std::vector<char32_t> unique_chars(std::u32string_view s) {
  std::vector<char32_t> u(s.begin(), s.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

std::size_t position(const std::vector<char32_t>& sorted, char32_t c) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), c) - sorted.begin());
}

enc::EncoderConfig tree_config(const LmConfig& c) {
  enc::EncoderConfig e;
  e.kind = enc::EncoderKind::kTreeLstm;
  e.input_dim = c.token_dim;
  e.hidden = c.embed_dim;
  return e;
}

}  // namespace

const char* to_string(LmInput i) { return i == LmInput::kLookup ? "lookup" : "hierarchical"; }

LmInput parse_lm_input(std::string_view s) {
  if (s == "lookup") return LmInput::kLookup;
  if (s == "hierarchical") return LmInput::kHierarchical;
  throw ValidationError("unknown LM input '" + std::string(s) + "' (lookup|hierarchical)");
}

nlohmann::json LmConfig::to_json() const {
  return {{"input", to_string(input)},
          {"embed_dim", embed_dim},
          {"token_dim", token_dim},
          {"layers", layers},
          {"dropout_input", dropout_input},
          {"dropout_hidden", dropout_hidden},
          {"dropout_output", dropout_output},
          {"lr", lr},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"bptt", bptt},
          {"seed", seed},
          {"clip", clip}};
}

LmConfig LmConfig::from_json(const nlohmann::json& j) {
  LmConfig c;
  if (j.contains("input")) c.input = parse_lm_input(j.at("input").get<std::string>());
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.token_dim = j.value("token_dim", c.token_dim);
  c.layers = j.value("layers", c.layers);
  c.dropout_input = j.value("dropout_input", c.dropout_input);
  c.dropout_hidden = j.value("dropout_hidden", c.dropout_hidden);
  c.dropout_output = j.value("dropout_output", c.dropout_output);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.bptt = j.value("bptt", c.bptt);
  c.seed = j.value("seed", c.seed);
  c.clip = j.value("clip", c.clip);
  return c;
}

std::vector<std::u32string> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::vector<std::u32string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lines.push_back(utf8::decode(line));
  }
  return lines;
}

std::u32string corpus_stream(std::span<const std::u32string> lines) {
  std::u32string s(1, kEos);
  for (const auto& l : lines) {
    s += l;
    s += kEos;
  }
  return s;
}

ids::GlyphTree input_tree(char32_t c, const ids::RuleTable& rules) {
  if (c != kEos && rules.contains(c)) return ids::decompose(c, rules);
  return ids::GlyphTree::leaf(c);
}

LmModel::LmModel(const LmConfig& config, std::span<const std::u32string> train, const ids::RuleTable& rules)
    : config_(config), store_(std::make_unique<ad::ParameterStore>()) {
  if (config_.layers.empty()) throw ValidationError("LM needs at least one recurrent layer");
  std::set<char32_t> seen;
  for (const auto& l : train) seen.insert(l.begin(), l.end());
  chars_.add(kEos);
  for (char32_t c : seen) chars_.add(c);
  if (config_.input == LmInput::kHierarchical) {
    for (std::size_t i = 0; i < chars_.size(); ++i) {
      char_trees_.push_back(i == 0 ? ids::GlyphTree::leaf(ids::kUnk) : input_tree(chars_.token(i), rules));
    }
  }
  Rng rng(config_.seed);
  Rng init = rng.split(1);
  build(&init);
}

LmModel::LmModel(const ad::Checkpoint& ckpt) : store_(std::make_unique<ad::ParameterStore>()) {
  const auto& m = ckpt.manifest.at("model");
  config_ = LmConfig::from_json(m.at("config"));
  chars_ = enc::TokenVocab::from_utf8(m.at("chars").get<std::string>());
  for (const auto& t : m.at("trees")) char_trees_.push_back(ids::from_preorder(utf8::decode(t.get<std::string>())));
  Rng placeholder(0);
  build(&placeholder);
  ad::restore(*store_, ckpt);
}

void LmModel::build(Rng* rng) {
  const std::size_t V = chars_.size();
  if (config_.input == LmInput::kLookup) {
    lookup_ = &store_->add("lm.embed", ad::init_uniform(V, config_.embed_dim, kEmbeddingInitBound, *rng), true);
  } else {
    std::set<char32_t> tokens;
    for (const auto& t : char_trees_) {
      for (const auto& n : t.nodes()) tokens.insert(n.label);
    }
    tree_enc_ = std::make_unique<enc::TreeLstmEncoder>(tree_config(config_), enc::TokenVocab(tokens, true), *store_,
                                                       "lm.tree", rng);
  }
  std::size_t in = config_.embed_dim;
  for (std::size_t l = 0; l < config_.layers.size(); ++l) {
    layers_.push_back(enc::LstmParams::create(*store_, "lm.rnn" + std::to_string(l), in, config_.layers[l], true, *rng));
    in = config_.layers[l];
  }
  out_w_ = &store_->add("lm.out.W", ad::init_fan_in(V, in, *rng));
  out_b_ = &store_->add("lm.out.b", Tensor({V}));
}

ad::Checkpoint LmModel::checkpoint(const nlohmann::json& extra) const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : char_trees_) trees.push_back(utf8::encode(ids::linearize(t, ids::LinearOrder::kPreOrder)));
  nlohmann::json m = extra;
  m["kind"] = "lm";
  m["model"] = {{"config", config_.to_json()}, {"chars", chars_.to_utf8()}, {"trees", trees}};
  return ad::snapshot(*store_, m);
}

Var LmModel::embed_chars(ad::Tape& tape, std::span<const char32_t> chars, const enc::EncodeOptions& opt,
                         const std::map<char32_t, ids::GlyphTree>* extra, const EmbeddingCache* cache) {
  if (cache && cache->valid_for(store_->version())) {
    Tensor rows({chars.size(), config_.embed_dim});
    const std::size_t unk = cache->index.at(ids::kUnk);
    for (std::size_t i = 0; i < chars.size(); ++i) {
      const auto it = cache->index.find(chars[i]);
      const auto src = cache->vectors.row(it == cache->index.end() ? unk : it->second);
      std::copy(src.begin(), src.end(), rows.row(i).begin());
    }
    return tape.constant(std::move(rows));
  }
  if (lookup_) {
    std::vector<std::size_t> rows;
    for (char32_t c : chars) rows.push_back(chars_.index(c));
    return ad::lookup(tape, *lookup_, rows);
  }
  std::vector<const ids::GlyphTree*> trees;
  for (char32_t c : chars) {
    if (chars_.contains(c)) {
      trees.push_back(&char_trees_[chars_.index(c)]);
    } else if (extra && extra->count(c)) {
      trees.push_back(&extra->at(c));
    } else {
      trees.push_back(&char_trees_[enc::TokenVocab::unk_index()]);
    }
  }
  return tree_enc_->encode(tape, trees, {opt.training, 0, opt.rng});
}

LmState LmModel::initial_state(std::size_t batch) const {
  LmState s;
  for (const auto& p : layers_) {
    s.h.push_back(Tensor::zeros(batch, p.hidden));
    s.c.push_back(Tensor::zeros(batch, p.hidden));
  }
  return s;
}

Var LmModel::step(ad::Tape& tape, Var x, std::vector<Var>& h, std::vector<Var>& c, const enc::EncodeOptions& opt) {
  x = dropout(x, config_.dropout_input, opt);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (l > 0) x = dropout(x, config_.dropout_hidden, opt);
    std::tie(h[l], c[l]) = enc::lstm_cell(layers_[l], x, h[l], c[l]);
    x = h[l];
  }
  x = dropout(x, config_.dropout_output, opt);
  return ad::add_row(ad::linear(x, tape.param(*out_w_)), tape.param(*out_b_));
}

EmbeddingCache build_cache(LmModel& model, const std::map<char32_t, ids::GlyphTree>* extra) {
  EmbeddingCache cache;
  std::vector<char32_t> chars = model.chars().tokens();
  if (extra) {
    for (const auto& [c, t] : *extra) {
      if (!model.chars().contains(c)) chars.push_back(c);
    }
  }
  ad::Tape tape;
  cache.vectors = model.embed_chars(tape, chars, {}, extra).value();
  for (std::size_t i = 0; i < chars.size(); ++i) cache.index[chars[i]] = i;
  cache.version = model.store().version();
  return cache;
}

std::vector<Real> lm_step(LmModel& model, LmState& state, char32_t c, const EmbeddingCache* cache) {
  ad::Tape tape;
  std::vector<Var> h, cs;
  for (std::size_t l = 0; l < state.h.size(); ++l) {
    h.push_back(tape.constant(state.h[l]));
    cs.push_back(tape.constant(state.c[l]));
  }
  const char32_t one[] = {c};
  const Var logits = model.step(tape, model.embed_chars(tape, one, {}, nullptr, cache), h, cs, {});
  for (std::size_t l = 0; l < h.size(); ++l) {
    state.h[l] = h[l].value();
    state.c[l] = cs[l].value();
  }
  const Tensor& p = ad::softmax(logits).value();
  return {p.begin(), p.end()};
}

nlohmann::json LmEval::to_json() const {
  return {{"BPC", bpc}, {"PPL", ppl}, {"predictions", predictions}, {"oov_inputs", oov_inputs},
          {"oov_composed", oov_composed}};
}

LmEval eval_lm(LmModel& model, std::span<const std::u32string> lines, const LmEvalOptions& opt) {
  if (lines.empty()) throw DataError("evaluation corpus is empty");
  const std::u32string s = corpus_stream(lines);
  LmEval out;
  std::map<char32_t, ids::GlyphTree> extra;
  for (std::size_t t = 0; t + 1 < s.size(); ++t) {
    const char32_t c = s[t];
    if (model.chars().contains(c)) continue;
    ++out.oov_inputs;
    if (model.config().input == LmInput::kHierarchical && opt.rules && opt.rules->contains(c)) {
      ++out.oov_composed;
      if (!extra.count(c)) extra.emplace(c, ids::decompose(c, *opt.rules));
    }
  }
  EmbeddingCache cache;
  const bool cached = opt.use_cache && model.config().input == LmInput::kHierarchical;
  if (cached) cache = build_cache(model, &extra);

  LmState state = model.initial_state(1);
  double nats = 0;
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  for (std::size_t begin = 0; begin + 1 < s.size(); begin += chunk) {
    const std::size_t end = std::min(begin + chunk, s.size() - 1);
    const std::u32string_view inputs(s.data() + begin, end - begin);
    const auto uniq = unique_chars(inputs);
    ad::Tape tape;
    const Var table = model.embed_chars(tape, uniq, {}, &extra, cached ? &cache : nullptr);
    std::vector<Var> h, c, logits;
    for (std::size_t l = 0; l < state.h.size(); ++l) {
      h.push_back(tape.constant(state.h[l]));
      c.push_back(tape.constant(state.c[l]));
    }
    std::vector<std::size_t> targets;
    const Var src[] = {table};
    for (std::size_t t = begin; t < end; ++t) {
      const ad::RowRef ref[] = {{0, position(uniq, s[t])}};
      logits.push_back(model.step(tape, ad::gather_rows(src, ref), h, c, {}));
      targets.push_back(model.chars().index(s[t + 1]));
    }
    nats += ad::cross_entropy(ad::concat_rows(logits), targets).value()[0];
    for (std::size_t l = 0; l < h.size(); ++l) {
      state.h[l] = h[l].value();
      state.c[l] = c[l].value();
    }
  }
  out.predictions = s.size() - 1;
  out.bpc = nats / kLn2 / static_cast<double>(out.predictions);
  out.ppl = std::exp2(out.bpc);
  return out;
}

LmTrainResult train_lm(const LmConfig& config, std::span<const std::u32string> train,
                       std::span<const std::u32string> valid, const ids::RuleTable& rules) {
  if (train.empty()) throw DataError("training corpus is empty");
  if (config.bptt == 0 || config.batch_size == 0) throw ValidationError("bptt and batch_size must be positive");
  LmModel model(config, train, rules);
  Rng rng(config.seed);
  rng.split(1);
  Rng drop_rng = rng.split(2);
  const enc::EncodeOptions opt{true, 0, &drop_rng};

  const std::u32string s = corpus_stream(train);
  const std::size_t B = std::min(config.batch_size, s.size() - 1);
  const std::size_t L = (s.size() - 1) / B;

  ad::AdamState adam;
  adam.config.lr = config.lr;
  ad::ParameterStore& store = model.store();
  store.zero_grad();

  LmTrainResult result;
  double best_valid = INFINITY;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    LmState state = model.initial_state(B);
    double nats = 0;
    for (std::size_t j = 0; j < L; j += config.bptt) {
      const std::size_t T = std::min(config.bptt, L - j);
      std::u32string inputs;
      for (std::size_t b = 0; b < B; ++b) inputs.append(s, b * L + j, T);
      const auto uniq = unique_chars(inputs);
      ad::Tape tape;
      const Var table = model.embed_chars(tape, uniq, opt);
      std::vector<Var> h, c, logits;
      for (std::size_t l = 0; l < state.h.size(); ++l) {
        h.push_back(tape.constant(state.h[l]));
        c.push_back(tape.constant(state.c[l]));
      }
      std::vector<std::size_t> targets;
      const Var src[] = {table};
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<ad::RowRef> refs;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t pos = b * L + j + t;
          refs.push_back({0, position(uniq, s[pos])});
          targets.push_back(model.chars().index(s[pos + 1]));
        }
        logits.push_back(model.step(tape, ad::gather_rows(src, refs), h, c, opt));
      }
      const Var total = ad::cross_entropy(ad::concat_rows(logits), targets);
      nats += total.value()[0];
      tape.backward(ad::scale(total, Real(1) / static_cast<Real>(targets.size())));
      if (config.clip > 0) store.clip_grad_norm(config.clip);
      ad::adam_step(store, adam);
      store.zero_grad();
      for (std::size_t l = 0; l < h.size(); ++l) {
        state.h[l] = h[l].value();
        state.c[l] = c[l].value();
      }
    }
    LmEpoch rec;
    rec.epoch = epoch;
    rec.train_bpc = nats / kLn2 / static_cast<double>(B * L);
    if (!valid.empty()) {
      LmEvalOptions eo;
      eo.rules = &rules;
      rec.valid_bpc = eval_lm(model, valid, eo).bpc;
    }
    result.history.push_back(rec);
    // Keep the best validation model, or the latest without validation data.
    if (!rec.valid_bpc || *rec.valid_bpc < best_valid) {
      if (rec.valid_bpc) best_valid = *rec.valid_bpc;
      result.checkpoint = model.checkpoint({{"epoch", epoch}});
    }
  }
  if (result.history.empty()) result.checkpoint = model.checkpoint({{"epoch", 0}});
  return result;
}

std::u32string generate(LmModel& model, std::u32string_view prefix, std::size_t n) {
  LmState state = model.initial_state(1);
  std::vector<Real> p = lm_step(model, state, kEos);
  for (char32_t c : prefix) p = lm_step(model, state, c);
  std::u32string out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    const char32_t c = model.chars().token(best);
    out += c;
    p = lm_step(model, state, c);
  }
  return out;
}

}  // namespace hce::lm
