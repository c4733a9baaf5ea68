#include <doctest.h>

#include <cmath>
#include <map>

#include "hce/ad/optim.hpp"
#include "hce/lm/lm.hpp"

using namespace hce;
using namespace hce::lm;
using ad::Tensor;
using ad::Var;

namespace {

const std::string kData = HCE_TEST_DATA_DIR;

ids::RuleTable toy_rules() { return ids::load_rule_table(kData + "/toy_rules.txt"); }

std::vector<std::u32string> toy_corpus() { return read_corpus(kData + "/toy_corpus.txt"); }

LmConfig small(LmInput input) {
  LmConfig c;
  c.input = input;
  c.embed_dim = 12;
  c.token_dim = 8;
  c.layers = {24};
  c.dropout_input = c.dropout_hidden = c.dropout_output = 0;
  c.lr = 1e-2;
  c.epochs = 2;
  c.batch_size = 4;
  c.bptt = 10;
  c.seed = 1;
  return c;
}

double unigram_entropy(const std::u32string& stream) {
  std::map<char32_t, double> counts;
  for (std::size_t t = 1; t < stream.size(); ++t) counts[stream[t]] += 1;
  const double n = static_cast<double>(stream.size() - 1);
  double h = 0;
  for (const auto& [c, k] : counts) h -= k / n * std::log2(k / n);
  return h;
}

}  // namespace

TEST_CASE("corpus stream frames every line with end-of-sentence symbols") {
  const std::vector<std::u32string> lines{U"ab", U"c"};
  CHECK(corpus_stream(lines) == U"\nab\nc\n");
  CHECK_THROWS_AS(read_corpus(kData + "/no_such_corpus.txt"), IoError);
  const auto corpus = toy_corpus();
  CHECK(corpus.size() == 82);
}

TEST_CASE("input trees use decompositions when known") {
  const auto rules = toy_rules();
  CHECK(input_tree(U'好', rules).leaf_count() == 2);
  CHECK(input_tree(U'的', rules).node_count() == 1);
  CHECK(input_tree(kEos, rules).root_node().label == kEos);
}

TEST_CASE("vocabulary holds UNK, EOS and training characters") {
  const std::vector<std::u32string> lines{U"abba"};
  LmModel m(small(LmInput::kLookup), lines, ids::RuleTable{});
  CHECK(m.vocab_size() == 4);
  CHECK(m.chars().token(0) == ids::kUnk);
  CHECK(m.chars().token(1) == kEos);
}

TEST_CASE("zero output weights give a uniform model with BPC log2 |V|") {
  for (LmInput input : {LmInput::kLookup, LmInput::kHierarchical}) {
    const std::vector<std::u32string> lines{U"abba", U"ab"};
    LmModel m(small(input), lines, ids::RuleTable{});
    m.output_weight().value.fill(0);
    m.output_bias()->value.fill(0);
    m.store().bump_version();
    LmState state = m.initial_state(1);
    const auto p = lm_step(m, state, U'a');
    double s = 0;
    for (double v : p) {
      CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
    const auto e = eval_lm(m, lines);
    CHECK(std::abs(e.bpc - 2.0) < 1e-14);
    CHECK(std::abs(e.ppl - 4.0) < 1e-13);
    CHECK(e.ppl == std::exp2(e.bpc));
  }
}

TEST_CASE("distributions sum to one for a random model") {
  const auto corpus = toy_corpus();
  LmModel m(small(LmInput::kHierarchical), corpus, toy_rules());
  LmState state = m.initial_state(1);
  for (char32_t c : std::u32string(U"今天我")) {
    const auto p = lm_step(m, state, c);
    double s = 0;
    for (double v : p) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("cache entries equal a fresh forward and go stale on updates") {
  const auto corpus = toy_corpus();
  LmModel m(small(LmInput::kHierarchical), corpus, toy_rules());
  const EmbeddingCache cache = build_cache(m);
  CHECK(cache.valid_for(m.store().version()));
  const std::u32string probe = U"好花他的";
  for (char32_t c : probe) {
    ad::Tape tape;
    const char32_t one[] = {c};
    const Tensor fresh = m.embed_chars(tape, one, {}).value();
    const auto row = cache.vectors.row(cache.index.at(c));
    for (std::size_t k = 0; k < fresh.size(); ++k) CHECK(std::abs(fresh[k] - row[k]) < 1e-12);
  }
  ad::AdamState adam;
  ad::adam_step(m.store(), adam);
  CHECK_FALSE(cache.valid_for(m.store().version()));
}

TEST_CASE("cached and uncached evaluation agree") {
  const auto corpus = toy_corpus();
  const auto rules = toy_rules();
  auto cfg = small(LmInput::kHierarchical);
  cfg.epochs = 1;
  const auto run = train_lm(cfg, corpus, {}, rules);
  LmModel m(run.checkpoint);
  const std::vector<std::u32string> test{U"今天你在山上讀書嗎？", U"哥哥買花了。"};
  LmEvalOptions with, without;
  with.rules = without.rules = &rules;
  without.use_cache = false;
  without.chunk = 7;
  const auto a = eval_lm(m, test, with);
  const auto b = eval_lm(m, test, without);
  CHECK(std::abs(a.bpc - b.bpc) < 1e-9);
  CHECK(a.predictions == b.predictions);
}

TEST_CASE("out-of-vocabulary inputs are composed only for hierarchical input") {
  const std::vector<std::u32string> train{U"他好"};
  const std::vector<std::u32string> test{U"她你X"};
  const auto rules = toy_rules();
  LmEvalOptions opt;
  opt.rules = &rules;
  LmModel h(small(LmInput::kHierarchical), train, rules);
  const auto eh = eval_lm(h, test, opt);
  CHECK(eh.oov_inputs == 3);
  CHECK(eh.oov_composed == 2);
  LmModel l(small(LmInput::kLookup), train, rules);
  const auto el = eval_lm(l, test, opt);
  CHECK(el.oov_inputs == 3);
  CHECK(el.oov_composed == 0);
  CHECK_THROWS_AS(eval_lm(l, std::vector<std::u32string>{}), DataError);
}

TEST_CASE("a step only updates embedding rows present in the batch") {
  const auto rules = toy_rules();
  const std::vector<std::u32string> train{U"他好你明"};
  for (LmInput input : {LmInput::kLookup, LmInput::kHierarchical}) {
    LmModel m(small(input), train, rules);
    ad::Parameter& table = input == LmInput::kLookup ? *m.lookup_table() : m.tree_encoder()->table();
    const Tensor before = table.value;
    ad::Tape tape;
    const char32_t used[] = {U'他'};
    const Var x = m.embed_chars(tape, used, {});
    auto st = m.initial_state(1);
    std::vector<Var> h{tape.constant(st.h[0])}, c{tape.constant(st.c[0])};
    const std::size_t target[] = {2};
    tape.backward(ad::cross_entropy(m.step(tape, x, h, c, {}), target));
    ad::AdamState adam;
    adam.config.lr = 0.1;
    ad::adam_step(m.store(), adam);
    std::set<std::size_t> changed;
    for (std::size_t r = 0; r < before.rows(); ++r) {
      for (std::size_t k = 0; k < before.cols(); ++k) {
        if (before(r, k) != table.value(r, k)) changed.insert(r);
      }
    }
    std::set<std::size_t> expected;
    if (input == LmInput::kLookup) {
      expected.insert(m.chars().index(U'他'));
    } else {
      const auto& v = m.tree_encoder()->vocab();
      expected = {v.index(U'⿰'), v.index(U'亻'), v.index(U'也')};
    }
    CHECK(changed == expected);
  }
}

TEST_CASE("training is deterministic under a seed") {
  const std::vector<std::u32string> train{U"今天我在家裡看書。", U"明天你在學校吃魚了。"};
  auto cfg = small(LmInput::kLookup);
  cfg.dropout_input = 0.1;
  const auto a = train_lm(cfg, train, {}, ids::RuleTable{});
  const auto b = train_lm(cfg, train, {}, ids::RuleTable{});
  CHECK(a.history == b.history);
  for (const auto& [name, t] : a.checkpoint.tensors) CHECK(ad::max_abs_diff(t, b.checkpoint.tensors.at(name)) == 0);
  cfg.seed = 2;
  const auto d = train_lm(cfg, train, {}, ids::RuleTable{});
  CHECK(ad::max_abs_diff(a.checkpoint.tensors.at("lm.out.W"), d.checkpoint.tensors.at("lm.out.W")) > 0);
  CHECK_THROWS_AS(train_lm(cfg, std::vector<std::u32string>{}, {}, ids::RuleTable{}), DataError);
}

TEST_CASE("checkpoint round trip preserves evaluation") {
  const auto corpus = toy_corpus();
  const auto rules = toy_rules();
  auto cfg = small(LmInput::kHierarchical);
  cfg.epochs = 1;
  LmModel m(cfg, corpus, rules);
  LmModel back(m.checkpoint());
  const std::vector<std::u32string> test{U"他好。"};
  CHECK(eval_lm(m, test).bpc == eval_lm(back, test).bpc);
}

TEST_CASE("toy corpus training beats the unigram entropy") {
  const auto corpus = toy_corpus();
  const auto rules = toy_rules();
  for (LmInput input : {LmInput::kLookup, LmInput::kHierarchical}) {
    auto cfg = small(input);
    cfg.layers = {48};
    cfg.embed_dim = 16;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.bptt = 20;
    cfg.lr = 1e-2;
    const auto run = train_lm(cfg, corpus, {}, rules);
    LmModel m(run.checkpoint);
    const double bpc = eval_lm(m, corpus).bpc;
    CHECK(std::isfinite(bpc));
    CHECK(bpc < unigram_entropy(corpus_stream(corpus)));
    CHECK(run.history[9].train_bpc < run.history[0].train_bpc);
  }
}

TEST_CASE("greedy decoding reproduces a memorized line") {
  const std::vector<std::u32string> train{U"昨天他在市場喜歡書。今天學生在家看花"};
  auto cfg = small(LmInput::kLookup);
  cfg.layers = {48};
  cfg.batch_size = 1;
  cfg.bptt = 21;
  cfg.epochs = 300;
  cfg.lr = 1e-2;
  const auto run = train_lm(cfg, train, {}, ids::RuleTable{});
  LmModel m(run.checkpoint);
  CHECK(generate(m, U"", train[0].size()) == train[0]);
}
