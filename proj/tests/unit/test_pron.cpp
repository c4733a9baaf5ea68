#include <doctest.h>

#include <cmath>
#include <sstream>

#include "hce/ad/gradcheck.hpp"
#include "hce/pron/train.hpp"
#include "oracles.hpp"
#include "toy_data.hpp"

using namespace hce;
using namespace hce::pron;
using ad::Tensor;
using ad::Var;
using phono::PronEntry;
using phono::Syllable;

namespace {

std::vector<PronEntry> entries(std::initializer_list<Syllable> prons) {
  std::vector<PronEntry> out;
  char32_t c = 0xE000;
  for (const auto& s : prons) out.push_back({c++, s, phono::ScriptClass::kShared});
  return out;
}

Inventories small_inventories() {
  return Inventories::from_entries(entries({{"b", "a", "ng"}, {"f", "ui", "#"}, {"j", "au", "#"}, {"#", "i", "k"}}));
}

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (auto& v : t) v = rng.uniform(-1, 1);
  return t;
}

void randomize(ad::ParameterStore& store, Rng& rng) {
  for (auto* p : store.all()) {
    for (auto& v : p->value) v = rng.uniform(-1, 1);
  }
}

RunConfig toy_config(std::size_t hidden = 16) {
  RunConfig c;
  c.model.encoder.input_dim = 8;
  c.model.encoder.hidden = hidden;
  c.lr = 1e-2;
  c.epochs = 5;
  c.batch_size = 8;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("inventories always contain the null marker and are sorted") {
  const auto inv = Inventories::from_entries(entries({{"z", "i", "ng"}}));
  CHECK(inv.size(Unit::kOnset) == 2);
  CHECK(inv.size(Unit::kNucleus) == 1);
  CHECK(inv.size(Unit::kCoda) == 2);
  CHECK(inv.label(Unit::kOnset, 0) == "#");
  CHECK(inv.index(Unit::kCoda, "ng").has_value());
  CHECK_FALSE(inv.index(Unit::kCoda, "k").has_value());
  const auto back = Inventories::from_json(inv.to_json());
  CHECK(back.to_json() == inv.to_json());
}

TEST_CASE("output order parsing and chains") {
  CHECK(parse_output_order("cd-nu-on") == OutputOrder::kCodaFirst);
  CHECK(parse_output_order("on-nu-cd") == OutputOrder::kOnsetFirst);
  CHECK_THROWS_AS(parse_output_order("nu"), ValidationError);
  CHECK(chain(OutputOrder::kCodaFirst)[0] == Unit::kCoda);
  CHECK(chain(OutputOrder::kOnsetFirst)[0] == Unit::kOnset);
}

TEST_CASE("head distributions match the scalar oracle and sum to one") {
  Rng rng(11);
  const auto inv = small_inventories();
  for (OutputOrder order : {OutputOrder::kCodaFirst, OutputOrder::kOnsetFirst}) {
    ad::ParameterStore store;
    PronHead head(store, "head", 6, inv, order, true, &rng);
    randomize(store, rng);
    const Tensor h = random_tensor(3, 6, rng);
    ad::Tape tape;
    const HeadOutput out = head.forward(tape.constant(h));
    for (std::size_t r = 0; r < 3; ++r) {
      const auto expected = oracle::pron_head(head, oracle::row(h, r));
      for (int u = 0; u < 3; ++u) {
        const auto got = oracle::row(out.probs[u].value(), r);
        CHECK(oracle::max_diff(got, expected[u]) < 1e-12);
        double s = 0;
        for (double v : got) s += v;
        CHECK(std::abs(s - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("head input width mismatch is a shape error") {
  Rng rng(1);
  ad::ParameterStore store;
  PronHead head(store, "head", 6, small_inventories(), OutputOrder::kCodaFirst, true, &rng);
  ad::Tape tape;
  CHECK_THROWS_AS(head.forward(tape.constant(Tensor({1, 5}))), ShapeError);
}

TEST_CASE("zero weights give uniform distributions and loss ln a + ln b + ln c") {
  Rng rng(2);
  const auto inv = small_inventories();
  ad::ParameterStore store;
  PronHead head(store, "head", 4, inv, OutputOrder::kCodaFirst, true, &rng);
  for (auto* p : store.all()) p->value.fill(0);
  ad::Tape tape;
  const HeadOutput out = head.forward(tape.constant(random_tensor(1, 4, rng)));
  for (Unit u : {Unit::kOnset, Unit::kNucleus, Unit::kCoda}) {
    for (double v : out.probs[static_cast<int>(u)].value()) {
      CHECK(v == doctest::Approx(1.0 / static_cast<double>(inv.size(u))).epsilon(1e-14));
    }
  }
  const auto t = targets_of(inv, {"f", "ui", "#"});
  const Var loss = pron_loss(out, {{{t[0]}, {t[1]}, {t[2]}}});
  const double expected = std::log(inv.size(Unit::kOnset)) + std::log(inv.size(Unit::kNucleus)) +
                          std::log(inv.size(Unit::kCoda));
  CHECK(loss.value()[0] == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("loss equals direct negative log recomputation") {
  Rng rng(5);
  const auto inv = small_inventories();
  ad::ParameterStore store;
  PronHead head(store, "head", 5, inv, OutputOrder::kCodaFirst, true, &rng);
  randomize(store, rng);
  const Tensor h = random_tensor(2, 5, rng);
  ad::Tape tape;
  const HeadOutput out = head.forward(tape.constant(h));
  const std::array<Syllable, 2> gold = {Syllable{"b", "a", "ng"}, Syllable{"#", "i", "k"}};
  std::array<std::vector<std::size_t>, 3> tgt;
  double direct = 0;
  for (std::size_t r = 0; r < 2; ++r) {
    const auto t = targets_of(inv, gold[r]);
    const auto probs = oracle::pron_head(head, oracle::row(h, r));
    for (int u = 0; u < 3; ++u) {
      tgt[u].push_back(t[u]);
      direct -= std::log(probs[u][t[u]]);
    }
  }
  CHECK(pron_loss(out, tgt).value()[0] == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("perfect predictions give zero loss") {
  Rng rng(6);
  const auto inv = small_inventories();
  ad::ParameterStore store;
  PronHead head(store, "head", 3, inv, OutputOrder::kCodaFirst, true, &rng);
  for (auto* p : store.all()) p->value.fill(0);
  const auto t = targets_of(inv, {"j", "au", "#"});
  for (Unit u : {Unit::kOnset, Unit::kNucleus, Unit::kCoda}) head.bias(u)->value[t[static_cast<int>(u)]] = 800;
  ad::Tape tape;
  const HeadOutput out = head.forward(tape.constant(Tensor({1, 3})));
  CHECK(pron_loss(out, {{{t[0]}, {t[1]}, {t[2]}}}).value()[0] == doctest::Approx(0.0));
  CHECK(decode(out, inv, 0) == Syllable{"j", "au", "#"});
}

TEST_CASE("out-of-inventory target is a data error") {
  CHECK_THROWS_AS(targets_of(small_inventories(), {"kw", "a", "#"}), DataError);
}

TEST_CASE("head gradients match finite differences") {
  Rng rng(7);
  const auto inv = small_inventories();
  for (int trial = 0; trial < 5; ++trial) {
    ad::ParameterStore store;
    PronHead head(store, "head", 4, inv, trial % 2 ? OutputOrder::kOnsetFirst : OutputOrder::kCodaFirst, true,
                  &rng);
    randomize(store, rng);
    const Tensor h = random_tensor(2, 4, rng);
    const auto t0 = targets_of(inv, {"b", "a", "ng"});
    const auto t1 = targets_of(inv, {"f", "ui", "#"});
    const std::array<std::vector<std::size_t>, 3> tgt{{{t0[0], t1[0]}, {t0[1], t1[1]}, {t0[2], t1[2]}}};
    CHECK(ad::check_gradient(store, [&](ad::Tape& tape) { return pron_loss(head.forward(tape.constant(h)), tgt); }) <
          1e-6);
    CHECK(ad::check_gradient([&](ad::Tape&, Var x) { return pron_loss(head.forward(x), tgt); }, h) < 1e-6);
  }
}

TEST_CASE("decoding is invariant to positive scaling of a classifier") {
  Rng rng(8);
  const auto inv = small_inventories();
  ad::ParameterStore store;
  PronHead head(store, "head", 4, inv, OutputOrder::kCodaFirst, false, &rng);
  randomize(store, rng);
  const Tensor h = random_tensor(6, 4, rng);
  auto decode_all = [&] {
    ad::Tape tape;
    const auto out = head.forward(tape.constant(h));
    std::vector<std::string> d;
    for (std::size_t r = 0; r < 6; ++r) d.push_back(decode(out, inv, r).spaced());
    return d;
  };
  // Only the last classifier in the chain feeds nothing downstream.
  const auto before = decode_all();
  for (auto& v : head.weight(Unit::kOnset).value) v *= 3.7;
  CHECK(decode_all() == before);
}

TEST_CASE("score counts token and string errors") {
  const std::vector<Syllable> gold = {{"f", "ui", "#"}, {"j", "au", "#"}};
  SUBCASE("one wrong phoneme in two examples") {
    const std::vector<Syllable> pred = {{"f", "ui", "#"}, {"j", "a", "#"}};
    const auto r = score(pred, gold);
    CHECK(r.ter == doctest::Approx(100.0 / 6.0));
    CHECK(r.ter == doctest::Approx(16.67).epsilon(1e-3));
    CHECK(r.ser == doctest::Approx(50.0));
    CHECK(r.unit_rates[1] == doctest::Approx(50.0));
    CHECK(r.unit_rates[0] == 0);
  }
  SUBCASE("all correct") {
    const auto r = score(gold, gold);
    CHECK(r.ter == 0);
    CHECK(r.ser == 0);
  }
  SUBCASE("identities on random predictions") {
    Rng rng(9);
    const char* on[] = {"f", "j", "#"};
    const char* nu[] = {"ui", "au", "a"};
    const char* cd[] = {"#", "ng"};
    std::vector<Syllable> p, g;
    for (int i = 0; i < 200; ++i) {
      p.push_back({on[rng.uniform_index(3)], nu[rng.uniform_index(3)], cd[rng.uniform_index(2)]});
      g.push_back({on[rng.uniform_index(3)], nu[rng.uniform_index(3)], cd[rng.uniform_index(2)]});
    }
    const auto r = score(p, g);
    CHECK(r.ter == doctest::Approx((r.unit_rates[0] + r.unit_rates[1] + r.unit_rates[2]) / 3));
    for (double u : r.unit_rates) CHECK(r.ser >= u);
    CHECK(r.ser >= r.ter / 3);
  }
  CHECK_THROWS_AS(score(std::vector<Syllable>(1), gold), ContractError);
}

TEST_CASE("report csv header and row labels") {
  RunConfig c;
  c.model.encoder.kind = enc::EncoderKind::kLstm;
  c.model.encoder.order = ids::LinearOrder::kPostOrder;
  c.model.encoder.op_inputs = false;
  c.scenario = 2;
  MatrixRow row = row_labels(c);
  CHECK(row.model == "LSTM");
  CHECK(row.order == "post");
  CHECK(row.ablation == "no-ops");
  std::ostringstream os;
  write_report_csv(os, std::vector<MatrixRow>{row});
  CHECK(os.str().rfind("model,scenario,order,ablation,SER,TER,onset,nucleus,coda\nLSTM,2,post,no-ops,", 0) == 0);
}

TEST_CASE("training rejects empty partitions") {
  auto toy = oracle::toy_pron(8, 1);
  auto split = toy.split;
  split.validation.clear();
  CHECK_THROWS_AS(train(toy_config(), split, toy.rules), DataError);
  split = toy.split;
  split.train.clear();
  CHECK_THROWS_AS(train(toy_config(), split, toy.rules), DataError);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto toy = oracle::toy_pron(16, 2);
  RunConfig c = toy_config();
  c.lr = 0;
  c.epochs = 1;
  c.dropout = 0.2;
  const auto run = train(c, toy.split, toy.rules);
  Rng rng(c.seed);
  Rng init = rng.split(1);
  const auto trees = decompose_entries(toy.split.train, toy.rules);
  PronModel fresh(c.model, vocab_from_trees(trees), Inventories::from_entries(toy.split.train), init);
  const auto initial = fresh.checkpoint();
  REQUIRE(run.best.tensors.size() == initial.tensors.size());
  for (const auto& [name, t] : initial.tensors) CHECK(ad::max_abs_diff(t, run.best.tensors.at(name)) == 0);
  CHECK(untrained_ter(c, toy.split, toy.rules) == run.best_val_ter);
}

TEST_CASE("training is deterministic under a seed") {
  auto toy = oracle::toy_pron(24, 3);
  RunConfig c = toy_config();
  c.dropout = 0.1;
  const auto a = train(c, toy.split, toy.rules);
  const auto b = train(c, toy.split, toy.rules);
  CHECK(a.history == b.history);
  for (const auto& [name, t] : a.best.tensors) CHECK(ad::max_abs_diff(t, b.best.tensors.at(name)) == 0);
  c.seed = 4;
  const auto d = train(c, toy.split, toy.rules);
  CHECK(d.history != a.history);
}

TEST_CASE("loss decreases and evaluation is pure on a toy set") {
  auto toy = oracle::toy_pron(32, 4);
  RunConfig c = toy_config(24);
  c.epochs = 10;
  const auto run = train(c, toy.split, toy.rules);
  CHECK(run.history.back().train_loss < run.history.front().train_loss);
  const auto r1 = evaluate(run.best, toy.split.test, toy.rules);
  const auto r2 = evaluate(run.best, toy.split.test, toy.rules);
  CHECK(r1.ter == r2.ter);
  CHECK(r1.ser == r2.ser);
  CHECK(r1.ter == doctest::Approx(run.best_val_ter));
}

TEST_CASE("treeLSTM memorizes a small toy set") {
  auto toy = oracle::toy_pron(16, 5);
  RunConfig c = toy_config(32);
  c.epochs = 300;
  c.lr = 2e-2;
  TrainOptions opt;
  opt.stop_on_zero_train_ter = true;
  const auto run = train(c, toy.split, toy.rules, opt);
  REQUIRE(run.history.back().train_ter.has_value());
  CHECK(*run.history.back().train_ter == 0);
}

TEST_CASE("sequence encoders train through the same pipeline") {
  auto toy = oracle::toy_pron(12, 6);
  for (auto kind : {enc::EncoderKind::kLstm, enc::EncoderKind::kBiLstm, enc::EncoderKind::kCnn}) {
    RunConfig c = toy_config(8);
    c.model.encoder.kind = kind;
    c.model.encoder.cnn_filters = 4;
    c.model.output_order = OutputOrder::kOnsetFirst;
    c.epochs = 2;
    const auto run = train(c, toy.split, toy.rules);
    CHECK(run.history.size() == 2);
    PronModel m(run.best);
    CHECK(m.config().encoder.kind == kind);
    CHECK(evaluate(m, toy.split.test, toy.rules).ter == doctest::Approx(run.best_val_ter));
  }
}

TEST_CASE("patience stops early") {
  auto toy = oracle::toy_pron(8, 7);
  RunConfig c = toy_config();
  c.lr = 0;
  c.epochs = 50;
  c.patience = 3;
  CHECK(train(c, toy.split, toy.rules).history.size() == 4);
}

TEST_CASE("grid search selection rules") {
  auto toy = oracle::toy_pron(16, 8);
  RunConfig c = toy_config();
  c.epochs = 8;
  SUBCASE("single cell") {
    const auto g = grid_search(c, toy.split, toy.rules, {{1e-2}, {0.1}});
    CHECK(g.cells.size() == 1);
    CHECK(g.best_config.lr == 1e-2);
    CHECK(g.best_config.dropout == 0.1);
  }
  SUBCASE("zero learning rate never beats an improving cell") {
    const auto g = grid_search(c, toy.split, toy.rules, {{0.0, 2e-2}, {0.0}});
    CHECK(g.cells[0].val_ter == doctest::Approx(g.untrained_ter));
    if (g.cells[1].val_ter < g.untrained_ter) CHECK(g.best_config.lr == 2e-2);
  }
  SUBCASE("ties go to the lower learning rate then lower dropout") {
    const auto g = grid_search(c, toy.split, toy.rules, {{0.0, 0.0}, {0.3, 0.0}});
    CHECK(g.best_config.dropout == 0.0);
  }
  CHECK_THROWS_AS(grid_search(c, toy.split, toy.rules, {{}, {0.0}}), ValidationError);
  CHECK(Grid::standard().lr.size() == 6);
  CHECK(Grid::standard().dropout.size() == 6);
}

TEST_CASE("matrix emits one row per cell") {
  auto toy = oracle::toy_pron(8, 9);
  RunConfig a = toy_config();
  a.epochs = 2;
  RunConfig b = a;
  b.model.encoder.op_inputs = false;
  const std::vector<RunConfig> cells{a, b};
  const auto rows = run_matrix(
      cells, [&](int) -> const phono::DatasetSplit& { return toy.split; }, toy.rules, std::nullopt);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].ablation == "none");
  CHECK(rows[1].ablation == "no-ops");
  CHECK(rows[0].order == "tree");
}
