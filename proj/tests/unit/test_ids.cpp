#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "hce/common/rng.hpp"
#include "hce/common/utf8.hpp"
#include "hce/ids/ids.hpp"

using namespace hce;
using namespace hce::ids;

namespace {

std::string data(const char* name) { return std::string(HCE_TEST_DATA_DIR) + "/" + name; }

std::u32string u(const char* s) { return utf8::decode(s); }

// Random strictly binary tree over a small alphabet.
GlyphTree random_tree(Rng& rng, int depth) {
  if (depth == 0 || rng.bernoulli(0.3)) {
    return GlyphTree::leaf(U'一' + static_cast<char32_t>(rng.uniform_index(50)));
  }
  const auto ops = binary_idcs();
  return GlyphTree::join(ops[rng.uniform_index(ops.size())], random_tree(rng, depth - 1),
                         random_tree(rng, depth - 1));
}

}  // namespace

TEST_CASE("parse_ids builds binary trees") {
  const GlyphTree t = parse_ids(u("⿰亻士"));
  CHECK(t == GlyphTree::join(kLeftToRight, GlyphTree::leaf(U'亻'), GlyphTree::leaf(U'士')));
  CHECK(parse_ids(u("一")) == GlyphTree::leaf(U'一'));
}

TEST_CASE("ternary operators right-nest") {
  const GlyphTree t = parse_ids(u("⿲ABC"));
  const GlyphTree want = GlyphTree::join(
      kLeftToRight, GlyphTree::leaf(U'A'),
      GlyphTree::join(kLeftToRight, GlyphTree::leaf(U'B'), GlyphTree::leaf(U'C')));
  CHECK(t == want);
  const GlyphTree v = parse_ids(u("⿳ABC"));
  CHECK(v.root_node().label == kAboveToBelow);
  CHECK(v.leaves() == U"ABC");
  for (const auto& n : v.nodes()) CHECK(n.label != kAboveMiddleBelow);

  // Two ternary nodes: n leaves, n-1 operators.
  const GlyphTree w = parse_ids(u("⿲A⿳BCDE"));
  CHECK(w.leaf_count() == 5);
  CHECK(w.node_count() - w.leaf_count() == 4);
  CHECK(w.leaves() == U"ABCDE");
}

TEST_CASE("binarize is the identity on binary input") {
  const IdsTree t = parse_prefix(u("⿰A⿱BC"));
  CHECK(binarize(t) == parse_ids(u("⿰A⿱BC")));
  IdsTree bad{kLeftToRight, {IdsTree{U'A', {}}}};
  CHECK_THROWS_AS(binarize(bad), StructureError);
}

TEST_CASE("parse errors carry token indices") {
  try {
    parse_ids(u("⿰A"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.token_index() == 0);  // the dangling operator
  }
  try {
    parse_ids(u("⿰ABC"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.token_index() == 3);
  }
  CHECK_THROWS_AS(parse_ids(U""), ParseError);
}

TEST_CASE("four-rule table expands 仕") {
  const RuleTable rules = load_rule_table(data("fig2_rules.txt"));
  CHECK(rules.rule_count() == 4);
  for (char32_t c : {U'人', U'丨', U'一'}) CHECK(rules.leaf_set().count(c) == 1);
  const GlyphTree t = decompose(U'仕', rules);
  CHECK(t.leaf_count() == 4);
  const std::u32string leaves = t.leaves();
  CHECK(std::set<char32_t>(leaves.begin(), leaves.end()) == std::set<char32_t>{U'人', U'丨', U'一'});
  CHECK(decompose(U'一', rules) == GlyphTree::leaf(U'一'));
}

TEST_CASE("empty and cyclic tables") {
  const RuleTable empty = load_rule_table(data("empty_rules.txt"));
  CHECK(empty.rule_count() == 0);
  CHECK(empty.leaf_set().empty());
  try {
    load_rule_table(data("cyclic_rules.txt"));
    FAIL("expected CycleError");
  } catch (const CycleError& e) {
    CHECK(e.cycle().find(U'X') != std::u32string::npos);
  }
  CHECK_THROWS_AS(load_rule_table(data("missing.txt")), IoError);
}

TEST_CASE("seven-node tree with unification") {
  RuleTable rules = load_rule_table(data("fig1_rules.txt"));
  rules.set_unification(load_unification_map(data("fig1_unify.txt")));
  const GlyphTree t = decompose(U'蒸', rules);
  REQUIRE(t.node_count() == 7);
  const auto bfs = t.breadth_first();
  std::u32string labels;
  for (auto i : bfs) labels += t.node(i).label;
  CHECK(labels == u("⿱艹⿱⿱火氶一"));
  CHECK(linearize(t, LinearOrder::kPreOrder).size() == 7);
  CHECK(linearize(t, LinearOrder::kPreOrder)[0] == kAboveToBelow);
}

TEST_CASE("unknown characters become UNK") {
  const RuleTable rules = load_rule_table(data("fig2_rules.txt"));
  DecomposeStats stats;
  CHECK(decompose(U'龘', rules, kDefaultMaxDepth, &stats) == GlyphTree::leaf(kUnk));
  CHECK(stats.unk == 1);
}

TEST_CASE("depth limit raises an expansion error") {
  const RuleTable rules = load_rule_table(data("fig2_rules.txt"));
  CHECK_THROWS_AS(decompose(U'仕', rules, 1), ExpansionError);
  CHECK_NOTHROW(decompose(U'仕', rules, 3));
}

TEST_CASE("linearization orders") {
  const GlyphTree t = parse_ids(u("⿰人士"));
  CHECK(linearize(t, LinearOrder::kPreOrder) == u("⿰人士"));
  CHECK(linearize(t, LinearOrder::kPostOrder) == u("人士⿰"));
  CHECK(linearize(t, LinearOrder::kInOrder) == u("人⿰士"));
  for (auto o : {LinearOrder::kPreOrder, LinearOrder::kPostOrder, LinearOrder::kInOrder}) {
    CHECK(linearize(GlyphTree::leaf(U'一'), o) == U"一");
    CHECK(parse_linear_order(to_string(o)) == o);
  }
  CHECK(strip_operators(u("⿰人士")) == u("人士"));
  CHECK(strip_operators(u("人士")) == u("人士"));
}

TEST_CASE("tree properties on random trees") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const GlyphTree t = random_tree(rng, 6);
    const std::size_t L = t.leaf_count();
    CHECK(t.node_count() == 2 * L - 1);
    for (auto o : {LinearOrder::kPreOrder, LinearOrder::kPostOrder, LinearOrder::kInOrder}) {
      const auto seq = linearize(t, o);
      CHECK(seq.size() == t.node_count());
      CHECK(strip_operators(seq) == t.leaves());
    }
    CHECK(from_preorder(linearize(t, LinearOrder::kPreOrder)) == t);
    for (const auto& n : t.nodes()) {
      if (!n.is_leaf()) {
        CHECK(is_binary_idc(n.label));
        CHECK(n.left < n.right);
      }
    }
  }
}

TEST_CASE("decompose is deterministic and summary counts rules") {
  const RuleTable rules = load_rule_table(data("fig2_rules.txt"));
  CHECK(decompose(U'仕', rules) == decompose(U'仕', rules));
  const RuleTableReport r = summarize(rules);
  CHECK(r.rule_count == 4);
  CHECK(r.expansion_failures == 0);
  CHECK(r.terminal_count == 3);
}

TEST_CASE("bracket annotations and alternatives are ignored") {
  std::istringstream in(
      "U+4ED5\t仕\t⿰亻士[GTJKV]\t⿰人士[X]\n"
      "U+4E00\t一\t一\n"
      "garbage\n");
  const RuleTable rules = rule_table_from_stream(in);
  REQUIRE(rules.find(U'仕') != nullptr);
  CHECK(rules.find(U'仕')->parsed == parse_ids(u("⿰亻士")));
  CHECK(rules.is_terminal(U'一'));
  CHECK(rules.malformed_lines() == 1);
}

TEST_CASE("duplicate rules keep the first") {
  std::istringstream in("U+4ED5\t仕\t⿰亻士\nU+4ED5\t仕\t⿱亻士\n");
  const RuleTable rules = rule_table_from_stream(in);
  CHECK(rules.duplicate_lines() == 1);
  CHECK(rules.find(U'仕')->parsed.root_node().label == kLeftToRight);
  CHECK_FALSE(rules.warnings().empty());
}
