#include "hce/ids/ids.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "hce/common/utf8.hpp"

namespace hce::ids {

namespace {

constexpr char32_t kBinaryIdcs[] = {0x2FF0, 0x2FF1, 0x2FF4, 0x2FF5, 0x2FF6,
                                    0x2FF7, 0x2FF8, 0x2FF9, 0x2FFA, 0x2FFB};

// IDCs added after U+2FFB plus U+31EF. They are outside the supported range.
bool is_unsupported_idc(char32_t c) { return (c >= 0x2FFC && c <= 0x2FFF) || c == 0x31EF; }

int arity(char32_t c) {
  if (is_ternary_idc(c)) return 3;
  if (is_idc(c)) return 2;
  return 0;
}

}  // namespace

std::span<const char32_t> binary_idcs() { return kBinaryIdcs; }

// ---------------------------------------------------------------------------
// GlyphTree

GlyphTree GlyphTree::leaf(char32_t label) {
  GlyphTree t;
  t.nodes_.push_back(Node{label, -1, -1});
  return t;
}

GlyphTree GlyphTree::join(char32_t idc, const GlyphTree& left, const GlyphTree& right) {
  if (!is_binary_idc(idc)) {
    throw StructureError("inner node label " + utf8::to_ucs_notation(idc) + " is not a binary IDC");
  }
  if (left.empty() || right.empty()) throw StructureError("cannot join an empty subtree");
  GlyphTree t;
  t.nodes_.reserve(left.nodes_.size() + right.nodes_.size() + 1);
  t.nodes_ = left.nodes_;
  const auto offset = static_cast<std::int32_t>(left.nodes_.size());
  for (Node n : right.nodes_) {
    if (!n.is_leaf()) {
      n.left += offset;
      n.right += offset;
    }
    t.nodes_.push_back(n);
  }
  t.nodes_.push_back(Node{idc, offset - 1, static_cast<std::int32_t>(t.nodes_.size()) - 1});
  return t;
}

std::size_t GlyphTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
}

std::u32string GlyphTree::leaves() const {
  // Post-order visits leaves left to right.
  std::u32string out;
  for (const Node& n : nodes_) {
    if (n.is_leaf()) out.push_back(n.label);
  }
  return out;
}

int GlyphTree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (!n.is_leaf()) d[i] = 1 + std::max(d[n.left], d[n.right]);
  }
  return nodes_.empty() ? 0 : d.back();
}

std::vector<std::size_t> GlyphTree::breadth_first() const {
  std::vector<std::size_t> order;
  if (nodes_.empty()) return order;
  order.push_back(root());
  for (std::size_t head = 0; head < order.size(); ++head) {
    const Node& n = nodes_[order[head]];
    if (!n.is_leaf()) {
      order.push_back(static_cast<std::size_t>(n.left));
      order.push_back(static_cast<std::size_t>(n.right));
    }
  }
  return order;
}

GlyphTree GlyphTree::subtree(std::size_t i) const {
  const Node& n = nodes_.at(i);
  if (n.is_leaf()) return leaf(n.label);
  return join(n.label, subtree(n.left), subtree(n.right));
}

std::string GlyphTree::to_bracketed() const {
  std::function<std::string(std::size_t)> rec = [&](std::size_t i) {
    const Node& n = nodes_[i];
    if (n.is_leaf()) return utf8::encode(n.label);
    return utf8::encode(n.label) + "(" + rec(n.left) + "," + rec(n.right) + ")";
  };
  return nodes_.empty() ? std::string{} : rec(root());
}

std::string GlyphTree::to_indented() const {
  std::string out;
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int level) {
    const Node& n = nodes_[i];
    out.append(static_cast<std::size_t>(level) * 2, ' ');
    out += utf8::encode(n.label);
    out += '\n';
    if (!n.is_leaf()) {
      rec(n.left, level + 1);
      rec(n.right, level + 1);
    }
  };
  if (!nodes_.empty()) rec(root(), 0);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

IdsTree parse_node(std::u32string_view expr, std::size_t& pos) {
  if (pos >= expr.size()) throw ParseError("unexpected end of expression", pos);
  const std::size_t at = pos;
  const char32_t tok = expr[pos++];
  if (is_unsupported_idc(tok)) {
    throw ParseError("unsupported description character " + utf8::to_ucs_notation(tok) +
                         " at token " + std::to_string(at),
                     at);
  }
  IdsTree node{tok, {}};
  const int n = arity(tok);
  for (int k = 0; k < n; ++k) {
    if (pos >= expr.size()) {
      throw ParseError("dangling operator " + utf8::encode(tok) + " at token " + std::to_string(at) +
                           ": expected " + std::to_string(n) + " operands, found " + std::to_string(k),
                       at);
    }
    node.children.push_back(parse_node(expr, pos));
  }
  return node;
}

}  // namespace

IdsTree parse_prefix(std::u32string_view expr) {
  if (expr.empty()) throw ParseError("empty expression", 0);
  std::size_t pos = 0;
  IdsTree tree = parse_node(expr, pos);
  if (pos != expr.size()) {
    throw ParseError("trailing tokens after complete expression, starting at token " +
                         std::to_string(pos),
                     pos);
  }
  return tree;
}

GlyphTree binarize(const IdsTree& tree) {
  const auto& kids = tree.children;
  switch (kids.size()) {
    case 0:
      if (is_idc(tree.label)) throw StructureError("operator node without operands");
      return GlyphTree::leaf(tree.label);
    case 2:
      return GlyphTree::join(tree.label, binarize(kids[0]), binarize(kids[1]));
    case 3: {
      char32_t outer = 0;
      if (tree.label == kLeftMiddleRight) outer = kLeftToRight;
      else if (tree.label == kAboveMiddleBelow) outer = kAboveToBelow;
      else throw StructureError("ternary node labelled with non-ternary operator " + utf8::encode(tree.label));
      // Right nesting keeps left-to-right (top-to-bottom) reading order.
      return GlyphTree::join(outer, binarize(kids[0]),
                             GlyphTree::join(outer, binarize(kids[1]), binarize(kids[2])));
    }
    default:
      throw StructureError("node with " + std::to_string(kids.size()) + " children; expected 0, 2 or 3");
  }
}

GlyphTree parse_ids(std::u32string_view expr) { return binarize(parse_prefix(expr)); }

GlyphTree from_preorder(std::u32string_view seq) { return parse_ids(seq); }

// ---------------------------------------------------------------------------
// RuleTable

const RuleTable::Rule* RuleTable::find(char32_t c) const {
  auto it = rules_.find(c);
  return it == rules_.end() ? nullptr : &it->second;
}

void RuleTable::set_unification(std::map<char32_t, char32_t> unify) {
  unify_ = std::move(unify);
  finalize();
}

char32_t RuleTable::unify(char32_t c) const {
  auto it = unify_.find(c);
  return it == unify_.end() ? c : it->second;
}

bool RuleTable::add_rule(Ids ids) {
  if (ids.expr.size() == 1 && ids.expr[0] == ids.codepoint) {
    add_terminal(ids.codepoint);
    return true;
  }
  GlyphTree parsed = parse_ids(ids.expr);
  if (rules_.count(ids.codepoint) != 0) {
    ++duplicates_;
    warnings_.push_back("duplicate rule for " + utf8::to_ucs_notation(ids.codepoint) + " ignored");
    return false;
  }
  const char32_t cp = ids.codepoint;
  rules_.emplace(cp, Rule{std::move(ids), std::move(parsed)});
  return true;
}

void RuleTable::add_terminal(char32_t c) { declared_terminals_.insert(c); }

void RuleTable::finalize() {
  leaf_set_.clear();
  for (char32_t c : declared_terminals_) {
    const char32_t u = unify(c);
    if (!rules_.count(u)) leaf_set_.insert(u);
  }
  for (const auto& [cp, rule] : rules_) {
    for (char32_t t : rule.ids.expr) {
      if (is_idc(t)) continue;
      const char32_t u = unify(t);
      if (!rules_.count(u)) leaf_set_.insert(u);
    }
  }

  // Iterative three-colour DFS over "rule mentions rule" edges.
  enum : std::uint8_t { kWhite, kGrey, kBlack };
  std::unordered_map<char32_t, std::uint8_t> colour;
  colour.reserve(rules_.size());
  std::vector<char32_t> keys;
  keys.reserve(rules_.size());
  for (const auto& kv : rules_) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());

  struct Frame {
    char32_t cp;
    std::size_t next;
  };
  for (char32_t start : keys) {
    if (colour[start] != kWhite) continue;
    std::vector<Frame> stack{{start, 0}};
    colour[start] = kGrey;
    while (!stack.empty()) {
      Frame& f = stack.back();
      const std::u32string& expr = rules_.at(f.cp).ids.expr;
      if (f.next == expr.size()) {
        colour[f.cp] = kBlack;
        stack.pop_back();
        continue;
      }
      const char32_t t = expr[f.next++];
      if (is_idc(t)) continue;
      const char32_t u = unify(t);
      if (!rules_.count(u)) continue;
      const auto c = colour[u];
      if (c == kGrey) {
        std::u32string cycle;
        auto it = std::find_if(stack.begin(), stack.end(), [u](const Frame& fr) { return fr.cp == u; });
        for (; it != stack.end(); ++it) cycle.push_back(it->cp);
        cycle.push_back(u);
        std::string names;
        for (char32_t cp : cycle) {
          if (!names.empty()) names += " -> ";
          names += utf8::encode(cp) + " (" + utf8::to_ucs_notation(cp) + ")";
        }
        throw CycleError("cyclic decomposition rules: " + names, cycle);
      }
      if (c == kWhite) {
        colour[u] = kGrey;
        stack.push_back({u, 0});
      }
    }
  }
}

namespace {

std::string strip_brackets(std::string_view s) {
  std::string out;
  int depth = 0;
  for (char ch : s) {
    if (ch == '[') ++depth;
    else if (ch == ']' && depth > 0) --depth;
    else if (depth == 0) out.push_back(ch);
  }
  return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return cols;
}

}  // namespace

RuleTable rule_table_from_stream(std::istream& in, const std::string& source) {
  RuleTable table;
  std::string line;
  std::size_t lineno = 0;
  auto reject = [&](const std::string& why) {
    ++table.malformed_;
    if (table.warnings_.size() < 1000) {
      table.warnings_.push_back(source + ":" + std::to_string(lineno) + ": " + why);
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    const auto cols = split_tabs(line);
    if (cols.size() < 3) {
      reject("expected at least 3 tab-separated columns");
      continue;
    }
    char32_t cp = 0;
    if (!utf8::parse_ucs_notation(cols[0], cp)) {
      reject("malformed codepoint '" + std::string(cols[0]) + "'");
      continue;
    }
    try {
      const char32_t ch = utf8::decode_one(cols[1]);
      if (ch != cp) {
        reject("codepoint column does not match character column");
        continue;
      }
      const std::u32string expr = utf8::decode(strip_brackets(cols[2]));
      table.add_rule(Ids{cp, expr});
    } catch (const Error& e) {
      reject(e.what());
    }
  }
  table.finalize();
  return table;
}

RuleTable load_rule_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rule table '" + path.string() + "'");
  return rule_table_from_stream(in, path.string());
}

std::map<char32_t, char32_t> load_unification_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open unification map '" + path.string() + "'");
  std::map<char32_t, char32_t> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 2) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'from<TAB>to'");
    }
    out[utf8::decode_one(cols[0])] = utf8::decode_one(cols[1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Expansion

namespace {

struct Expander {
  const RuleTable& rules;
  int max_depth;
  DecomposeStats* stats;

  GlyphTree expand(char32_t c, int depth, bool top) const {
    c = rules.unify(c);
    if (const auto* rule = rules.find(c)) {
      if (depth >= max_depth) {
        throw ExpansionError("expansion of " + utf8::encode(c) + " exceeded depth " +
                             std::to_string(max_depth) + " (cyclic rules suspected)");
      }
      return substitute(rule->parsed, rule->parsed.root(), depth);
    }
    if (top && !rules.is_terminal(c)) {
      if (stats) ++stats->unk;
      return GlyphTree::leaf(kUnk);
    }
    return GlyphTree::leaf(c);
  }

  GlyphTree substitute(const GlyphTree& t, std::size_t i, int depth) const {
    const auto& n = t.node(i);
    if (n.is_leaf()) return expand(n.label, depth + 1, false);
    return GlyphTree::join(n.label, substitute(t, n.left, depth), substitute(t, n.right, depth));
  }
};

}  // namespace

GlyphTree decompose(char32_t ch, const RuleTable& rules, int max_depth, DecomposeStats* stats) {
  if (max_depth < 1) throw ContractError("max_depth must be positive");
  return Expander{rules, max_depth, stats}.expand(ch, 0, true);
}

// ---------------------------------------------------------------------------
// Linearization

const char* to_string(LinearOrder order) {
  switch (order) {
    case LinearOrder::kPreOrder: return "pre";
    case LinearOrder::kPostOrder: return "post";
    case LinearOrder::kInOrder: return "in";
  }
  return "?";
}

LinearOrder parse_linear_order(std::string_view s) {
  if (s == "pre" || s == "pre-order" || s == "preorder") return LinearOrder::kPreOrder;
  if (s == "post" || s == "post-order" || s == "postorder") return LinearOrder::kPostOrder;
  if (s == "in" || s == "in-order" || s == "inorder") return LinearOrder::kInOrder;
  throw ValidationError("unknown linearization order '" + std::string(s) + "' (pre|post|in)");
}

std::u32string linearize(const GlyphTree& tree, LinearOrder order) {
  std::u32string out;
  out.reserve(tree.node_count());
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    const auto& n = tree.node(i);
    if (n.is_leaf()) {
      out.push_back(n.label);
      return;
    }
    if (order == LinearOrder::kPreOrder) out.push_back(n.label);
    rec(n.left);
    if (order == LinearOrder::kInOrder) out.push_back(n.label);
    rec(n.right);
    if (order == LinearOrder::kPostOrder) out.push_back(n.label);
  };
  if (!tree.empty()) rec(tree.root());
  return out;
}

std::u32string strip_operators(std::u32string_view seq) {
  std::u32string out;
  for (char32_t c : seq) {
    if (!is_idc(c)) out.push_back(c);
  }
  return out;
}

RuleTableReport summarize(const RuleTable& rules, int max_depth) {
  RuleTableReport r;
  r.rule_count = rules.rule_count();
  r.declared_terminals = rules.leaf_set().size();
  r.malformed_lines = rules.malformed_lines();
  r.duplicate_lines = rules.duplicate_lines();
  std::set<char32_t> reached;
  for (const auto& [cp, rule] : rules.rules()) {
    try {
      const GlyphTree t = decompose(cp, rules, max_depth);
      ++r.depth_histogram[t.depth()];
      for (char32_t leaf : t.leaves()) reached.insert(leaf);
    } catch (const ExpansionError&) {
      ++r.expansion_failures;
    }
  }
  r.terminal_count = reached.size();
  return r;
}

}  // namespace hce::ids
