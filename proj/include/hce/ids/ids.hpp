#pragma once

// Ideographic description sequences: rule loading, recursive expansion into
// strictly binary glyph trees, and tree linearization.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hce/common/error.hpp"

namespace hce::ids {

/// Stand-in leaf for characters that are absent from the rule table.
inline constexpr char32_t kUnk = U'\uFFFD';

inline constexpr char32_t kLeftToRight = U'\u2FF0';
inline constexpr char32_t kAboveToBelow = U'\u2FF1';
inline constexpr char32_t kLeftMiddleRight = U'\u2FF2';
inline constexpr char32_t kAboveMiddleBelow = U'\u2FF3';
inline constexpr char32_t kOverlaid = U'\u2FFB';

constexpr bool is_idc(char32_t c) { return c >= 0x2FF0 && c <= 0x2FFB; }
constexpr bool is_ternary_idc(char32_t c) { return c == kLeftMiddleRight || c == kAboveMiddleBelow; }
constexpr bool is_binary_idc(char32_t c) { return is_idc(c) && !is_ternary_idc(c); }

/// The ten operators that may label an inner GlyphTree node.
std::span<const char32_t> binary_idcs();

/// One decomposition rule: a logograph and its prefix-notation expression.
struct Ids {
  char32_t codepoint = 0;
  std::u32string expr;
};

class CycleError : public Error {
 public:
  CycleError(const std::string& what, std::u32string cycle)
      : Error(ErrorCategory::kCycle, what), cycle_(std::move(cycle)) {}
  const std::u32string& cycle() const noexcept { return cycle_; }

 private:
  std::u32string cycle_;
};

class ExpansionError : public Error {
 public:
  explicit ExpansionError(const std::string& what) : Error(ErrorCategory::kExpansion, what) {}
};

class StructureError : public Error {
 public:
  explicit StructureError(const std::string& what) : Error(ErrorCategory::kParse, what) {}
};

/// Strictly binary decomposition tree. Nodes are stored in post-order, so
/// children always precede their parent and the root is the last node. Two
/// trees compare equal iff they are structurally identical.
class GlyphTree {
 public:
  struct Node {
    char32_t label = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;

    bool is_leaf() const { return left < 0; }
    friend bool operator==(const Node&, const Node&) = default;
  };

  GlyphTree() = default;

  static GlyphTree leaf(char32_t label);
  static GlyphTree join(char32_t idc, const GlyphTree& left, const GlyphTree& right);

  std::span<const Node> nodes() const { return nodes_; }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  std::size_t root() const { return nodes_.size() - 1; }
  const Node& root_node() const { return nodes_.back(); }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t leaf_count() const;
  bool empty() const { return nodes_.empty(); }

  /// Leaf labels, left to right.
  std::u32string leaves() const;
  /// Edges on the longest root-to-leaf path (a single leaf has depth 0).
  int depth() const;
  /// Node indices in breadth-first order, root first, left before right.
  std::vector<std::size_t> breadth_first() const;
  /// Copy of the subtree rooted at node `i`.
  GlyphTree subtree(std::size_t i) const;

  /// "⿰(亻,士)" style.
  std::string to_bracketed() const;
  /// One node per line, two spaces per level.
  std::string to_indented() const;

  friend bool operator==(const GlyphTree&, const GlyphTree&) = default;

 private:
  std::vector<Node> nodes_;
};

/// Parse tree before ternary normalization; node arity is 0, 2 or 3.
struct IdsTree {
  char32_t label = 0;
  std::vector<IdsTree> children;
};

/// Prefix-notation parse without binarization.
IdsTree parse_prefix(std::u32string_view expr);

/// Rewrites ternary nodes as two right-nested binary nodes
/// (⿲ → ⿰, ⿳ → ⿱). Throws StructureError on arity outside {0, 2, 3}.
GlyphTree binarize(const IdsTree& tree);

/// Prefix parse plus binarization. Throws ParseError carrying the offending
/// token index on dangling operators or trailing tokens.
GlyphTree parse_ids(std::u32string_view expr);

/// Decomposition rules plus the terminal inventory. Immutable once loaded.
class RuleTable {
 public:
  struct Rule {
    Ids ids;
    GlyphTree parsed;
  };

  const Rule* find(char32_t c) const;
  bool has_rule(char32_t c) const { return rules_.count(c) != 0; }
  bool is_terminal(char32_t c) const { return leaf_set_.count(c) != 0; }
  bool contains(char32_t c) const { return has_rule(c) || is_terminal(c); }

  std::size_t rule_count() const { return rules_.size(); }
  const std::set<char32_t>& leaf_set() const { return leaf_set_; }
  const std::unordered_map<char32_t, Rule>& rules() const { return rules_; }

  /// Lines rejected as malformed / duplicate codepoints ignored on load.
  std::size_t malformed_lines() const { return malformed_; }
  std::size_t duplicate_lines() const { return duplicates_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Optional variant unification (e.g. 灬 → 火), applied to every component
  /// before rule lookup.
  void set_unification(std::map<char32_t, char32_t> unify);
  char32_t unify(char32_t c) const;
  const std::map<char32_t, char32_t>& unification() const { return unify_; }

  /// Adds a rule programmatically; used by loaders and tests. Returns false
  /// (and counts a duplicate) if the codepoint already has one.
  bool add_rule(Ids ids);
  void add_terminal(char32_t c);
  /// Recomputes the leaf set and rejects cyclic rule sets.
  void finalize();

  friend RuleTable rule_table_from_stream(std::istream& in, const std::string& source);

 private:
  std::unordered_map<char32_t, Rule> rules_;
  std::set<char32_t> leaf_set_;
  std::set<char32_t> declared_terminals_;
  std::map<char32_t, char32_t> unify_;
  std::size_t malformed_ = 0;
  std::size_t duplicates_ = 0;
  std::vector<std::string> warnings_;
};

RuleTable rule_table_from_stream(std::istream& in, const std::string& source = "<stream>");

/// Loads `U+XXXX<TAB>char<TAB>IDS[<TAB>alternative...]` lines. Bracketed
/// region annotations are stripped; only the first expression is used. A
/// line whose expression is the character itself declares a terminal.
RuleTable load_rule_table(const std::filesystem::path& path);

/// Reads `from<TAB>to` variant unification pairs.
std::map<char32_t, char32_t> load_unification_map(const std::filesystem::path& path);

struct DecomposeStats {
  std::size_t unk = 0;
};

inline constexpr int kDefaultMaxDepth = 64;

/// Expands `ch` by repeated rule substitution until every leaf is terminal.
/// `max_depth` bounds the nesting of substitutions. Characters unknown to the
/// table yield Leaf(kUnk), counted in `stats`.
GlyphTree decompose(char32_t ch, const RuleTable& rules, int max_depth = kDefaultMaxDepth,
                    DecomposeStats* stats = nullptr);

enum class LinearOrder { kPreOrder, kPostOrder, kInOrder };

const char* to_string(LinearOrder order);
LinearOrder parse_linear_order(std::string_view s);

std::u32string linearize(const GlyphTree& tree, LinearOrder order);

std::u32string strip_operators(std::u32string_view seq);

/// Inverse of linearize(t, kPreOrder) given operator arity 2 and leaf arity 0.
GlyphTree from_preorder(std::u32string_view seq);

struct RuleTableReport {
  std::size_t rule_count = 0;
  std::size_t terminal_count = 0;       // distinct leaves over all expansions
  std::size_t declared_terminals = 0;   // leaf_set size
  std::size_t malformed_lines = 0;
  std::size_t duplicate_lines = 0;
  std::size_t expansion_failures = 0;
  std::map<int, std::size_t> depth_histogram;  // tree depth -> count
};

/// Expands every rule codepoint and tabulates the outcome.
RuleTableReport summarize(const RuleTable& rules, int max_depth = kDefaultMaxDepth);

}  // namespace hce::ids
