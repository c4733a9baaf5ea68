#pragma once

#include <string>

#include "hce/common/rng.hpp"
#include "hce/ids/ids.hpp"

namespace oracle {

/// Random strictly binary tree of exactly `depth` levels below the root,
/// leaves drawn from `alphabet`.
inline hce::ids::GlyphTree random_tree(hce::Rng& rng, int depth, const std::u32string& alphabet) {
  using hce::ids::GlyphTree;
  if (depth == 0) return GlyphTree::leaf(alphabet[rng.uniform_index(alphabet.size())]);
  const auto ops = hce::ids::binary_idcs();
  const char32_t op = ops[rng.uniform_index(ops.size())];
  // One side carries the full depth, the other is shallower at random.
  const int other = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(depth)));
  GlyphTree deep = random_tree(rng, depth - 1, alphabet);
  GlyphTree shallow = random_tree(rng, other, alphabet);
  return rng.bernoulli(0.5) ? GlyphTree::join(op, deep, shallow) : GlyphTree::join(op, shallow, deep);
}

inline hce::ids::GlyphTree mirror(const hce::ids::GlyphTree& t, std::size_t i) {
  const auto& n = t.node(i);
  if (n.is_leaf()) return hce::ids::GlyphTree::leaf(n.label);
  return hce::ids::GlyphTree::join(n.label, mirror(t, static_cast<std::size_t>(n.right)),
                                   mirror(t, static_cast<std::size_t>(n.left)));
}

inline hce::ids::GlyphTree mirror(const hce::ids::GlyphTree& t) { return mirror(t, t.root()); }

}  // namespace oracle
