#pragma once

// Synthetic character sets: private-use codepoints with random decomposition
// trees and random readings.

#include <set>

#include "hce/phono/phono.hpp"
#include "random_trees.hpp"

namespace oracle {

struct ToyPron {
  hce::ids::RuleTable rules;
  hce::phono::DatasetSplit split;
};

inline const std::u32string& toy_alphabet() {
  static const std::u32string a = U"一丨人口木火水土日月山女";
  return a;
}

/// `n` characters with distinct trees; every character lands in train,
/// validation and test alike (for memorization checks).
inline ToyPron toy_pron(std::size_t n, std::uint64_t seed) {
  static const char* kOnsets[] = {"#", "b", "f", "j", "z", "s", "g", "m"};
  static const char* kNuclei[] = {"a", "i", "ui", "au", "o", "e"};
  static const char* kCodas[] = {"#", "ng", "n", "k"};
  hce::Rng rng(seed);
  ToyPron out;
  for (char32_t c : toy_alphabet()) out.rules.add_terminal(c);
  std::set<std::u32string> seen;
  for (char32_t cp = 0xE000; out.split.train.size() < n; ++cp) {
    const int depth = 1 + static_cast<int>(rng.uniform_index(3));
    const auto tree = random_tree(rng, depth, toy_alphabet());
    const auto expr = hce::ids::linearize(tree, hce::ids::LinearOrder::kPreOrder);
    if (!seen.insert(expr).second) continue;
    out.rules.add_rule({cp, expr});
    hce::phono::PronEntry e;
    e.ch = cp;
    e.pron = {kOnsets[rng.uniform_index(8)], kNuclei[rng.uniform_index(6)], kCodas[rng.uniform_index(4)]};
    out.split.train.push_back(e);
  }
  out.rules.finalize();
  out.split.validation = out.split.train;
  out.split.test = out.split.train;
  out.split.seed = seed;
  return out;
}

}  // namespace oracle
