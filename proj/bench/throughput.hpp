#pragma once

// Forward-pass timing of the treeLSTM encoder at different batch sizes.

#include <algorithm>
#include <chrono>
#include <span>
#include <vector>

#include "hce/enc/encoder.hpp"
#include "hce/ids/ids.hpp"

namespace hce::bench {

struct Throughput {
  std::size_t trees = 0;
  std::size_t batch = 0;
  double seconds = 0;  // best of the repeats
  double trees_per_second() const { return seconds > 0 ? static_cast<double>(trees) / seconds : 0; }
};

/// Encodes every tree in batches of `batch`, evaluation mode.
inline Throughput time_forward(enc::Encoder& encoder, std::span<const ids::GlyphTree* const> trees,
                               std::size_t batch, int repeats = 3) {
  Throughput t{trees.size(), batch, 1e300};
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t b = 0; b < trees.size(); b += batch) {
      ad::Tape tape;
      encoder.encode(tape, trees.subspan(b, std::min(batch, trees.size() - b)), {});
    }
    const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
    t.seconds = std::min(t.seconds, d.count());
  }
  return t;
}

/// Decompositions of up to `n` rule codepoints spread evenly over the sorted
/// codepoint range.
inline std::vector<ids::GlyphTree> sample_decompositions(const ids::RuleTable& rules, std::size_t n) {
  std::vector<char32_t> cps;
  for (const auto& [cp, r] : rules.rules()) cps.push_back(cp);
  std::sort(cps.begin(), cps.end());
  std::vector<ids::GlyphTree> out;
  const std::size_t step = std::max<std::size_t>(1, cps.size() / std::max<std::size_t>(1, n));
  for (std::size_t i = 0; i < cps.size() && out.size() < n; i += step) out.push_back(ids::decompose(cps[i], rules));
  return out;
}

}  // namespace hce::bench
