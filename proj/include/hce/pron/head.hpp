#pragma once

// Chained sub-syllable classifier. With the default order the coda is
// predicted first, the nucleus sees the coda distribution, and the onset
// sees both:
//   p1 = softmax(W1 h), p2 = softmax(W2 [h, p1]), p3 = softmax(W3 [h, p1, p2])

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hce/ad/tape.hpp"
#include "hce/common/rng.hpp"
#include "hce/phono/phono.hpp"

namespace hce::pron {

enum class Unit { kOnset = 0, kNucleus = 1, kCoda = 2 };
const char* to_string(Unit u);

enum class OutputOrder { kCodaFirst, kOnsetFirst };
const char* to_string(OutputOrder o);
/// Accepts "cd-nu-on" / "on-nu-cd".
OutputOrder parse_output_order(std::string_view s);
/// Prediction sequence of units for an order.
std::array<Unit, 3> chain(OutputOrder o);

/// Class labels per unit. Built from training data; `#` is always present in
/// the onset and coda inventories.
class Inventories {
 public:
  static Inventories from_entries(std::span<const phono::PronEntry> entries);
  static Inventories from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  std::size_t size(Unit u) const { return labels_[static_cast<int>(u)].size(); }
  const std::string& label(Unit u, std::size_t i) const { return labels_[static_cast<int>(u)][i]; }
  std::optional<std::size_t> index(Unit u, const std::string& label) const;

 private:
  void add(Unit u, const std::string& label);
  std::array<std::vector<std::string>, 3> labels_;
  std::array<std::map<std::string, std::size_t>, 3> index_;
};

const std::string& unit_of(const phono::Syllable& s, Unit u);

struct HeadOutput {
  std::array<ad::Var, 3> logits;  // indexed by Unit
  std::array<ad::Var, 3> probs;
};

class PronHead {
 public:
  PronHead() = default;
  /// Fresh parameters under `prefix` when `rng` is given, else binds.
  PronHead(ad::ParameterStore& store, const std::string& prefix, std::size_t in_dim,
           const Inventories& inv, OutputOrder order, bool bias, Rng* rng);

  HeadOutput forward(ad::Var h) const;
  OutputOrder order() const { return order_; }
  std::size_t in_dim() const { return in_dim_; }
  /// Weight and bias of the classifier for unit `u`.
  ad::Parameter& weight(Unit u) const { return *w_[static_cast<int>(u)]; }
  ad::Parameter* bias(Unit u) const { return b_[static_cast<int>(u)]; }

 private:
  OutputOrder order_ = OutputOrder::kCodaFirst;
  std::size_t in_dim_ = 0;
  std::array<ad::Parameter*, 3> w_{};
  std::array<ad::Parameter*, 3> b_{};
};

/// Class targets of one example; throws DataError for labels outside the
/// inventories.
std::array<std::size_t, 3> targets_of(const Inventories& inv, const phono::Syllable& s);

/// Σ over rows and units of −log p[target]; `targets[u][row]`.
ad::Var pron_loss(const HeadOutput& out, const std::array<std::vector<std::size_t>, 3>& targets);

/// Argmax decoding of row `r`.
phono::Syllable decode(const HeadOutput& out, const Inventories& inv, std::size_t r);

}  // namespace hce::pron
