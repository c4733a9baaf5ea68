#include "hce/pron/head.hpp"

#include <algorithm>
#include <set>

#include "hce/common/error.hpp"

namespace hce::pron {

using ad::Var;

const char* to_string(Unit u) {
  switch (u) {
    case Unit::kOnset: return "onset";
    case Unit::kNucleus: return "nucleus";
    case Unit::kCoda: return "coda";
  }
  return "?";
}

const char* to_string(OutputOrder o) { return o == OutputOrder::kCodaFirst ? "cd-nu-on" : "on-nu-cd"; }

OutputOrder parse_output_order(std::string_view s) {
  if (s == "cd-nu-on") return OutputOrder::kCodaFirst;
  if (s == "on-nu-cd") return OutputOrder::kOnsetFirst;
  throw ValidationError("unknown output order '" + std::string(s) + "' (cd-nu-on|on-nu-cd)");
}

std::array<Unit, 3> chain(OutputOrder o) {
  if (o == OutputOrder::kCodaFirst) return {Unit::kCoda, Unit::kNucleus, Unit::kOnset};
  return {Unit::kOnset, Unit::kNucleus, Unit::kCoda};
}

const std::string& unit_of(const phono::Syllable& s, Unit u) {
  switch (u) {
    case Unit::kOnset: return s.onset;
    case Unit::kNucleus: return s.nucleus;
    default: return s.coda;
  }
}

void Inventories::add(Unit u, const std::string& label) {
  auto& idx = index_[static_cast<int>(u)];
  if (idx.count(label)) return;
  idx[label] = labels_[static_cast<int>(u)].size();
  labels_[static_cast<int>(u)].push_back(label);
}

Inventories Inventories::from_entries(std::span<const phono::PronEntry> entries) {
  // Sorted labels keep indices independent of entry order.
  std::array<std::set<std::string>, 3> seen;
  seen[0].insert(std::string(phono::kNull));
  seen[2].insert(std::string(phono::kNull));
  for (const auto& e : entries) {
    for (Unit u : {Unit::kOnset, Unit::kNucleus, Unit::kCoda}) seen[static_cast<int>(u)].insert(unit_of(e.pron, u));
  }
  Inventories inv;
  for (int u = 0; u < 3; ++u) {
    for (const auto& l : seen[u]) inv.add(static_cast<Unit>(u), l);
  }
  return inv;
}

nlohmann::json Inventories::to_json() const {
  return {{"onset", labels_[0]}, {"nucleus", labels_[1]}, {"coda", labels_[2]}};
}

Inventories Inventories::from_json(const nlohmann::json& j) {
  Inventories inv;
  for (Unit u : {Unit::kOnset, Unit::kNucleus, Unit::kCoda}) {
    for (const auto& l : j.at(to_string(u))) inv.add(u, l.get<std::string>());
  }
  return inv;
}

std::optional<std::size_t> Inventories::index(Unit u, const std::string& label) const {
  const auto& idx = index_[static_cast<int>(u)];
  auto it = idx.find(label);
  if (it == idx.end()) return std::nullopt;
  return it->second;
}

PronHead::PronHead(ad::ParameterStore& store, const std::string& prefix, std::size_t in_dim,
                   const Inventories& inv, OutputOrder order, bool bias, Rng* rng)
    : order_(order), in_dim_(in_dim) {
  std::size_t fan_in = in_dim;
  for (Unit u : chain(order)) {
    const std::string name = prefix + "." + to_string(u);
    const int k = static_cast<int>(u);
    if (rng) {
      w_[k] = &store.add(name + ".W", ad::init_fan_in(inv.size(u), fan_in, *rng));
      b_[k] = bias ? &store.add(name + ".b", ad::Tensor({inv.size(u)})) : nullptr;
    } else {
      w_[k] = &store.at(name + ".W");
      b_[k] = store.find(name + ".b");
      if (w_[k]->value.cols() != fan_in || w_[k]->value.rows() != inv.size(u)) {
        throw DataError(name + ".W has shape " + w_[k]->value.shape_str() + ", expected [" +
                        std::to_string(inv.size(u)) + "," + std::to_string(fan_in) + "]");
      }
    }
    fan_in += inv.size(u);
  }
}

HeadOutput PronHead::forward(Var h) const {
  if (h.cols() != in_dim_) {
    throw ShapeError("pron head: input " + h.value().shape_str() + ", expected width " + std::to_string(in_dim_));
  }
  ad::Tape& tape = *h.tape;
  HeadOutput out;
  std::vector<Var> feed{h};
  for (Unit u : chain(order_)) {
    const int k = static_cast<int>(u);
    const Var in = feed.size() == 1 ? h : ad::concat_cols(feed);
    Var z = ad::linear(in, tape.param(*w_[k]));
    if (b_[k]) z = ad::add_row(z, tape.param(*b_[k]));
    out.logits[k] = z;
    out.probs[k] = ad::softmax(z);
    feed.push_back(out.probs[k]);
  }
  return out;
}

std::array<std::size_t, 3> targets_of(const Inventories& inv, const phono::Syllable& s) {
  std::array<std::size_t, 3> t{};
  for (Unit u : {Unit::kOnset, Unit::kNucleus, Unit::kCoda}) {
    const auto i = inv.index(u, unit_of(s, u));
    if (!i) throw DataError(std::string(to_string(u)) + " '" + unit_of(s, u) + "' is not in the inventory");
    t[static_cast<int>(u)] = *i;
  }
  return t;
}

Var pron_loss(const HeadOutput& out, const std::array<std::vector<std::size_t>, 3>& targets) {
  Var total;
  for (int u = 0; u < 3; ++u) {
    const Var ce = ad::cross_entropy(out.logits[u], targets[u]);
    total = total.valid() ? ad::add(total, ce) : ce;
  }
  return total;
}

phono::Syllable decode(const HeadOutput& out, const Inventories& inv, std::size_t r) {
  std::array<std::string, 3> labels;
  for (Unit u : {Unit::kOnset, Unit::kNucleus, Unit::kCoda}) {
    const auto row = out.probs[static_cast<int>(u)].value().row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    labels[static_cast<int>(u)] = inv.label(u, best);
  }
  return {labels[0], labels[1], labels[2]};
}

}  // namespace hce::pron
