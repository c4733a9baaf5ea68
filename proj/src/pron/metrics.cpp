#include "hce/pron/metrics.hpp"

#include "hce/common/error.hpp"

namespace hce::pron {

EvalReport score(std::span<const phono::Syllable> predicted, std::span<const phono::Syllable> gold) {
  if (predicted.size() != gold.size()) {
    throw ContractError("score: " + std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(gold.size()) + " references");
  }
  EvalReport r;
  r.count = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool e[3] = {predicted[i].onset != gold[i].onset, predicted[i].nucleus != gold[i].nucleus,
                       predicted[i].coda != gold[i].coda};
    for (int u = 0; u < 3; ++u) r.unit_errors[u] += e[u];
    r.string_errors += e[0] || e[1] || e[2];
  }
  if (r.count == 0) return r;
  const double n = static_cast<double>(r.count);
  for (int u = 0; u < 3; ++u) r.unit_rates[u] = 100.0 * static_cast<double>(r.unit_errors[u]) / n;
  r.ser = 100.0 * static_cast<double>(r.string_errors) / n;
  r.ter = 100.0 * static_cast<double>(r.unit_errors[0] + r.unit_errors[1] + r.unit_errors[2]) / (3 * n);
  return r;
}

nlohmann::json EvalReport::to_json() const {
  return {{"count", count},           {"SER", ser},
          {"TER", ter},               {"onset", unit_rates[0]},
          {"nucleus", unit_rates[1]}, {"coda", unit_rates[2]},
          {"string_errors", string_errors},
          {"unit_errors", {{"onset", unit_errors[0]}, {"nucleus", unit_errors[1]}, {"coda", unit_errors[2]}}}};
}

}  // namespace hce::pron
