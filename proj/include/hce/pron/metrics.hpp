#pragma once

#include <array>
#include <span>
#include <string>

#include <json.hpp>

#include "hce/phono/phono.hpp"

namespace hce::pron {

/// Error rates in percent. A wrong onset, nucleus or coda is one token
/// error; a syllable with any token error is one string error.
struct EvalReport {
  std::size_t count = 0;
  std::array<std::size_t, 3> unit_errors{};  // onset, nucleus, coda
  std::size_t string_errors = 0;
  double ser = 0;
  double ter = 0;
  std::array<double, 3> unit_rates{};

  nlohmann::json to_json() const;
};

EvalReport score(std::span<const phono::Syllable> predicted, std::span<const phono::Syllable> gold);

}  // namespace hce::pron
