#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hce/ad/parameter.hpp"
#include "hce/common/rng.hpp"

namespace hce::ad {

struct AdamConfig {
  Real lr = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  /// L2 penalty added to the gradient before the moment update.
  Real weight_decay = 0;
};

struct AdamMoments {
  Tensor m;
  Tensor v;
  /// Per-row step counts for row-sparse parameters (lazy updates).
  std::vector<std::uint64_t> row_steps;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, AdamMoments> moments;
};

/// One Adam update over every parameter in `store` using its current grad.
/// Row-sparse parameters only update rows touched since the last zero_grad,
/// each with its own bias-correction count. Bumps the store version.
void adam_step(ParameterStore& store, AdamState& state);

/// Inverted-dropout mask: 0 with probability `rate`, else 1/(1-rate).
/// All ones when not training. Throws ContractError for rate outside [0,1).
Tensor dropout_mask(const std::vector<std::size_t>& shape, Real rate, Rng& rng, bool training);

}  // namespace hce::ad
