#pragma once

#include <functional>

#include "hce/ad/parameter.hpp"
#include "hce/ad/tape.hpp"

namespace hce::ad {

/// Builds a scalar on a fresh tape from the input variable.
using ScalarFn = std::function<Var(Tape&, Var x)>;

/// Central-difference check of the tape gradient of `f` at `x`. Returns
/// max_i |g_ad - g_fd| / max(1, |g_ad|, |g_fd|). Throws ContractError when f
/// is not scalar or eps is outside [1e-7, 1e-3].
Real check_gradient(const ScalarFn& f, const Tensor& x, Real eps = 1e-5);

/// Same check over every entry of every parameter in `store`; `loss` builds
/// the scalar from the store on a fresh tape.
Real check_gradient(ParameterStore& store, const std::function<Var(Tape&)>& loss, Real eps = 1e-5);

}  // namespace hce::ad
