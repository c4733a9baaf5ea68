#include "hce/ad/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hce::ad {

namespace {

void check_eps(Real eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ContractError("check_gradient: eps must be in [1e-7, 1e-3]");
  }
}

Real scalar_of(const Var& v) {
  if (v.value().size() != 1) {
    throw ContractError("check_gradient: function is not scalar, shape " + v.value().shape_str());
  }
  return v.value()[0];
}

Real rel_err(Real a, Real b) {
  return std::abs(a - b) / std::max({Real(1), std::abs(a), std::abs(b)});
}

}  // namespace

Real check_gradient(const ScalarFn& f, const Tensor& x, Real eps) {
  check_eps(eps);
  Tensor analytic;
  {
    ParameterStore store;
    Parameter& p = store.add("x", x);
    Tape tape;
    Var out = f(tape, tape.param(p));
    scalar_of(out);
    tape.backward(out);
    analytic = p.grad;
  }
  auto eval = [&](const Tensor& at) {
    Tape tape;
    return scalar_of(f(tape, tape.constant(at)));
  };
  Real worst = 0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const Real up = eval(probe);
    probe[i] = x[i] - eps;
    const Real down = eval(probe);
    probe[i] = x[i];
    worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * eps)));
  }
  return worst;
}

Real check_gradient(ParameterStore& store, const std::function<Var(Tape&)>& loss, Real eps) {
  check_eps(eps);
  store.zero_grad();
  for (Parameter* p : store.all()) {
    // Row-sparse bookkeeping would only clear touched rows; start fully clean.
    p->grad.fill(0);
    std::fill(p->touched.begin(), p->touched.end(), 0);
  }
  {
    Tape tape;
    Var out = loss(tape);
    scalar_of(out);
    tape.backward(out);
  }
  auto eval = [&] {
    Tape tape;
    return scalar_of(loss(tape));
  };
  Real worst = 0;
  for (Parameter* p : store.all()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const Real orig = p->value[i];
      p->value[i] = orig + eps;
      const Real up = eval();
      p->value[i] = orig - eps;
      const Real down = eval();
      p->value[i] = orig;
      worst = std::max(worst, rel_err(p->grad[i], (up - down) / (2 * eps)));
    }
  }
  store.bump_version();
  return worst;
}

}  // namespace hce::ad
