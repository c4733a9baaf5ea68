#include "hce/ad/optim.hpp"

#include <cmath>

#include "hce/common/error.hpp"

namespace hce::ad {

namespace {

inline void adam_update(Real& w, Real g, Real& m, Real& v, const AdamConfig& c, Real bc1, Real bc2) {
  g += c.weight_decay * w;
  m = c.beta1 * m + (1 - c.beta1) * g;
  v = c.beta2 * v + (1 - c.beta2) * g * g;
  const Real mhat = m / bc1;
  const Real vhat = v / bc2;
  w -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
}

}  // namespace

void adam_step(ParameterStore& store, AdamState& state) {
  const AdamConfig& c = state.config;
  ++state.step;
  const Real bc1 = 1 - std::pow(c.beta1, static_cast<Real>(state.step));
  const Real bc2 = 1 - std::pow(c.beta2, static_cast<Real>(state.step));
  for (Parameter* p : store.all()) {
    if (!p->grad.same_shape(p->value)) {
      throw ShapeError("adam_step: " + p->name + " grad " + p->grad.shape_str() + " vs value " +
                       p->value.shape_str());
    }
    AdamMoments& mo = state.moments[p->name];
    if (!mo.m.same_shape(p->value)) {
      mo.m = Tensor(p->value.shape());
      mo.v = Tensor(p->value.shape());
      if (p->row_sparse) mo.row_steps.assign(p->value.rows(), 0);
    }
    Real* w = p->value.data();
    const Real* g = p->grad.data();
    Real* m = mo.m.data();
    Real* v = mo.v.data();
    if (p->row_sparse) {
      const std::size_t cols = p->value.cols();
      for (std::size_t r = 0; r < p->touched.size(); ++r) {
        if (!p->touched[r]) continue;
        const auto t = static_cast<Real>(++mo.row_steps[r]);
        const Real rb1 = 1 - std::pow(c.beta1, t);
        const Real rb2 = 1 - std::pow(c.beta2, t);
        for (std::size_t j = r * cols; j < (r + 1) * cols; ++j) {
          adam_update(w[j], g[j], m[j], v[j], c, rb1, rb2);
        }
      }
    } else {
      for (std::size_t j = 0; j < p->value.size(); ++j) adam_update(w[j], g[j], m[j], v[j], c, bc1, bc2);
    }
  }
  store.bump_version();
}

Tensor dropout_mask(const std::vector<std::size_t>& shape, Real rate, Rng& rng, bool training) {
  if (!(rate >= 0 && rate < 1)) {
    throw ContractError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  Tensor mask(shape, Real(1));
  if (!training || rate == 0) return mask;
  const Real keep = 1 / (1 - rate);
  for (Real& x : mask.values()) x = rng.bernoulli(rate) ? Real(0) : keep;
  return mask;
}

}  // namespace hce::ad
