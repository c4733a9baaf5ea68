#include "hce/ad/parameter.hpp"

#include <cmath>

#include "hce/common/error.hpp"

namespace hce::ad {

void Parameter::zero_grad() {
  if (!grad.same_shape(value)) grad = Tensor(value.shape());
  if (row_sparse) {
    const std::size_t cols = value.cols();
    for (std::size_t r = 0; r < touched.size(); ++r) {
      if (!touched[r]) continue;
      std::fill_n(grad.data() + r * cols, cols, Real(0));
      touched[r] = 0;
    }
  } else {
    grad.fill(0);
  }
}

Parameter& ParameterStore::add(const std::string& name, Tensor init, bool row_sparse) {
  if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
  Parameter p;
  p.name = name;
  p.grad = Tensor(init.shape());
  p.row_sparse = row_sparse;
  if (row_sparse) p.touched.assign(init.rows(), 0);
  p.value = std::move(init);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  ++version_;
  return params_.back();
}

Parameter& ParameterStore::at(const std::string& name) {
  auto* p = find(name);
  if (!p) throw ContractError("unknown parameter: " + name);
  return *p;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  const auto* p = find(name);
  if (!p) throw ContractError("unknown parameter: " + name);
  return *p;
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Real ParameterStore::grad_norm() const {
  Real s = 0;
  for (const auto& p : params_) {
    for (Real g : p.grad.values()) s += g * g;
  }
  return std::sqrt(s);
}

Real ParameterStore::clip_grad_norm(Real max_norm) {
  const Real norm = grad_norm();
  if (norm > max_norm && norm > 0) {
    const Real k = max_norm / norm;
    for (auto& p : params_) {
      for (Real& g : p.grad.values()) g *= k;
    }
  }
  return norm;
}

Tensor init_fan_in(std::size_t rows, std::size_t fan_in, Rng& rng) {
  const Real bound = fan_in == 0 ? Real(0) : Real(1) / std::sqrt(static_cast<Real>(fan_in));
  return init_uniform(rows, fan_in, bound, rng);
}

Tensor init_uniform(std::size_t rows, std::size_t cols, Real bound, Rng& rng) {
  Tensor t({rows, cols});
  for (Real& v : t.values()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace hce::ad
