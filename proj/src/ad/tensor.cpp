#include "hce/ad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "hce/common/error.hpp"

namespace hce::ad {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, Real fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != product(shape_)) {
    throw ShapeError("tensor: " + std::to_string(data_.size()) + " values for shape " +
                     hce::ad::shape_str(shape_));
  }
}

Tensor Tensor::uninitialized(std::vector<std::size_t> shape) {
  Tensor t;
  t.data_.resize(product(shape));
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::vector(std::vector<Real> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<Real> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1;
  return t;
}

void Tensor::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const { return hce::ad::shape_str(shape_); }

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Real max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("max_abs_diff: " + a.shape_str() + " vs " + b.shape_str());
  }
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace hce::ad
