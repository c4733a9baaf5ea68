#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hce/common/real.hpp"

namespace hce::ad {

/// Allocator whose value-less construct() leaves elements uninitialized, so
/// op outputs that are overwritten in full skip the zero fill.
template <class T>
struct DefaultInitAllocator : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  using std::allocator<T>::allocator;
  template <class U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

/// Dense row-major array. Rank-1 tensors behave as a single row when an op
/// needs a matrix view; rows() is the product of all leading dimensions.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, Real fill = 0);
  Tensor(std::vector<std::size_t> shape, std::vector<Real> data);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  /// Contents are unspecified; the caller must write every element.
  static Tensor uninitialized(std::vector<std::size_t> shape);
  static Tensor vector(std::vector<Real> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<Real> values);
  static Tensor scalar(Real v) { return Tensor({1}, {v}); }
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : data_.size() / cols(); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  Real* begin() { return data_.data(); }
  Real* end() { return data_.data() + data_.size(); }
  const Real* begin() const { return data_.data(); }
  const Real* end() const { return data_.data() + data_.size(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(Real v);
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

  /// Elementwise max |a - b|; shapes must match.
  friend Real max_abs_diff(const Tensor& a, const Tensor& b);
  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<Real, DefaultInitAllocator<Real>> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);
Real max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace hce::ad
