#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "hce/ad/tensor.hpp"
#include "hce/common/rng.hpp"

namespace hce::ad {

/// A trainable tensor with its gradient accumulator. Row-sparse parameters
/// (embedding tables) record which rows received gradient so the optimizer
/// can skip the rest.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool row_sparse = false;
  std::vector<std::uint8_t> touched;

  void zero_grad();
  void touch_row(std::size_t r) { touched[r] = 1; }
};

/// Owns parameters with stable addresses, in insertion order. The version
/// counter changes whenever values change, so derived caches can detect
/// staleness.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor init, bool row_sparse = false);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  Real grad_norm() const;
  /// Rescales all gradients so their global L2 norm is at most `max_norm`.
  /// Returns the norm before clipping.
  Real clip_grad_norm(Real max_norm);

  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t version_ = 0;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor init_fan_in(std::size_t rows, std::size_t fan_in, Rng& rng);
Tensor init_uniform(std::size_t rows, std::size_t cols, Real bound, Rng& rng);

}  // namespace hce::ad
