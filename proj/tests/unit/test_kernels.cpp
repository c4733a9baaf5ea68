#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "hce/common/rng.hpp"
#include "hce/kernels/kernels.hpp"

using namespace hce;

namespace {

std::vector<Real> random_vec(std::size_t n, Rng& rng) {
  std::vector<Real> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

Real max_diff(const std::vector<Real>& a, const std::vector<Real>& b) {
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("parallel gemm matches the serial reference for all transposes") {
  Rng rng(3);
  using Dims = std::array<std::size_t, 3>;
  for (const Dims& d : {Dims{1, 1, 1}, Dims{7, 5, 3}, Dims{33, 65, 17}, Dims{128, 256, 64}, Dims{4, 0, 3}}) {
    const auto [m, n, k] = d;
    for (bool ta : {false, true}) {
      for (bool tb : {false, true}) {
        const auto a = random_vec(m * k, rng);
        const auto b = random_vec(k * n, rng);
        auto c1 = random_vec(m * n, rng);
        auto c2 = c1;
        kernels::serial::gemm(ta, tb, m, n, k, 0.5, a.data(), b.data(), 2.0, c1.data());
        kernels::parallel::gemm(ta, tb, m, n, k, 0.5, a.data(), b.data(), 2.0, c2.data());
        CHECK(max_diff(c1, c2) < 1e-12);
      }
    }
  }
}

TEST_CASE("gemm with beta zero ignores garbage in C") {
  const std::vector<Real> a{1, 2, 3, 4}, b{1, 0, 0, 1};
  std::vector<Real> c{NAN, NAN, NAN, NAN};
  kernels::serial::gemm(false, false, 2, 2, 2, 1, a.data(), b.data(), 0, c.data());
  CHECK(c == a);
  std::vector<Real> d{NAN, NAN, NAN, NAN};
  kernels::parallel::gemm(false, false, 2, 2, 2, 1, a.data(), b.data(), 0, d.data());
  CHECK(d == a);
}

TEST_CASE("elementwise kernels agree across backends above the parallel threshold") {
  // sigmoid and tanh take different exp paths, so they agree to rounding.
  Rng rng(4);
  const std::size_t n = 100000;
  auto x = random_vec(n, rng);
  for (auto& v : x) v *= 30;
  const auto z = random_vec(n, rng);
  std::vector<Real> s1(n), s2(n), t1(n), t2(n), h1(n), h2(n);
  kernels::serial::sigmoid(x, s1);
  kernels::parallel::sigmoid(x, s2);
  kernels::serial::tanh(x, t1);
  kernels::parallel::tanh(x, t2);
  kernels::serial::hadamard(x, z, h1);
  kernels::parallel::hadamard(x, z, h2);
  CHECK(max_diff(s1, s2) < 1e-15);
  CHECK(max_diff(t1, t2) < 1e-15);
  CHECK(max_diff(h1, h2) == 0);
  auto y1 = z, y2 = z;
  kernels::serial::axpy(0.25, x, y1);
  kernels::parallel::axpy(0.25, x, y2);
  CHECK(max_diff(y1, y2) == 0);
  for (Real v : s1) {
    CHECK(v >= 0);
    CHECK(v <= 1);
  }
}

TEST_CASE("sigmoid is stable for large magnitudes") {
  const std::vector<Real> x{-1000, 0, 1000};
  std::vector<Real> y(3);
  kernels::sigmoid(x, y);
  CHECK(y[0] == 0);
  CHECK(y[1] == 0.5);
  CHECK(y[2] == 1);
}

TEST_CASE("backend switch") {
  const auto saved = kernels::backend();
  kernels::set_backend(kernels::Backend::kSerial);
  CHECK(kernels::backend() == kernels::Backend::kSerial);
  kernels::set_backend(saved);
  CHECK(kernels::threads() >= 1);
}
