#pragma once

// Dense kernels behind the tape. `serial` is the plain-loop reference kept for
// testing; `parallel` is the OpenMP/Eigen implementation used by default.
// All matrices are row-major. op(A) is m x k, op(B) is k x n, C is m x n.

#include <cstddef>
#include <span>

#include "hce/common/real.hpp"

namespace hce::kernels {

enum class Backend { kSerial, kParallel };

void set_backend(Backend b);
Backend backend();

/// Sets the OpenMP / Eigen thread count. Values < 1 are ignored.
void set_threads(int n);
int threads();

namespace serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, Real alpha,
          const Real* a, const Real* b, Real beta, Real* c);
void sigmoid(std::span<const Real> x, std::span<Real> y);
void tanh(std::span<const Real> x, std::span<Real> y);
/// y += alpha * x
void axpy(Real alpha, std::span<const Real> x, std::span<Real> y);
/// y = x ⊙ z
void hadamard(std::span<const Real> x, std::span<const Real> z, std::span<Real> y);

}  // namespace serial

namespace parallel {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, Real alpha,
          const Real* a, const Real* b, Real beta, Real* c);
void sigmoid(std::span<const Real> x, std::span<Real> y);
void tanh(std::span<const Real> x, std::span<Real> y);
void axpy(Real alpha, std::span<const Real> x, std::span<Real> y);
void hadamard(std::span<const Real> x, std::span<const Real> z, std::span<Real> y);

}  // namespace parallel

// Dispatch to the active backend.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, Real alpha,
          const Real* a, const Real* b, Real beta, Real* c);
void sigmoid(std::span<const Real> x, std::span<Real> y);
void tanh(std::span<const Real> x, std::span<Real> y);
void axpy(Real alpha, std::span<const Real> x, std::span<Real> y);
void hadamard(std::span<const Real> x, std::span<const Real> z, std::span<Real> y);

}  // namespace hce::kernels
