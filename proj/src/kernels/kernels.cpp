#include "hce/kernels/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hce::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::kParallel};

// Below this many elements the OpenMP fork costs more than the loop.
constexpr std::ptrdiff_t kParallelThreshold = 1 << 15;

inline Real sigmoid_scalar(Real v) {
  // Split by sign so exp never overflows.
  if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
  const Real e = std::exp(v);
  return e / (Real(1) + e);
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

void set_threads(int n) {
  if (n < 1) return;
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
  Eigen::setNbThreads(n);
}

int threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------

namespace serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, Real alpha,
          const Real* a, const Real* b, Real beta, Real* c) {
  const std::size_t lda = trans_a ? m : k;
  const std::size_t ldb = trans_b ? k : n;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const Real av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const Real bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      Real& out = c[i * n + j];
      out = (beta == Real(0) ? Real(0) : beta * out) + alpha * acc;
    }
  }
}

void sigmoid(std::span<const Real> x, std::span<Real> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
}

void tanh(std::span<const Real> x, std::span<Real> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
}

void axpy(Real alpha, std::span<const Real> x, std::span<Real> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void hadamard(std::span<const Real> x, std::span<const Real> z, std::span<Real> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * z[i];
}

}  // namespace serial

// ---------------------------------------------------------------------------

namespace parallel {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, Real alpha,
          const Real* a, const Real* b, Real beta, Real* c) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  Map C(c, M, N);
  if (beta == Real(0)) C.setZero();
  else if (beta != Real(1)) C *= beta;
  if (m == 0 || n == 0 || k == 0) return;
  if (!trans_a && !trans_b) {
    C.noalias() += alpha * (ConstMap(a, M, K) * ConstMap(b, K, N));
  } else if (!trans_a && trans_b) {
    C.noalias() += alpha * (ConstMap(a, M, K) * ConstMap(b, N, K).transpose());
  } else if (trans_a && !trans_b) {
    C.noalias() += alpha * (ConstMap(a, K, M).transpose() * ConstMap(b, K, N));
  } else {
    C.noalias() += alpha * (ConstMap(a, K, M).transpose() * ConstMap(b, N, K).transpose());
  }
}

using ConstArr = Eigen::Map<const Eigen::Array<Real, Eigen::Dynamic, 1>>;
using Arr = Eigen::Map<Eigen::Array<Real, Eigen::Dynamic, 1>>;

// Applies f to blocks of the input so Eigen's vectorized exp does the work
// and OpenMP splits large spans.
template <class F>
void blockwise(std::span<const Real> x, std::span<Real> y, F f) {
  constexpr std::ptrdiff_t kBlock = 4096;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t blocks = (n + kBlock - 1) / kBlock;
#pragma omp parallel for if (n >= kParallelThreshold)
  for (std::ptrdiff_t b = 0; b < blocks; ++b) {
    const std::ptrdiff_t lo = b * kBlock, len = std::min(kBlock, n - lo);
    f(ConstArr(x.data() + lo, len), Arr(y.data() + lo, len));
  }
}

// exp(-|a|) for each a, flushed to zero where it would underflow; the
// vectorized exp returns denormals there.
template <class Expr>
Eigen::Array<Real, Eigen::Dynamic, 1> exp_neg_abs(const Expr& a) {
  constexpr Real kUnderflow = 700;
  const Eigen::Array<Real, Eigen::Dynamic, 1> m = a.abs();
  Eigen::Array<Real, Eigen::Dynamic, 1> e = (-m).exp();
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (m[i] > kUnderflow) e[i] = 0;
  }
  return e;
}

// Both use exp(-|x|) so nothing overflows; results match the serial
// reference to within a few ulps of 1.
void sigmoid(std::span<const Real> x, std::span<Real> y) {
  blockwise(x, y, [](ConstArr in, Arr out) {
    const auto e = exp_neg_abs(in);
    const Eigen::Array<Real, Eigen::Dynamic, 1> r = 1 / (1 + e);
    for (Eigen::Index i = 0; i < in.size(); ++i) out[i] = in[i] >= 0 ? r[i] : e[i] * r[i];
  });
}

void tanh(std::span<const Real> x, std::span<Real> y) {
  blockwise(x, y, [](ConstArr in, Arr out) {
    const auto e = exp_neg_abs(2 * in);
    const auto t = ((1 - e) / (1 + e)).eval();
    for (Eigen::Index i = 0; i < in.size(); ++i) out[i] = in[i] >= 0 ? t[i] : -t[i];
  });
}

void axpy(Real alpha, std::span<const Real> x, std::span<Real> y) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const Real* xs = x.data();
  Real* ys = y.data();
#pragma omp parallel for simd if (n >= kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) ys[i] += alpha * xs[i];
}

void hadamard(std::span<const Real> x, std::span<const Real> z, std::span<Real> y) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const Real* xs = x.data();
  const Real* zs = z.data();
  Real* ys = y.data();
#pragma omp parallel for simd if (n >= kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) ys[i] = xs[i] * zs[i];
}

}  // namespace parallel

// ---------------------------------------------------------------------------

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, Real alpha,
          const Real* a, const Real* b, Real beta, Real* c) {
  if (backend() == Backend::kSerial) serial::gemm(trans_a, trans_b, m, n, k, alpha, a, b, beta, c);
  else parallel::gemm(trans_a, trans_b, m, n, k, alpha, a, b, beta, c);
}

void sigmoid(std::span<const Real> x, std::span<Real> y) {
  if (backend() == Backend::kSerial) serial::sigmoid(x, y);
  else parallel::sigmoid(x, y);
}

void tanh(std::span<const Real> x, std::span<Real> y) {
  if (backend() == Backend::kSerial) serial::tanh(x, y);
  else parallel::tanh(x, y);
}

void axpy(Real alpha, std::span<const Real> x, std::span<Real> y) {
  if (backend() == Backend::kSerial) serial::axpy(alpha, x, y);
  else parallel::axpy(alpha, x, y);
}

void hadamard(std::span<const Real> x, std::span<const Real> z, std::span<Real> y) {
  if (backend() == Backend::kSerial) serial::hadamard(x, z, y);
  else parallel::hadamard(x, z, y);
}

}  // namespace hce::kernels
