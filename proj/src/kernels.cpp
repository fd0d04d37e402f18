#include "aem/kernels.hpp"

#include <cassert>
#include <cmath>

namespace aem {

namespace {

// Four running sums so the compiler can keep the dot product in vector
// registers without reassociating on its own. Order is fixed, so every
// caller sees the same rounding.
inline double dot_rows(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return ((s0 + s1) + s2) + s3;
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

inline void gemm_abt_rows(const Matrix& A, const Matrix& B, Matrix& C,
                          std::size_t i) {
  const double* a = A[i];
  double* c = C[i];
  for (std::size_t j = 0; j < B.rows; ++j) c[j] = dot_rows(a, B[j], A.cols);
}

inline void gemm_ab_rows(const Matrix& A, const Matrix& B, Matrix& C,
                         std::size_t i) {
  const double* a = A[i];
  double* c = C[i];
  for (std::size_t j = 0; j < B.cols; ++j) c[j] = 0.0;
  for (std::size_t k = 0; k < A.cols; ++k) axpy(a[k], B[k], c, B.cols);
}

inline void gemm_atb_rows(const Matrix& A, const Matrix& B, Matrix& C,
                          std::size_t o) {
  double* c = C[o];
  for (std::size_t b = 0; b < A.rows; ++b) axpy(A[b][o], B[b], c, B.cols);
}

}  // namespace

std::size_t parallel_grain() { return 1u << 15; }

namespace ref {

void gemm_abt(const Matrix& A, const Matrix& B, Matrix& C) {
  assert(A.cols == B.cols);
  C.resize(A.rows, B.rows);
  for (std::size_t i = 0; i < A.rows; ++i) gemm_abt_rows(A, B, C, i);
}

void gemm_ab(const Matrix& A, const Matrix& B, Matrix& C) {
  assert(A.cols == B.rows);
  C.resize(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) gemm_ab_rows(A, B, C, i);
}

void gemm_atb_acc(const Matrix& A, const Matrix& B, Matrix& C) {
  assert(A.rows == B.rows);
  assert(C.rows == A.cols && C.cols == B.cols);
  for (std::size_t o = 0; o < A.cols; ++o) gemm_atb_rows(A, B, C, o);
}

}  // namespace ref

namespace par {

void gemm_abt(const Matrix& A, const Matrix& B, Matrix& C) {
  assert(A.cols == B.cols);
  C.resize(A.rows, B.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(A.rows); ++i)
    gemm_abt_rows(A, B, C, static_cast<std::size_t>(i));
}

void gemm_ab(const Matrix& A, const Matrix& B, Matrix& C) {
  assert(A.cols == B.rows);
  C.resize(A.rows, B.cols);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(A.rows); ++i)
    gemm_ab_rows(A, B, C, static_cast<std::size_t>(i));
}

void gemm_atb_acc(const Matrix& A, const Matrix& B, Matrix& C) {
  assert(A.rows == B.rows);
  assert(C.rows == A.cols && C.cols == B.cols);
#pragma omp parallel for schedule(static)
  for (long o = 0; o < static_cast<long>(A.cols); ++o)
    gemm_atb_rows(A, B, C, static_cast<std::size_t>(o));
}

}  // namespace par

void gemm_abt(const Matrix& A, const Matrix& B, Matrix& C) {
  if (A.rows * B.rows * A.cols >= parallel_grain())
    par::gemm_abt(A, B, C);
  else
    ref::gemm_abt(A, B, C);
}

void gemm_ab(const Matrix& A, const Matrix& B, Matrix& C) {
  if (A.rows * B.cols * A.cols >= parallel_grain())
    par::gemm_ab(A, B, C);
  else
    ref::gemm_ab(A, B, C);
}

void gemm_atb_acc(const Matrix& A, const Matrix& B, Matrix& C) {
  if (A.rows * A.cols * B.cols >= parallel_grain())
    par::gemm_atb_acc(A, B, C);
  else
    ref::gemm_atb_acc(A, B, C);
}

void add_row_bias(Matrix& y, std::span<const double> b) {
  assert(y.cols == b.size());
  for (std::size_t i = 0; i < y.rows; ++i) {
    double* r = y[i];
    for (std::size_t j = 0; j < y.cols; ++j) r[j] += b[j];
  }
}

void col_sums_acc(const Matrix& a, std::span<double> out) {
  assert(out.size() == a.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* r = a[i];
    for (std::size_t j = 0; j < a.cols; ++j) out[j] += r[j];
  }
}

void matvec(const Matrix& W, std::span<const double> x, std::span<double> y) {
  assert(x.size() == W.cols && y.size() == W.rows);
  for (std::size_t i = 0; i < W.rows; ++i) y[i] = dot_rows(W[i], x.data(), W.cols);
}

void matvec_t(const Matrix& W, std::span<const double> x, std::span<double> y) {
  assert(x.size() == W.rows && y.size() == W.cols);
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t i = 0; i < W.rows; ++i) axpy(x[i], W[i], y.data(), W.cols);
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return dot_rows(a.data(), b.data(), a.size());
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace aem
