#pragma once

#include <span>
#include <vector>

#include "aem/matrix.hpp"

// Matrix kernels behind every forward/backward pass.
//
// Each kernel exists twice: aem::ref holds the serial reference and aem::par
// the OpenMP version. Both accumulate every output element in the same order
// (threads own whole output rows), so the two produce bit-identical results;
// tests assert exact equality. The unqualified entry points dispatch on
// problem size.

namespace aem {

namespace ref {
// C = A * B^T            A: m x k, B: n x k, C: m x n
void gemm_abt(const Matrix& A, const Matrix& B, Matrix& C);
// C = A * B              A: m x k, B: k x n, C: m x n
void gemm_ab(const Matrix& A, const Matrix& B, Matrix& C);
// C += A^T * B           A: m x k, B: m x n, C: k x n
void gemm_atb_acc(const Matrix& A, const Matrix& B, Matrix& C);
}  // namespace ref

namespace par {
void gemm_abt(const Matrix& A, const Matrix& B, Matrix& C);
void gemm_ab(const Matrix& A, const Matrix& B, Matrix& C);
void gemm_atb_acc(const Matrix& A, const Matrix& B, Matrix& C);
}  // namespace par

void gemm_abt(const Matrix& A, const Matrix& B, Matrix& C);
void gemm_ab(const Matrix& A, const Matrix& B, Matrix& C);
void gemm_atb_acc(const Matrix& A, const Matrix& B, Matrix& C);

// y[r] += b  for every row r
void add_row_bias(Matrix& y, std::span<const double> b);
// per-column sums, accumulated into out (out.size() == a.cols)
void col_sums_acc(const Matrix& a, std::span<double> out);

// y = W x  (W: out x in)
void matvec(const Matrix& W, std::span<const double> x, std::span<double> y);
// y = W^T x  (W: out x in, x: out, y: in)
void matvec_t(const Matrix& W, std::span<const double> x, std::span<double> y);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

// Minimum mul-add count before the dispatchers go parallel.
std::size_t parallel_grain();

}  // namespace aem
