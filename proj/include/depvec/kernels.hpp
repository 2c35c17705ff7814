#pragma once

#include <cstdint>

// Dense fp64 kernels. Every reduction runs in a fixed ascending-index order
// per output element, so results are bit-identical regardless of thread
// count. The serial:: namespace holds plain-loop reference versions sharing
// the same inner bodies; the kernel tests assert bitwise equality and the
// bench target compares throughput.
namespace depvec::kernels {

// C[m,n] = A[m,k] * B[k,n]
void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n);
// C[m,n] = A[m,k] * B[n,k]^T
void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n);
// C[k,n] = A[m,k]^T * B[m,n]
void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n);

enum class Unary { Exp, Log, Tanh, Sigmoid, Relu, LeakyRelu };
enum class Binary { Add, Sub, Mul };

void unary(Unary op, const double* x, double* y, std::int64_t n, double slope = 0.0);
void binary(Binary op, const double* a, const double* b, double* y,
            std::int64_t n);
void scale(const double* x, double* y, std::int64_t n, double c);
// y[i] += x[i] * c
void axpy(const double* x, double* y, std::int64_t n, double c);

// row_reduce: y[j] = sum_i x[i,j]; col_reduce: y[i] = sum_j x[i,j]
void row_reduce(const double* x, double* y, std::int64_t rows,
                std::int64_t cols);
void col_reduce(const double* x, double* y, std::int64_t rows,
                std::int64_t cols);
double full_reduce(const double* x, std::int64_t n);

namespace serial {
void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n);
void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n);
void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n);
void unary(Unary op, const double* x, double* y, std::int64_t n, double slope = 0.0);
void binary(Binary op, const double* a, const double* b, double* y,
            std::int64_t n);
void row_reduce(const double* x, double* y, std::int64_t rows,
                std::int64_t cols);
void col_reduce(const double* x, double* y, std::int64_t rows,
                std::int64_t cols);
}  // namespace serial

}  // namespace depvec::kernels
