#include "depvec/kernels.hpp"

#include <cmath>

namespace depvec::kernels {

namespace {

// Shared inner bodies. The OpenMP entry points and the serial references both
// call these, so the two paths compile to the same arithmetic and stay
// bitwise equal.

inline void matmul_rows(const double* a, const double* b, double* c,
                        std::int64_t r0, std::int64_t r1, std::int64_t k,
                        std::int64_t n) {
  for (std::int64_t i = r0; i < r1; ++i) {
    double* ci = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

inline void matmul_nt_rows(const double* a, const double* b, double* c,
                           std::int64_t r0, std::int64_t r1, std::int64_t k,
                           std::int64_t n) {
  for (std::int64_t i = r0; i < r1; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

inline void matmul_tn_rows(const double* a, const double* b, double* c,
                           std::int64_t r0, std::int64_t r1, std::int64_t m,
                           std::int64_t k, std::int64_t n) {
  // c[p,j] = sum_i a[i,p] * b[i,j], rows of c indexed by p
  for (std::int64_t p = r0; p < r1; ++p) {
    double* cp = c + p * n;
    for (std::int64_t j = 0; j < n; ++j) cp[j] = 0.0;
    for (std::int64_t i = 0; i < m; ++i) {
      const double aip = a[i * k + p];
      const double* bi = b + i * n;
      for (std::int64_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

inline double unary_one(Unary op, double v, double slope) {
  switch (op) {
    case Unary::Exp: return std::exp(v);
    case Unary::Log: return std::log(v);
    case Unary::Tanh: return std::tanh(v);
    case Unary::Sigmoid: return 1.0 / (1.0 + std::exp(-v));
    case Unary::Relu: return v > 0.0 ? v : 0.0;
    case Unary::LeakyRelu: return v > 0.0 ? v : slope * v;
  }
  return v;
}

inline double binary_one(Binary op, double x, double y) {
  switch (op) {
    case Binary::Add: return x + y;
    case Binary::Sub: return x - y;
    case Binary::Mul: return x * y;
  }
  return 0.0;
}

constexpr std::int64_t kParMin = 16 * 1024;  // skip OpenMP below this many flops

}  // namespace

void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n) {
  if (m * k * n >= kParMin) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) matmul_rows(a, b, c, i, i + 1, k, n);
  } else {
    matmul_rows(a, b, c, 0, m, k, n);
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n) {
  if (m * k * n >= kParMin) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i)
      matmul_nt_rows(a, b, c, i, i + 1, k, n);
  } else {
    matmul_nt_rows(a, b, c, 0, m, k, n);
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n) {
  if (m * k * n >= kParMin) {
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < k; ++p)
      matmul_tn_rows(a, b, c, p, p + 1, m, k, n);
  } else {
    matmul_tn_rows(a, b, c, 0, k, m, k, n);
  }
}

void unary(Unary op, const double* x, double* y, std::int64_t n, double slope) {
  if (n >= kParMin) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = unary_one(op, x[i], slope);
  } else {
    for (std::int64_t i = 0; i < n; ++i) y[i] = unary_one(op, x[i], slope);
  }
}

void binary(Binary op, const double* a, const double* b, double* y,
            std::int64_t n) {
  if (n >= kParMin) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = binary_one(op, a[i], b[i]);
  } else {
    for (std::int64_t i = 0; i < n; ++i) y[i] = binary_one(op, a[i], b[i]);
  }
}

void scale(const double* x, double* y, std::int64_t n, double c) {
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] * c;
}

void axpy(const double* x, double* y, std::int64_t n, double c) {
  for (std::int64_t i = 0; i < n; ++i) y[i] += x[i] * c;
}

void row_reduce(const double* x, double* y, std::int64_t rows,
                std::int64_t cols) {
  // y[j] = sum over rows, ascending row index per output
  if (rows * cols >= kParMin) {
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < rows; ++i) acc += x[i * cols + j];
      y[j] = acc;
    }
  } else {
    serial::row_reduce(x, y, rows, cols);
  }
}

void col_reduce(const double* x, double* y, std::int64_t rows,
                std::int64_t cols) {
  if (rows * cols >= kParMin) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      const double* xi = x + i * cols;
      for (std::int64_t j = 0; j < cols; ++j) acc += xi[j];
      y[i] = acc;
    }
  } else {
    serial::col_reduce(x, y, rows, cols);
  }
}

double full_reduce(const double* x, std::int64_t n) {
  // full reductions stay serial: one ascending chain, no partial blocks
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

namespace serial {

void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n) {
  matmul_rows(a, b, c, 0, m, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n) {
  matmul_nt_rows(a, b, c, 0, m, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n) {
  matmul_tn_rows(a, b, c, 0, k, m, k, n);
}

void unary(Unary op, const double* x, double* y, std::int64_t n, double slope) {
  for (std::int64_t i = 0; i < n; ++i) y[i] = unary_one(op, x[i], slope);
}

void binary(Binary op, const double* a, const double* b, double* y,
            std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] = binary_one(op, a[i], b[i]);
}

void row_reduce(const double* x, double* y, std::int64_t rows,
                std::int64_t cols) {
  for (std::int64_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < rows; ++i) acc += x[i * cols + j];
    y[j] = acc;
  }
}

void col_reduce(const double* x, double* y, std::int64_t rows,
                std::int64_t cols) {
  for (std::int64_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    const double* xi = x + i * cols;
    for (std::int64_t j = 0; j < cols; ++j) acc += xi[j];
    y[i] = acc;
  }
}

}  // namespace serial

}  // namespace depvec::kernels
