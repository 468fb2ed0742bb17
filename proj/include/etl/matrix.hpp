#pragma once

#include <cstdint>
#include <vector>

#include "etl/common.hpp"

namespace etl {

// Dense row-major float32 matrix. Vectors (biases, batch rows) are 1xN.
struct Matrix {
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(uint32_t r, uint32_t c) : rows(r), cols(c), data(size_t(r) * c, 0.0f) {}

  float& at(uint32_t r, uint32_t c) { return data[size_t(r) * cols + c]; }
  float at(uint32_t r, uint32_t c) const { return data[size_t(r) * cols + c]; }
  float* row(uint32_t r) { return data.data() + size_t(r) * cols; }
  const float* row(uint32_t r) const { return data.data() + size_t(r) * cols; }
  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline void check_shape(bool ok, const char* what) {
  require(ok, ErrorCategory::invalid_shape, what);
}

// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// c = a^T * b
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
// c = a * b^T
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

// a += b, a -= b, a += s * b
void add_inplace(Matrix& a, const Matrix& b);
void sub_inplace(Matrix& a, const Matrix& b);
void axpy_inplace(Matrix& a, float s, const Matrix& b);
void scale_inplace(Matrix& a, float s);

// Adds a 1xN bias row to every row of m.
void add_bias_rows(Matrix& m, const Matrix& bias);
// 1xN column sums of m (accumulated in double).
Matrix column_sums(const Matrix& m);

// Sum of absolute values, 64-bit accumulation. Subgradient at 0 is 0.
double l1_norm(const Matrix& a);
// sqrt of sum of squares, 64-bit accumulation.
double frobenius_norm(const Matrix& a);

bool all_finite(const Matrix& a);

// Identity residual ||W^T W - I||_1 (used to monitor orthogonality).
double orthogonality_residual_l1(const Matrix& w);

}  // namespace etl
