#include "etl/matrix.hpp"

#include <cmath>

namespace etl {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_shape(a.cols == b.rows, "matmul: inner dimensions disagree");
  Matrix c(a.rows, b.cols);
  for (uint32_t i = 0; i < a.rows; ++i) {
    float* ci = c.row(i);
    const float* ai = a.row(i);
    for (uint32_t k = 0; k < a.cols; ++k) {
      const float aik = ai[k];
      if (aik == 0.0f) continue;
      const float* bk = b.row(k);
      for (uint32_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  check_shape(a.rows == b.rows, "matmul_at_b: row counts disagree");
  Matrix c(a.cols, b.cols);
  for (uint32_t i = 0; i < a.rows; ++i) {
    const float* ai = a.row(i);
    const float* bi = b.row(i);
    for (uint32_t k = 0; k < a.cols; ++k) {
      const float aik = ai[k];
      if (aik == 0.0f) continue;
      float* ck = c.row(k);
      for (uint32_t j = 0; j < b.cols; ++j) ck[j] += aik * bi[j];
    }
  }
  return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  check_shape(a.cols == b.cols, "matmul_a_bt: column counts disagree");
  Matrix c(a.rows, b.rows);
  for (uint32_t i = 0; i < a.rows; ++i) {
    const float* ai = a.row(i);
    float* ci = c.row(i);
    for (uint32_t j = 0; j < b.rows; ++j) {
      const float* bj = b.row(j);
      float acc = 0.0f;
      for (uint32_t k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
      ci[j] = acc;
    }
  }
  return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
  check_shape(a.same_shape(b), "add_inplace: shape mismatch");
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void sub_inplace(Matrix& a, const Matrix& b) {
  check_shape(a.same_shape(b), "sub_inplace: shape mismatch");
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] -= b.data[i];
}

void axpy_inplace(Matrix& a, float s, const Matrix& b) {
  check_shape(a.same_shape(b), "axpy_inplace: shape mismatch");
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += s * b.data[i];
}

void scale_inplace(Matrix& a, float s) {
  for (float& v : a.data) v *= s;
}

void add_bias_rows(Matrix& m, const Matrix& bias) {
  check_shape(bias.rows == 1 && bias.cols == m.cols, "add_bias_rows: bias shape mismatch");
  for (uint32_t i = 0; i < m.rows; ++i) {
    float* mi = m.row(i);
    const float* b = bias.row(0);
    for (uint32_t j = 0; j < m.cols; ++j) mi[j] += b[j];
  }
}

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols);
  std::vector<double> acc(m.cols, 0.0);
  for (uint32_t i = 0; i < m.rows; ++i) {
    const float* mi = m.row(i);
    for (uint32_t j = 0; j < m.cols; ++j) acc[j] += mi[j];
  }
  for (uint32_t j = 0; j < m.cols; ++j) out.at(0, j) = static_cast<float>(acc[j]);
  return out;
}

double l1_norm(const Matrix& a) {
  double acc = 0.0;
  for (float v : a.data) acc += std::abs(static_cast<double>(v));
  return acc;
}

double frobenius_norm(const Matrix& a) {
  double acc = 0.0;
  for (float v : a.data) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

bool all_finite(const Matrix& a) {
  for (float v : a.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double orthogonality_residual_l1(const Matrix& w) {
  Matrix g = matmul_at_b(w, w);
  for (uint32_t i = 0; i < g.rows; ++i) g.at(i, i) -= 1.0f;
  return l1_norm(g);
}

}  // namespace etl
