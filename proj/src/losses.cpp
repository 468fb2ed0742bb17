#include "etl/losses.hpp"

#include <cmath>

namespace etl {

double stable_softplus(double x) {
  // log(1 + exp(x)) without overflow
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

BceResult bce_with_logits(const Matrix& logits, const Matrix& targets) {
  check_shape(logits.same_shape(targets), "bce: logits/targets shape mismatch");
  BceResult r;
  r.logit_grad = Matrix(logits.rows, logits.cols);
  const double inv_count = 1.0 / static_cast<double>(logits.rows);
  double acc = 0.0;
  for (size_t i = 0; i < logits.data.size(); ++i) {
    const double l = logits.data[i];
    const double t = targets.data[i];
    acc += stable_softplus(l) - t * l;
    r.logit_grad.data[i] = static_cast<float>((sigmoid(l) - t) * inv_count);
  }
  r.loss = acc * inv_count;
  return r;
}

BceResult bce_with_logits(const Matrix& logits, std::span<const SparseRow> targets) {
  check_shape(logits.rows == targets.size(), "bce: batch size mismatch");
  BceResult r;
  r.logit_grad = Matrix(logits.rows, logits.cols);
  const double inv_count = 1.0 / static_cast<double>(logits.rows);
  double acc = 0.0;
  for (uint32_t b = 0; b < logits.rows; ++b) {
    const SparseRow& row = targets[b];
    check_shape(row.dim == logits.cols, "bce: target row dim mismatch");
    const float* l = logits.row(b);
    float* g = r.logit_grad.row(b);
    size_t t = 0;
    for (uint32_t j = 0; j < logits.cols; ++j) {
      double target = 0.0;
      if (t < row.indices.size() && row.indices[t] == j) {
        target = row.values[t];
        ++t;
      }
      const double lj = l[j];
      acc += stable_softplus(lj) - target * lj;
      g[j] = static_cast<float>((sigmoid(lj) - target) * inv_count);
    }
  }
  r.loss = acc * inv_count;
  return r;
}

double bce_value(const Matrix& logits, std::span<const SparseRow> targets) {
  check_shape(logits.rows == targets.size(), "bce: batch size mismatch");
  const double inv_count = 1.0 / static_cast<double>(logits.rows);
  double acc = 0.0;
  for (uint32_t b = 0; b < logits.rows; ++b) {
    const SparseRow& row = targets[b];
    const float* l = logits.row(b);
    size_t t = 0;
    for (uint32_t j = 0; j < logits.cols; ++j) {
      double target = 0.0;
      if (t < row.indices.size() && row.indices[t] == j) {
        target = row.values[t];
        ++t;
      }
      acc += stable_softplus(l[j]) - target * l[j];
    }
  }
  return acc * inv_count;
}

}  // namespace etl
