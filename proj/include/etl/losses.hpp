#pragma once

#include <span>

#include "etl/matrix.hpp"
#include "etl/sparse.hpp"

namespace etl {

struct BceResult {
  double loss = 0.0;     // mean over the batch of per-row entry sums
  Matrix logit_grad;     // (sigmoid(l) - t) / batch count
};

// Numerically stable binary cross entropy computed from logits: the
// per-row log-likelihood sums over items, the result averages over rows.
// Targets as a dense 0/1 matrix or as sparse rows (absent entries are 0).
BceResult bce_with_logits(const Matrix& logits, const Matrix& targets);
BceResult bce_with_logits(const Matrix& logits, std::span<const SparseRow> targets);

// Loss only (no gradient), same summation order.
double bce_value(const Matrix& logits, std::span<const SparseRow> targets);

double stable_softplus(double x);
double sigmoid(double x);

}  // namespace etl
