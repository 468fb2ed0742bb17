#pragma once

#include <cstdint>
#include <vector>

#include "etl/common.hpp"

namespace etl {

// One user behavior row: sorted unique item indices, values all 1.0 for
// implicit feedback (kept explicit for generality).
struct SparseRow {
  uint32_t dim = 0;
  std::vector<uint32_t> indices;
  std::vector<float> values;

  SparseRow() = default;
  explicit SparseRow(uint32_t d) : dim(d) {}

  size_t nnz() const { return indices.size(); }

  void push(uint32_t index, float value = 1.0f) {
    indices.push_back(index);
    values.push_back(value);
  }

  bool contains(uint32_t index) const {
    // indices are sorted
    size_t lo = 0, hi = indices.size();
    while (lo < hi) {
      size_t mid = (lo + hi) / 2;
      if (indices[mid] < index)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo < indices.size() && indices[lo] == index;
  }

  bool operator==(const SparseRow& o) const {
    return dim == o.dim && indices == o.indices && values == o.values;
  }
};

// Validates the SparseRow invariants (sorted strictly increasing, < dim).
void validate_row(const SparseRow& row);

}  // namespace etl
