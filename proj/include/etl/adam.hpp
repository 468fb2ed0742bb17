#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>

#include "etl/matrix.hpp"

namespace etl {

struct AdamState {
  Matrix m;  // first moment
  Matrix v;  // second moment (entries >= 0)
  int64_t step = 0;
};

struct AdamHyper {
  float lr = 0.001f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Bias-corrected Adam step on one tensor. Throws training-diverged (carrying
// the parameter name) on non-finite gradients.
void adam_update(Matrix& param, const Matrix& grad, AdamState& state,
                 const AdamHyper& hyper, const std::string& name);

// Per-tensor Adam states keyed by parameter name.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamHyper hyper) : hyper_(hyper) {}

  void update(const std::string& name, Matrix& param, const Matrix& grad) {
    AdamState& st = states_[name];
    if (st.m.empty()) {
      st.m = Matrix(param.rows, param.cols);
      st.v = Matrix(param.rows, param.cols);
    }
    adam_update(param, grad, st, hyper_, name);
  }

  const AdamHyper& hyper() const { return hyper_; }

 private:
  AdamHyper hyper_;
  std::unordered_map<std::string, AdamState> states_;
};

}  // namespace etl
