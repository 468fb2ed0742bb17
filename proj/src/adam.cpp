#include "etl/adam.hpp"

#include <cmath>

namespace etl {

void adam_update(Matrix& param, const Matrix& grad, AdamState& state,
                 const AdamHyper& hyper, const std::string& name) {
  check_shape(param.same_shape(grad) && param.same_shape(state.m) &&
                  param.same_shape(state.v),
              "adam_update: shape mismatch");
  if (!all_finite(grad))
    fail(ErrorCategory::training_diverged, "non-finite gradient for parameter " + name);

  state.step += 1;
  const double b1 = hyper.beta1;
  const double b2 = hyper.beta2;
  const double mc = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double vc = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (size_t i = 0; i < param.data.size(); ++i) {
    const float g = grad.data[i];
    const float m = state.m.data[i] =
        static_cast<float>(b1 * state.m.data[i] + (1.0 - b1) * g);
    const float v = state.v.data[i] =
        static_cast<float>(b2 * state.v.data[i] + (1.0 - b2) * g * g);
    const double m_hat = m / mc;
    const double v_hat = v / vc;
    param.data[i] -= static_cast<float>(hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps));
  }
}

}  // namespace etl
