#pragma once

#include <span>

#include "etl/matrix.hpp"
#include "etl/rng.hpp"
#include "etl/sparse.hpp"

namespace etl {

// Two-layer perceptron: out = act2(dropout(relu(x*w1 + b1)) * w2 + b2).
// Dropout is inverted (mask values 0 or 1/(1-p)) and applies to the hidden
// layer only, so evaluation needs no rescaling.
struct Mlp2Params {
  Matrix w1;  // in x hidden
  Matrix b1;  // 1 x hidden
  Matrix w2;  // hidden x out
  Matrix b2;  // 1 x out

  uint32_t in_dim() const { return w1.rows; }
  uint32_t hidden_dim() const { return w1.cols; }
  uint32_t out_dim() const { return w2.cols; }
};

enum class Act2 { identity, sigmoid };

struct Mlp2Trace {
  bool input_is_sparse = false;
  Matrix dense_input;                  // when dense
  std::vector<SparseRow> sparse_input; // when sparse
  Matrix hidden_pre;                   // B x hidden, before relu
  Matrix dropout_mask;                 // empty means all-ones
  Matrix hidden;                       // B x hidden, relu * mask
  Matrix output;                       // B x out, after act2
  Act2 act2 = Act2::identity;

  uint32_t batch() const { return hidden.rows; }
};

struct Mlp2Grads {
  Matrix w1, b1, w2, b2;
};

Mlp2Grads zero_grads_like(const Mlp2Params& p);
void accumulate(Mlp2Grads& into, const Mlp2Grads& from);

// Entries drawn uniformly from [-a, a], a = sqrt(6 / (rows + cols)).
Matrix xavier_init(uint32_t rows, uint32_t cols, Rng& rng);

Mlp2Trace mlp2_forward(const Matrix& input, const Mlp2Params& params, float dropout_p,
                       bool training, Rng& rng, Act2 act2);
Mlp2Trace mlp2_forward(std::span<const SparseRow> input, const Mlp2Params& params,
                       float dropout_p, bool training, Rng& rng, Act2 act2);

// Exact gradients for the traced forward pass. input_grad (optional) receives
// d loss / d input for dense inputs.
Mlp2Grads mlp2_backward(const Mlp2Trace& trace, const Mlp2Params& params,
                        const Matrix& upstream, Matrix* input_grad = nullptr);

// Evaluation-mode forward without trace bookkeeping (no dropout, logits out).
Matrix mlp2_infer(std::span<const SparseRow> input, const Mlp2Params& params);
Matrix mlp2_infer(const Matrix& input, const Mlp2Params& params);

}  // namespace etl
