#include "etl/mlp.hpp"

#include <cmath>

namespace etl {

void validate_row(const SparseRow& row) {
  for (size_t i = 0; i < row.indices.size(); ++i) {
    require(row.indices[i] < row.dim, ErrorCategory::invalid_shape,
            "sparse row index out of range");
    if (i > 0)
      require(row.indices[i - 1] < row.indices[i], ErrorCategory::invalid_shape,
              "sparse row indices must be strictly increasing");
  }
  require(row.values.size() == row.indices.size(), ErrorCategory::invalid_shape,
          "sparse row values/indices length mismatch");
}

Mlp2Grads zero_grads_like(const Mlp2Params& p) {
  Mlp2Grads g;
  g.w1 = Matrix(p.w1.rows, p.w1.cols);
  g.b1 = Matrix(1, p.b1.cols);
  g.w2 = Matrix(p.w2.rows, p.w2.cols);
  g.b2 = Matrix(1, p.b2.cols);
  return g;
}

void accumulate(Mlp2Grads& into, const Mlp2Grads& from) {
  add_inplace(into.w1, from.w1);
  add_inplace(into.b1, from.b1);
  add_inplace(into.w2, from.w2);
  add_inplace(into.b2, from.b2);
}

Matrix xavier_init(uint32_t rows, uint32_t cols, Rng& rng) {
  require(rows >= 1 && cols >= 1, ErrorCategory::invalid_shape,
          "xavier_init: dimensions must be >= 1");
  const float a = std::sqrt(6.0f / static_cast<float>(rows + cols));
  Matrix m(rows, cols);
  for (float& v : m.data) v = rng.uniform(-a, a);
  return m;
}

namespace {

void apply_hidden_stage(Mlp2Trace& trace, const Mlp2Params& params, float dropout_p,
                        bool training, Rng& rng, Act2 act2) {
  const uint32_t batch = trace.hidden_pre.rows;
  const uint32_t hidden = trace.hidden_pre.cols;

  trace.hidden = Matrix(batch, hidden);
  if (training && dropout_p > 0.0f) {
    trace.dropout_mask = Matrix(batch, hidden);
    const float keep_scale = 1.0f / (1.0f - dropout_p);
    for (size_t i = 0; i < trace.dropout_mask.data.size(); ++i) {
      const bool keep = rng.next_double() >= dropout_p;
      const float m = keep ? keep_scale : 0.0f;
      trace.dropout_mask.data[i] = m;
      const float pre = trace.hidden_pre.data[i];
      trace.hidden.data[i] = pre > 0.0f ? pre * m : 0.0f;
    }
  } else {
    for (size_t i = 0; i < trace.hidden.data.size(); ++i) {
      const float pre = trace.hidden_pre.data[i];
      trace.hidden.data[i] = pre > 0.0f ? pre : 0.0f;
    }
  }

  trace.output = matmul(trace.hidden, params.w2);
  add_bias_rows(trace.output, params.b2);
  trace.act2 = act2;
  if (act2 == Act2::sigmoid) {
    for (float& v : trace.output.data) {
      v = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v))
                    : std::exp(v) / (1.0f + std::exp(v));
    }
  }
}

Matrix sparse_times_w1(std::span<const SparseRow> input, const Mlp2Params& params) {
  const uint32_t hidden = params.hidden_dim();
  Matrix pre(static_cast<uint32_t>(input.size()), hidden);
  for (uint32_t b = 0; b < input.size(); ++b) {
    const SparseRow& row = input[b];
    check_shape(row.dim == params.in_dim(), "mlp2_forward: sparse row dim mismatch");
    float* out = pre.row(b);
    const float* bias = params.b1.row(0);
    for (uint32_t j = 0; j < hidden; ++j) out[j] = bias[j];
    for (size_t t = 0; t < row.indices.size(); ++t) {
      const float* wrow = params.w1.row(row.indices[t]);
      const float v = row.values[t];
      for (uint32_t j = 0; j < hidden; ++j) out[j] += v * wrow[j];
    }
  }
  return pre;
}

}  // namespace

Mlp2Trace mlp2_forward(const Matrix& input, const Mlp2Params& params, float dropout_p,
                       bool training, Rng& rng, Act2 act2) {
  check_shape(input.cols == params.in_dim(), "mlp2_forward: input width mismatch");
  require(dropout_p >= 0.0f && dropout_p < 1.0f, ErrorCategory::config,
          "dropout probability must be in [0, 1)");
  Mlp2Trace trace;
  trace.input_is_sparse = false;
  trace.dense_input = input;
  trace.hidden_pre = matmul(input, params.w1);
  add_bias_rows(trace.hidden_pre, params.b1);
  apply_hidden_stage(trace, params, dropout_p, training, rng, act2);
  return trace;
}

Mlp2Trace mlp2_forward(std::span<const SparseRow> input, const Mlp2Params& params,
                       float dropout_p, bool training, Rng& rng, Act2 act2) {
  require(dropout_p >= 0.0f && dropout_p < 1.0f, ErrorCategory::config,
          "dropout probability must be in [0, 1)");
  Mlp2Trace trace;
  trace.input_is_sparse = true;
  trace.sparse_input.assign(input.begin(), input.end());
  trace.hidden_pre = sparse_times_w1(input, params);
  apply_hidden_stage(trace, params, dropout_p, training, rng, act2);
  return trace;
}

Mlp2Grads mlp2_backward(const Mlp2Trace& trace, const Mlp2Params& params,
                        const Matrix& upstream, Matrix* input_grad) {
  check_shape(upstream.same_shape(trace.output), "mlp2_backward: upstream shape mismatch");

  Matrix d_logits = upstream;
  if (trace.act2 == Act2::sigmoid) {
    for (size_t i = 0; i < d_logits.data.size(); ++i) {
      const float s = trace.output.data[i];
      d_logits.data[i] *= s * (1.0f - s);
    }
  }

  Mlp2Grads grads;
  grads.w2 = matmul_at_b(trace.hidden, d_logits);
  grads.b2 = column_sums(d_logits);

  Matrix d_hidden = matmul_a_bt(d_logits, params.w2);
  // relu and dropout backward
  for (size_t i = 0; i < d_hidden.data.size(); ++i) {
    float g = trace.hidden_pre.data[i] > 0.0f ? d_hidden.data[i] : 0.0f;
    if (!trace.dropout_mask.empty()) g *= trace.dropout_mask.data[i];
    d_hidden.data[i] = g;
  }

  grads.b1 = column_sums(d_hidden);
  if (trace.input_is_sparse) {
    grads.w1 = Matrix(params.w1.rows, params.w1.cols);
    for (uint32_t b = 0; b < trace.sparse_input.size(); ++b) {
      const SparseRow& row = trace.sparse_input[b];
      const float* dh = d_hidden.row(b);
      for (size_t t = 0; t < row.indices.size(); ++t) {
        float* wrow = grads.w1.row(row.indices[t]);
        const float v = row.values[t];
        for (uint32_t j = 0; j < d_hidden.cols; ++j) wrow[j] += v * dh[j];
      }
    }
    check_shape(input_grad == nullptr, "mlp2_backward: input gradient undefined for sparse input");
  } else {
    grads.w1 = matmul_at_b(trace.dense_input, d_hidden);
    if (input_grad != nullptr) *input_grad = matmul_a_bt(d_hidden, params.w1);
  }
  return grads;
}

Matrix mlp2_infer(std::span<const SparseRow> input, const Mlp2Params& params) {
  Matrix pre = sparse_times_w1(input, params);
  for (float& v : pre.data)
    if (v < 0.0f) v = 0.0f;
  Matrix out = matmul(pre, params.w2);
  add_bias_rows(out, params.b2);
  return out;
}

Matrix mlp2_infer(const Matrix& input, const Mlp2Params& params) {
  Matrix pre = matmul(input, params.w1);
  add_bias_rows(pre, params.b1);
  for (float& v : pre.data)
    if (v < 0.0f) v = 0.0f;
  Matrix out = matmul(pre, params.w2);
  add_bias_rows(out, params.b2);
  return out;
}

}  // namespace etl
