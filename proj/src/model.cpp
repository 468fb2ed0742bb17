#include "etl/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "etl/losses.hpp"

namespace etl {

TransformKind transform_kind_from_string(const std::string& s) {
  if (s == "trans1") return TransformKind::trans1;
  if (s == "trans2") return TransformKind::trans2;
  if (s == "trans3") return TransformKind::trans3;
  if (s == "trans4") return TransformKind::trans4;
  if (s == "trans5") return TransformKind::trans5;
  fail(ErrorCategory::config, "unknown transform kind: " + s);
}

const char* to_string(TransformKind k) {
  switch (k) {
    case TransformKind::trans1: return "trans1";
    case TransformKind::trans2: return "trans2";
    case TransformKind::trans3: return "trans3";
    case TransformKind::trans4: return "trans4";
    case TransformKind::trans5: return "trans5";
  }
  return "?";
}

PriorKind prior_kind_from_string(const std::string& s) {
  if (s == "gaussian") return PriorKind::gaussian;
  if (s == "laplace") return PriorKind::laplace;
  if (s == "uniform") return PriorKind::uniform;
  if (s == "mvgaussian") return PriorKind::mvgaussian;
  fail(ErrorCategory::config, "unknown prior kind: " + s);
}

const char* to_string(PriorKind k) {
  switch (k) {
    case PriorKind::gaussian: return "gaussian";
    case PriorKind::laplace: return "laplace";
    case PriorKind::uniform: return "uniform";
    case PriorKind::mvgaussian: return "mvgaussian";
  }
  return "?";
}

TransformParams make_transform(TransformKind kind, uint32_t d, Rng& rng, TransAct act) {
  TransformParams p;
  p.kind = kind;
  p.act = act;
  switch (kind) {
    case TransformKind::trans1:
    case TransformKind::trans3:
      p.w_ab = xavier_init(d, d, rng);
      p.w_ba = xavier_init(d, d, rng);
      break;
    case TransformKind::trans2:
    case TransformKind::trans4:
      p.w_ab1 = xavier_init(d, d, rng);
      p.w_ab2 = xavier_init(d, d, rng);
      p.w_ba1 = xavier_init(d, d, rng);
      p.w_ba2 = xavier_init(d, d, rng);
      break;
    case TransformKind::trans5:
      p.w = xavier_init(d, d, rng);
      break;
  }
  return p;
}

TransformGrads zero_grads_like(const TransformParams& p) {
  TransformGrads g;
  auto zero = [](const Matrix& m) { return Matrix(m.rows, m.cols); };
  g.w = zero(p.w);
  g.w_ab = zero(p.w_ab);
  g.w_ba = zero(p.w_ba);
  g.w_ab1 = zero(p.w_ab1);
  g.w_ab2 = zero(p.w_ab2);
  g.w_ba1 = zero(p.w_ba1);
  g.w_ba2 = zero(p.w_ba2);
  return g;
}

namespace {

void apply_act(Matrix& m, const Matrix& pre, TransAct act) {
  if (act == TransAct::relu) {
    for (size_t i = 0; i < m.data.size(); ++i)
      m.data[i] = pre.data[i] > 0.0f ? pre.data[i] : 0.0f;
  } else {
    for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = std::tanh(pre.data[i]);
  }
}

void act_backward_inplace(Matrix& grad, const TransformTrace& trace, TransAct act) {
  if (act == TransAct::relu) {
    for (size_t i = 0; i < grad.data.size(); ++i)
      if (trace.hidden_pre.data[i] <= 0.0f) grad.data[i] = 0.0f;
  } else {
    for (size_t i = 0; i < grad.data.size(); ++i) {
      const float h = trace.hidden.data[i];
      grad.data[i] *= 1.0f - h * h;
    }
  }
}

}  // namespace

TransformTrace transform_forward(const Matrix& z, const TransformParams& params,
                                 TransDir dir) {
  TransformTrace t;
  t.dir = dir;
  t.input = z;
  const bool ab = dir == TransDir::a_to_b;
  switch (params.kind) {
    case TransformKind::trans1:
    case TransformKind::trans3:
      t.output = matmul(z, ab ? params.w_ab : params.w_ba);
      break;
    case TransformKind::trans2:
    case TransformKind::trans4: {
      t.hidden_pre = matmul(z, ab ? params.w_ab1 : params.w_ba1);
      t.hidden = Matrix(t.hidden_pre.rows, t.hidden_pre.cols);
      apply_act(t.hidden, t.hidden_pre, params.act);
      t.output = matmul(t.hidden, ab ? params.w_ab2 : params.w_ba2);
      break;
    }
    case TransformKind::trans5:
      // a->b: z W^T, b->a: z W
      t.output = ab ? matmul_a_bt(z, params.w) : matmul(z, params.w);
      break;
  }
  return t;
}

Matrix transform_backward(const TransformTrace& trace, const TransformParams& params,
                          const Matrix& upstream, TransformGrads& grads) {
  check_shape(upstream.same_shape(trace.output), "transform_backward: shape mismatch");
  const bool ab = trace.dir == TransDir::a_to_b;
  switch (params.kind) {
    case TransformKind::trans1:
    case TransformKind::trans3: {
      const Matrix& w = ab ? params.w_ab : params.w_ba;
      Matrix& gw = ab ? grads.w_ab : grads.w_ba;
      add_inplace(gw, matmul_at_b(trace.input, upstream));
      return matmul_a_bt(upstream, w);
    }
    case TransformKind::trans2:
    case TransformKind::trans4: {
      const Matrix& w1 = ab ? params.w_ab1 : params.w_ba1;
      const Matrix& w2 = ab ? params.w_ab2 : params.w_ba2;
      Matrix& gw1 = ab ? grads.w_ab1 : grads.w_ba1;
      Matrix& gw2 = ab ? grads.w_ab2 : grads.w_ba2;
      add_inplace(gw2, matmul_at_b(trace.hidden, upstream));
      Matrix d_hidden = matmul_a_bt(upstream, w2);
      act_backward_inplace(d_hidden, trace, params.act);
      add_inplace(gw1, matmul_at_b(trace.input, d_hidden));
      return matmul_a_bt(d_hidden, w1);
    }
    case TransformKind::trans5: {
      if (ab) {
        // output = z W^T: dW += upstream^T z, dz = upstream W
        add_inplace(grads.w, matmul_at_b(upstream, trace.input));
        return matmul(upstream, params.w);
      }
      // output = z W: dW += z^T upstream, dz = upstream W^T
      add_inplace(grads.w, matmul_at_b(trace.input, upstream));
      return matmul_a_bt(upstream, params.w);
    }
  }
  fail(ErrorCategory::config, "transform_backward: unknown kind");
}

Matrix transform_apply(const Matrix& z, const TransformParams& params, TransDir dir) {
  return transform_forward(z, params, dir).output;
}

namespace {

bool has_cycle_penalty(TransformKind k) {
  return k == TransformKind::trans3 || k == TransformKind::trans4 ||
         k == TransformKind::trans5;
}

// Norm of the residual matrix and d penalty / d residual, both already
// divided by the batch size.
double residual_norm_and_grad(const Matrix& diff, PenaltyNorm norm, Matrix* grad) {
  const double inv_batch = 1.0 / static_cast<double>(diff.rows);
  if (norm == PenaltyNorm::l1) {
    if (grad != nullptr) {
      *grad = Matrix(diff.rows, diff.cols);
      for (size_t i = 0; i < diff.data.size(); ++i) {
        const float v = diff.data[i];
        (*grad).data[i] =
            v > 0.0f ? static_cast<float>(inv_batch)
                     : (v < 0.0f ? -static_cast<float>(inv_batch) : 0.0f);
      }
    }
    return l1_norm(diff) * inv_batch;
  }
  const double fro = frobenius_norm(diff);
  if (grad != nullptr) {
    *grad = Matrix(diff.rows, diff.cols);
    if (fro > 0.0) {
      const float s = static_cast<float>(inv_batch / fro);
      for (size_t i = 0; i < diff.data.size(); ++i) (*grad).data[i] = s * diff.data[i];
    }
  }
  return fro * inv_batch;
}

}  // namespace

double transform_penalty(const Matrix& z_a, const Matrix& z_b,
                         const TransformParams& params, PenaltyNorm norm) {
  check_shape(z_a.cols == z_b.cols, "transform_penalty: latent width mismatch");
  if (!has_cycle_penalty(params.kind)) return 0.0;

  double total = 0.0;
  auto one_direction = [&](const Matrix& z, TransDir fwd, TransDir back) {
    Matrix cycled = transform_apply(transform_apply(z, params, fwd), params, back);
    Matrix diff = z;
    sub_inplace(diff, cycled);
    total += residual_norm_and_grad(diff, norm, nullptr);
  };
  one_direction(z_a, TransDir::a_to_b, TransDir::b_to_a);
  one_direction(z_b, TransDir::b_to_a, TransDir::a_to_b);
  return total;
}

PenaltyResult transform_penalty_backward(const Matrix& z_a, const Matrix& z_b,
                                         const TransformParams& params,
                                         TransformGrads& grads, PenaltyNorm norm) {
  PenaltyResult r;
  r.d_za = Matrix(z_a.rows, z_a.cols);
  r.d_zb = Matrix(z_b.rows, z_b.cols);
  if (!has_cycle_penalty(params.kind)) return r;

  auto one_direction = [&](const Matrix& z, TransDir fwd, TransDir back, Matrix& dz) {
    TransformTrace t1 = transform_forward(z, params, fwd);
    TransformTrace t2 = transform_forward(t1.output, params, back);
    Matrix diff = z;
    sub_inplace(diff, t2.output);
    Matrix d_diff;
    r.value += residual_norm_and_grad(diff, norm, &d_diff);
    // diff = z - cycled: the direct term adds d_diff, the cycle subtracts it.
    add_inplace(dz, d_diff);
    scale_inplace(d_diff, -1.0f);
    Matrix d_t1 = transform_backward(t2, params, d_diff, grads);
    add_inplace(dz, transform_backward(t1, params, d_t1, grads));
  };
  one_direction(z_a, TransDir::a_to_b, TransDir::b_to_a, r.d_za);
  one_direction(z_b, TransDir::b_to_a, TransDir::a_to_b, r.d_zb);
  return r;
}

void reorthogonalize(Matrix& w) {
  check_shape(w.rows == w.cols, "reorthogonalize: matrix must be square");
  const uint32_t d = w.rows;
  // Modified Gram-Schmidt on columns, in double.
  std::vector<std::vector<double>> q(d, std::vector<double>(d));
  for (uint32_t j = 0; j < d; ++j)
    for (uint32_t i = 0; i < d; ++i) q[j][i] = w.at(i, j);
  for (uint32_t j = 0; j < d; ++j) {
    for (uint32_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (uint32_t i = 0; i < d; ++i) dot += q[k][i] * q[j][i];
      for (uint32_t i = 0; i < d; ++i) q[j][i] -= dot * q[k][i];
    }
    double nrm = 0.0;
    for (uint32_t i = 0; i < d; ++i) nrm += q[j][i] * q[j][i];
    nrm = std::sqrt(nrm);
    require(nrm > 1e-12, ErrorCategory::training_diverged,
            "reorthogonalize: rank-deficient transform matrix");
    for (uint32_t i = 0; i < d; ++i) q[j][i] /= nrm;
  }
  for (uint32_t j = 0; j < d; ++j)
    for (uint32_t i = 0; i < d; ++i) w.at(i, j) = static_cast<float>(q[j][i]);
}

Matrix sample_prior(const PriorSpec& spec, uint32_t n, Rng& rng) {
  require(n >= 1 && spec.d >= 1, ErrorCategory::config,
          "sample_prior: need n >= 1 and d >= 1");
  Matrix out(n, spec.d);
  switch (spec.kind) {
    case PriorKind::gaussian:
      for (float& v : out.data) v = static_cast<float>(rng.gaussian());
      break;
    case PriorKind::laplace:
      for (float& v : out.data) v = static_cast<float>(rng.laplace());
      break;
    case PriorKind::uniform:
      for (float& v : out.data) v = static_cast<float>(rng.next_double());
      break;
    case PriorKind::mvgaussian:
      for (float& v : out.data)
        v = static_cast<float>(rng.gaussian() + (3.0 + rng.gaussian()));
      break;
  }
  return out;
}

namespace {

Mlp2Params init_mlp(uint32_t in, uint32_t hidden, uint32_t out, Rng& rng) {
  Mlp2Params p;
  p.w1 = xavier_init(in, hidden, rng);
  p.b1 = Matrix(1, hidden);
  p.w2 = xavier_init(hidden, out, rng);
  p.b2 = Matrix(1, out);
  return p;
}

}  // namespace

EtlModel init_model(const ModelDims& dims, TransformKind kind, Rng& rng, TransAct act) {
  require(dims.n_items_a >= 1 && dims.n_items_b >= 1 && dims.d >= 1 &&
              dims.hidden >= 1 && dims.disc_hidden >= 1,
          ErrorCategory::config, "init_model: all dimensions must be >= 1");
  EtlModel m;
  m.dims = dims;
  m.enc_a = init_mlp(dims.n_items_a, dims.hidden, dims.d, rng);
  m.enc_b = init_mlp(dims.n_items_b, dims.hidden, dims.d, rng);
  m.dec_a = init_mlp(dims.d, dims.hidden, dims.n_items_a, rng);
  m.dec_b = init_mlp(dims.d, dims.hidden, dims.n_items_b, rng);
  m.transform = make_transform(kind, dims.d, rng, act);
  m.disc_a = init_mlp(dims.d, dims.disc_hidden, 1, rng);
  m.disc_b = init_mlp(dims.d, dims.disc_hidden, 1, rng);
  return m;
}

Matrix encode(std::span<const SparseRow> rows, Domain which, const EtlModel& model,
              bool training, float dropout_p, Rng& rng) {
  const Mlp2Params& enc = which == Domain::a ? model.enc_a : model.enc_b;
  if (!training)
    return mlp2_infer(rows, enc);
  return mlp2_forward(rows, enc, dropout_p, true, rng, Act2::identity).output;
}

Matrix decode(const Matrix& z, Domain which, const EtlModel& model) {
  const Mlp2Params& dec = which == Domain::a ? model.dec_a : model.dec_b;
  return mlp2_infer(z, dec);
}

Matrix discriminate(const Matrix& z, Domain which, const EtlModel& model,
                    bool training, float dropout_p, Rng& rng) {
  const Mlp2Params& disc = which == Domain::a ? model.disc_a : model.disc_b;
  Matrix logits = training
                      ? mlp2_forward(z, disc, dropout_p, true, rng, Act2::identity).output
                      : mlp2_infer(z, disc);
  for (float& v : logits.data) v = static_cast<float>(sigmoid(v));
  return logits;
}

namespace {

struct Fnv1a32 {
  uint64_t h = 1469598103934665603ULL;
  void u32(uint32_t v) {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(&v);
    for (size_t i = 0; i < sizeof(v); ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  }
  uint32_t fold() const { return static_cast<uint32_t>(h ^ (h >> 32)); }
};

using NamedTensor = std::pair<std::string, const Matrix*>;

std::vector<NamedTensor> named_tensors(const EtlModel& m) {
  std::vector<NamedTensor> out;
  auto add_mlp = [&](const char* prefix, const Mlp2Params& p) {
    out.emplace_back(std::string(prefix) + ".w1", &p.w1);
    out.emplace_back(std::string(prefix) + ".b1", &p.b1);
    out.emplace_back(std::string(prefix) + ".w2", &p.w2);
    out.emplace_back(std::string(prefix) + ".b2", &p.b2);
  };
  add_mlp("enc_a", m.enc_a);
  add_mlp("enc_b", m.enc_b);
  add_mlp("dec_a", m.dec_a);
  add_mlp("dec_b", m.dec_b);
  add_mlp("disc_a", m.disc_a);
  add_mlp("disc_b", m.disc_b);
  switch (m.transform.kind) {
    case TransformKind::trans1:
    case TransformKind::trans3:
      out.emplace_back("transform.w_ab", &m.transform.w_ab);
      out.emplace_back("transform.w_ba", &m.transform.w_ba);
      break;
    case TransformKind::trans2:
    case TransformKind::trans4:
      out.emplace_back("transform.w_ab1", &m.transform.w_ab1);
      out.emplace_back("transform.w_ab2", &m.transform.w_ab2);
      out.emplace_back("transform.w_ba1", &m.transform.w_ba1);
      out.emplace_back("transform.w_ba2", &m.transform.w_ba2);
      break;
    case TransformKind::trans5:
      out.emplace_back("transform.w", &m.transform.w);
      break;
  }
  return out;
}

}  // namespace

uint32_t model_config_hash(const EtlModel& model) {
  Fnv1a32 f;
  f.u32(model.dims.d);
  f.u32(model.dims.hidden);
  f.u32(model.dims.disc_hidden);
  f.u32(model.dims.n_items_a);
  f.u32(model.dims.n_items_b);
  f.u32(static_cast<uint32_t>(model.transform.kind));
  if (model.transform.kind == TransformKind::trans2 ||
      model.transform.kind == TransformKind::trans4)
    f.u32(static_cast<uint32_t>(model.transform.act));
  return f.fold();
}

void save_checkpoint(const EtlModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCategory::io, "cannot write checkpoint: " + path);
  out.write("ETL1", 4);
  const auto tensors = named_tensors(model);
  uint32_t count = static_cast<uint32_t>(tensors.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& [name, m] : tensors) {
    uint32_t name_len = static_cast<uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&name_len), 4);
    out.write(name.data(), name_len);
    uint32_t ndims = 2;
    out.write(reinterpret_cast<const char*>(&ndims), 4);
    out.write(reinterpret_cast<const char*>(&m->rows), 4);
    out.write(reinterpret_cast<const char*>(&m->cols), 4);
    out.write(reinterpret_cast<const char*>(m->data.data()),
              static_cast<std::streamsize>(m->data.size() * sizeof(float)));
  }
  uint32_t hash = model_config_hash(model);
  out.write(reinterpret_cast<const char*>(&hash), 4);
  require(out.good(), ErrorCategory::io, "short write on checkpoint: " + path);
}

EtlModel load_checkpoint(const std::string& path, TransAct act) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCategory::io, "cannot read checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, "ETL1", 4) == 0, ErrorCategory::format,
          "bad checkpoint magic in " + path);

  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  require(in.good() && count >= 25 && count <= 32, ErrorCategory::format,
          "unexpected tensor count in " + path);

  std::map<std::string, Matrix> tensors;
  for (uint32_t t = 0; t < count; ++t) {
    uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), 4);
    require(in.good() && name_len > 0 && name_len < 256, ErrorCategory::format,
            "bad tensor name length in " + path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint32_t ndims = 0;
    in.read(reinterpret_cast<char*>(&ndims), 4);
    require(in.good() && ndims == 2, ErrorCategory::format,
            "unsupported tensor rank in " + path);
    uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    require(in.good() && rows >= 1 && cols >= 1, ErrorCategory::format,
            "bad tensor shape in " + path);
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    require(in.good(), ErrorCategory::format, "truncated tensor data in " + path);
    tensors.emplace(std::move(name), std::move(m));
  }
  uint32_t stored_hash = 0;
  in.read(reinterpret_cast<char*>(&stored_hash), 4);
  require(in.good(), ErrorCategory::format, "missing config hash in " + path);

  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    require(it != tensors.end(), ErrorCategory::format,
            "checkpoint missing tensor " + name);
    return std::move(it->second);
  };
  auto take_mlp = [&](const std::string& prefix) {
    Mlp2Params p;
    p.w1 = take(prefix + ".w1");
    p.b1 = take(prefix + ".b1");
    p.w2 = take(prefix + ".w2");
    p.b2 = take(prefix + ".b2");
    return p;
  };

  EtlModel m;
  m.enc_a = take_mlp("enc_a");
  m.enc_b = take_mlp("enc_b");
  m.dec_a = take_mlp("dec_a");
  m.dec_b = take_mlp("dec_b");
  m.disc_a = take_mlp("disc_a");
  m.disc_b = take_mlp("disc_b");

  m.transform.act = act;
  if (tensors.count("transform.w")) {
    m.transform.kind = TransformKind::trans5;
    m.transform.w = take("transform.w");
  } else if (tensors.count("transform.w_ab1")) {
    m.transform.kind = TransformKind::trans4;
    m.transform.w_ab1 = take("transform.w_ab1");
    m.transform.w_ab2 = take("transform.w_ab2");
    m.transform.w_ba1 = take("transform.w_ba1");
    m.transform.w_ba2 = take("transform.w_ba2");
  } else {
    m.transform.kind = TransformKind::trans1;
    m.transform.w_ab = take("transform.w_ab");
    m.transform.w_ba = take("transform.w_ba");
  }

  m.dims.d = m.enc_a.w2.cols;
  m.dims.hidden = m.enc_a.w1.cols;
  m.dims.disc_hidden = m.disc_a.w1.cols;
  m.dims.n_items_a = m.enc_a.w1.rows;
  m.dims.n_items_b = m.enc_b.w1.rows;

  // The stored hash distinguishes trans1/trans3 and trans2/trans4, which
  // share tensor layouts: try the sibling kind before giving up.
  if (model_config_hash(m) != stored_hash) {
    if (m.transform.kind == TransformKind::trans1)
      m.transform.kind = TransformKind::trans3;
    else if (m.transform.kind == TransformKind::trans4)
      m.transform.kind = TransformKind::trans2;
    require(model_config_hash(m) == stored_hash, ErrorCategory::format,
            "checkpoint config hash mismatch in " + path);
  }
  return m;
}

}  // namespace etl
