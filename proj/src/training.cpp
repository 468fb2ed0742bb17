#include "etl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "etl/eval.hpp"
#include "etl/losses.hpp"

namespace etl {

Ablation ablation_from_string(const std::string& s) {
  if (s == "full-etl") return Ablation::full_etl;
  if (s == "etl-jrl") return Ablation::etl_jrl;
  if (s == "aae++") return Ablation::aae_pp;
  fail(ErrorCategory::config, "unknown ablation: " + s);
}

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::full_etl: return "full-etl";
    case Ablation::etl_jrl: return "etl-jrl";
    case Ablation::aae_pp: return "aae++";
  }
  return "?";
}

void TrainConfig::validate() const {
  require(lambda >= 0.0f && eta >= 0.0f, ErrorCategory::config,
          "lambda and eta must be >= 0");
  require(batch >= 1, ErrorCategory::config, "batch must be >= 1");
  require(dropout >= 0.0f && dropout < 1.0f, ErrorCategory::config,
          "dropout must be in [0, 1)");
  require(d >= 1 && hidden >= 1 && disc_hidden >= 1, ErrorCategory::config,
          "dimensions must be >= 1");
  require(disc_steps >= 1, ErrorCategory::config, "disc_steps must be >= 1");
  require(eval_interval >= 1, ErrorCategory::config, "eval_interval must be >= 1");
  require(!cutoffs.empty(), ErrorCategory::config, "cutoffs must be nonempty");
}

JrlResult jrl_loss(std::span<const SparseRow> x, std::span<const SparseRow> y,
                   const EtlModel& model, float lambda, Ablation ablation,
                   PenaltyNorm norm, bool training, float dropout_p, Rng& rng) {
  check_shape(x.size() == y.size() && !x.empty(), "jrl_loss: unpaired batch");
  const bool cross = ablation != Ablation::aae_pp;

  JrlResult r;
  Mlp2Trace tr_enc_a =
      mlp2_forward(x, model.enc_a, dropout_p, training, rng, Act2::identity);
  Mlp2Trace tr_enc_b =
      mlp2_forward(y, model.enc_b, dropout_p, training, rng, Act2::identity);
  const Matrix& z_a = tr_enc_a.output;
  const Matrix& z_b = tr_enc_b.output;

  Rng unused(0);  // decoders run without dropout
  Mlp2Trace tr_self_a = mlp2_forward(z_a, model.dec_a, 0.0f, false, unused, Act2::identity);
  Mlp2Trace tr_self_b = mlp2_forward(z_b, model.dec_b, 0.0f, false, unused, Act2::identity);
  BceResult bce_self_a = bce_with_logits(tr_self_a.output, x);
  BceResult bce_self_b = bce_with_logits(tr_self_b.output, y);
  r.recon_self_a = bce_self_a.loss;
  r.recon_self_b = bce_self_b.loss;

  r.grads.transform = zero_grads_like(model.transform);

  Matrix dz_a(z_a.rows, z_a.cols);
  Matrix dz_b(z_b.rows, z_b.cols);

  r.grads.dec_a = mlp2_backward(tr_self_a, model.dec_a, bce_self_a.logit_grad, &dz_a);
  r.grads.dec_b = mlp2_backward(tr_self_b, model.dec_b, bce_self_b.logit_grad, &dz_b);

  if (cross) {
    TransformTrace tt_ab = transform_forward(z_a, model.transform, TransDir::a_to_b);
    TransformTrace tt_ba = transform_forward(z_b, model.transform, TransDir::b_to_a);
    Mlp2Trace tr_cross_a =
        mlp2_forward(tt_ba.output, model.dec_a, 0.0f, false, unused, Act2::identity);
    Mlp2Trace tr_cross_b =
        mlp2_forward(tt_ab.output, model.dec_b, 0.0f, false, unused, Act2::identity);
    BceResult bce_cross_a = bce_with_logits(tr_cross_a.output, x);
    BceResult bce_cross_b = bce_with_logits(tr_cross_b.output, y);
    r.recon_cross_a = bce_cross_a.loss;
    r.recon_cross_b = bce_cross_b.loss;

    Matrix d_t_ba, d_t_ab;
    Mlp2Grads g = mlp2_backward(tr_cross_a, model.dec_a, bce_cross_a.logit_grad, &d_t_ba);
    accumulate(r.grads.dec_a, g);
    g = mlp2_backward(tr_cross_b, model.dec_b, bce_cross_b.logit_grad, &d_t_ab);
    accumulate(r.grads.dec_b, g);

    add_inplace(dz_b, transform_backward(tt_ba, model.transform, d_t_ba, r.grads.transform));
    add_inplace(dz_a, transform_backward(tt_ab, model.transform, d_t_ab, r.grads.transform));

    if (lambda != 0.0f) {
      TransformGrads pen_grads = zero_grads_like(model.transform);
      PenaltyResult pen =
          transform_penalty_backward(z_a, z_b, model.transform, pen_grads, norm);
      r.penalty = pen.value;
      axpy_inplace(dz_a, lambda, pen.d_za);
      axpy_inplace(dz_b, lambda, pen.d_zb);
      auto fold = [&](Matrix& into, const Matrix& from) {
        if (!into.empty()) axpy_inplace(into, lambda, from);
      };
      fold(r.grads.transform.w, pen_grads.w);
      fold(r.grads.transform.w_ab, pen_grads.w_ab);
      fold(r.grads.transform.w_ba, pen_grads.w_ba);
      fold(r.grads.transform.w_ab1, pen_grads.w_ab1);
      fold(r.grads.transform.w_ab2, pen_grads.w_ab2);
      fold(r.grads.transform.w_ba1, pen_grads.w_ba1);
      fold(r.grads.transform.w_ba2, pen_grads.w_ba2);
    } else {
      r.penalty = transform_penalty(z_a, z_b, model.transform, norm);
    }
  }

  r.grads.enc_a = mlp2_backward(tr_enc_a, model.enc_a, dz_a);
  r.grads.enc_b = mlp2_backward(tr_enc_b, model.enc_b, dz_b);

  r.total = r.recon_self_a + r.recon_self_b;
  if (cross)
    r.total += r.recon_cross_a + r.recon_cross_b + double(lambda) * r.penalty;
  require(std::isfinite(r.total), ErrorCategory::training_diverged,
          "non-finite joint reconstruction loss");
  return r;
}

namespace {

// Mean BCE toward a constant target over a column of logits; returns the
// gradient w.r.t. the logits.
double bce_const_target(const Mlp2Trace& trace, float target, Matrix& logit_grad) {
  const Matrix& logits = trace.output;
  logit_grad = Matrix(logits.rows, logits.cols);
  const double inv = 1.0 / static_cast<double>(logits.rows);
  double acc = 0.0;
  for (size_t i = 0; i < logits.data.size(); ++i) {
    const double l = logits.data[i];
    acc += stable_softplus(l) - double(target) * l;
    logit_grad.data[i] = static_cast<float>((sigmoid(l) - target) * inv);
  }
  return acc * inv;
}

}  // namespace

DiscStepResult prl_discriminator_step(const Matrix& z_a, const Matrix& z_b,
                                      const Matrix& prior_a, const Matrix& prior_b,
                                      const EtlModel& model, bool training,
                                      float dropout_p, Rng& rng) {
  check_shape(z_a.cols == model.dims.d && z_b.cols == model.dims.d &&
                  prior_a.cols == model.dims.d && prior_b.cols == model.dims.d,
              "prl_discriminator_step: latent width mismatch");
  DiscStepResult r;
  r.disc_a = zero_grads_like(model.disc_a);
  r.disc_b = zero_grads_like(model.disc_b);

  auto term = [&](const Matrix& input, const Mlp2Params& disc, float target,
                  Mlp2Grads& grads) {
    Mlp2Trace tr = mlp2_forward(input, disc, dropout_p, training, rng, Act2::identity);
    Matrix d_logits;
    const double loss = bce_const_target(tr, target, d_logits);
    accumulate(grads, mlp2_backward(tr, disc, d_logits));
    return loss;
  };

  r.loss += term(prior_a, model.disc_a, 1.0f, r.disc_a);
  r.loss += term(z_a, model.disc_a, 0.0f, r.disc_a);
  r.loss += term(prior_b, model.disc_b, 1.0f, r.disc_b);
  r.loss += term(z_b, model.disc_b, 0.0f, r.disc_b);
  require(std::isfinite(r.loss), ErrorCategory::training_diverged,
          "non-finite discriminator loss");
  return r;
}

GenStepResult prl_generator_step(std::span<const SparseRow> x,
                                 std::span<const SparseRow> y, const EtlModel& model,
                                 float eta, bool training, float dropout_p, Rng& rng) {
  GenStepResult r;
  r.enc_a = zero_grads_like(model.enc_a);
  r.enc_b = zero_grads_like(model.enc_b);
  if (eta == 0.0f) return r;

  auto term = [&](std::span<const SparseRow> rows, const Mlp2Params& enc,
                  const Mlp2Params& disc, Mlp2Grads& enc_grads) {
    Mlp2Trace tr_enc = mlp2_forward(rows, enc, dropout_p, training, rng, Act2::identity);
    Mlp2Trace tr_disc =
        mlp2_forward(tr_enc.output, disc, dropout_p, training, rng, Act2::identity);
    Matrix d_logits;
    const double loss = bce_const_target(tr_disc, 1.0f, d_logits);
    scale_inplace(d_logits, eta);
    Matrix dz;
    mlp2_backward(tr_disc, disc, d_logits, &dz);  // discriminator grads discarded
    accumulate(enc_grads, mlp2_backward(tr_enc, enc, dz));
    return loss;
  };

  r.loss += term(x, model.enc_a, model.disc_a, r.enc_a);
  r.loss += term(y, model.enc_b, model.disc_b, r.enc_b);
  r.loss *= eta;
  require(std::isfinite(r.loss), ErrorCategory::training_diverged,
          "non-finite generator loss");
  return r;
}

namespace {

void update_mlp(AdamOptimizer& opt, const std::string& prefix, Mlp2Params& p,
                const Mlp2Grads& g) {
  opt.update(prefix + ".w1", p.w1, g.w1);
  opt.update(prefix + ".b1", p.b1, g.b1);
  opt.update(prefix + ".w2", p.w2, g.w2);
  opt.update(prefix + ".b2", p.b2, g.b2);
}

void update_transform(AdamOptimizer& opt, TransformParams& p, const TransformGrads& g) {
  auto upd = [&](const char* name, Matrix& param, const Matrix& grad) {
    if (!param.empty()) opt.update(std::string("transform.") + name, param, grad);
  };
  upd("w", p.w, g.w);
  upd("w_ab", p.w_ab, g.w_ab);
  upd("w_ba", p.w_ba, g.w_ba);
  upd("w_ab1", p.w_ab1, g.w_ab1);
  upd("w_ab2", p.w_ab2, g.w_ab2);
  upd("w_ba1", p.w_ba1, g.w_ba1);
  upd("w_ba2", p.w_ba2, g.w_ba2);
}

}  // namespace

EpochStats train_epoch(const PairedDataset& ds, EtlModel& model, AdamOptimizer& opt,
                       const TrainConfig& cfg, Rng& rng, uint32_t epoch_index) {
  require(ds.has_split, ErrorCategory::config, "train_epoch: dataset has no split");
  const uint32_t n = ds.n_users();
  const auto start_time = std::chrono::steady_clock::now();

  std::vector<uint32_t> order(n);
  for (uint32_t i = 0; i < n; ++i) order[i] = i;
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);

  EpochStats stats;
  stats.epoch = epoch_index;
  const uint32_t n_batches = (n + cfg.batch - 1) / cfg.batch;
  stats.n_batches = n_batches;
  const bool adversarial = cfg.ablation != Ablation::etl_jrl;

  std::vector<SparseRow> x, y;
  for (uint32_t bi = 0; bi < n_batches; ++bi) {
    const uint32_t lo = bi * cfg.batch;
    const uint32_t hi = std::min(n, lo + cfg.batch);
    x.clear();
    y.clear();
    for (uint32_t i = lo; i < hi; ++i) {
      x.push_back(ds.domain_a.rows[order[i]]);
      y.push_back(ds.domain_b.rows[order[i]]);
    }
    const uint32_t bsize = hi - lo;

    JrlResult jrl = jrl_loss(x, y, model, cfg.lambda, cfg.ablation, cfg.penalty_norm,
                             true, cfg.dropout, rng);
    stats.jrl += jrl.total;
    stats.penalty += jrl.penalty;
    update_mlp(opt, "enc_a", model.enc_a, jrl.grads.enc_a);
    update_mlp(opt, "enc_b", model.enc_b, jrl.grads.enc_b);
    update_mlp(opt, "dec_a", model.dec_a, jrl.grads.dec_a);
    update_mlp(opt, "dec_b", model.dec_b, jrl.grads.dec_b);
    if (cfg.ablation != Ablation::aae_pp)
      update_transform(opt, model.transform, jrl.grads.transform);

    if (adversarial) {
      const PriorSpec prior{cfg.prior, model.dims.d};
      Matrix z_a = encode(x, Domain::a, model, true, cfg.dropout, rng);
      Matrix z_b = encode(y, Domain::b, model, true, cfg.dropout, rng);
      double disc_loss = 0.0;
      for (uint32_t s = 0; s < cfg.disc_steps; ++s) {
        Matrix prior_a = sample_prior(prior, bsize, rng);
        Matrix prior_b = sample_prior(prior, bsize, rng);
        DiscStepResult d = prl_discriminator_step(z_a, z_b, prior_a, prior_b, model,
                                                  true, cfg.dropout, rng);
        update_mlp(opt, "disc_a", model.disc_a, d.disc_a);
        update_mlp(opt, "disc_b", model.disc_b, d.disc_b);
        disc_loss = d.loss;
      }
      stats.disc += disc_loss;

      if (cfg.eta != 0.0f) {
        GenStepResult g = prl_generator_step(x, y, model, cfg.eta, true, cfg.dropout, rng);
        stats.gen += g.loss;
        update_mlp(opt, "enc_a", model.enc_a, g.enc_a);
        update_mlp(opt, "enc_b", model.enc_b, g.enc_b);
      }
    }
  }

  stats.jrl /= n_batches;
  stats.penalty /= n_batches;
  stats.disc /= n_batches;
  stats.gen /= n_batches;
  stats.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - start_time)
                      .count();
  return stats;
}

FitResult fit(const PairedDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  require(ds.has_split, ErrorCategory::config, "fit: dataset has no split");

  Rng rng(cfg.seed);
  ModelDims dims{cfg.d, cfg.hidden, cfg.disc_hidden, ds.domain_a.n_items,
                 ds.domain_b.n_items};
  EtlModel model = init_model(dims, cfg.transform, rng, cfg.trans_act);
  AdamOptimizer opt(AdamHyper{cfg.lr, 0.9f, 0.999f, 1e-8f});

  FitResult result;
  result.best_model = model;
  result.best_epoch = 0;
  result.best_val_ndcg = -1.0;

  const uint32_t k10 = 10;
  auto validate_now = [&](uint32_t epoch) {
    const std::vector<uint32_t> ks{k10};
    MetricsReport rep = evaluate(model, ds, Phase::val, ks);
    ValPoint vp;
    vp.epoch = epoch;
    vp.ndcg_a = rep.get(Domain::a, Phase::val, "ndcg", k10);
    vp.ndcg_b = rep.get(Domain::b, Phase::val, "ndcg", k10);
    result.val_points.push_back(vp);
    const double mean_ndcg = 0.5 * (vp.ndcg_a + vp.ndcg_b);
    if (mean_ndcg > result.best_val_ndcg) {
      result.best_val_ndcg = mean_ndcg;
      result.best_model = model;
      result.best_epoch = epoch;
    }
  };

  if (cfg.epochs == 0) {
    validate_now(0);
    return result;
  }

  for (uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    result.stats.push_back(train_epoch(ds, model, opt, cfg, rng, epoch));
    if (cfg.reorth_every > 0 && model.transform.kind == TransformKind::trans5 &&
        epoch % cfg.reorth_every == 0)
      reorthogonalize(model.transform.w);
    if (epoch % cfg.eval_interval == 0 || epoch == cfg.epochs) validate_now(epoch);
  }
  return result;
}

void write_log_csv(const std::string& path, const FitResult& fit) {
  std::ofstream out(path);
  require(out.good(), ErrorCategory::io, "cannot write " + path);
  out << "epoch,jrl,penalty,disc,gen,val_ndcg10_a,val_ndcg10_b\n";
  size_t vi = 0;
  char buf[256];
  for (const EpochStats& s : fit.stats) {
    while (vi < fit.val_points.size() && fit.val_points[vi].epoch < s.epoch) ++vi;
    std::string val_a, val_b;
    if (vi < fit.val_points.size() && fit.val_points[vi].epoch == s.epoch) {
      std::snprintf(buf, sizeof(buf), "%.6f", fit.val_points[vi].ndcg_a);
      val_a = buf;
      std::snprintf(buf, sizeof(buf), "%.6f", fit.val_points[vi].ndcg_b);
      val_b = buf;
    }
    std::snprintf(buf, sizeof(buf), "%u,%.6f,%.6f,%.6f,%.6f,", s.epoch, s.jrl,
                  s.penalty, s.disc, s.gen);
    out << buf << val_a << ',' << val_b << '\n';
  }
}

}  // namespace etl
