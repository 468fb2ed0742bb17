#pragma once

#include <optional>
#include <span>
#include <vector>

#include "etl/adam.hpp"
#include "etl/dataio.hpp"
#include "etl/model.hpp"

namespace etl {

// full_etl: joint reconstruction + adversarial prior matching.
// etl_jrl:  reconstruction only, discriminators untouched.
// aae_pp:   per-domain adversarial auto-encoders, no cross generation or
//           transform penalty.
enum class Ablation { full_etl, etl_jrl, aae_pp };

Ablation ablation_from_string(const std::string& s);
const char* to_string(Ablation a);

struct TrainConfig {
  uint32_t d = 200;
  uint32_t hidden = 400;
  uint32_t disc_hidden = 100;
  float lr = 0.001f;
  uint32_t batch = 256;
  uint32_t epochs = 300;
  float dropout = 0.5f;
  float lambda = 1.0f;
  float eta = 1.0f;
  PriorKind prior = PriorKind::gaussian;
  TransformKind transform = TransformKind::trans5;
  TransAct trans_act = TransAct::relu;
  PenaltyNorm penalty_norm = PenaltyNorm::l1;
  Ablation ablation = Ablation::full_etl;
  uint64_t seed = 1;
  std::vector<uint32_t> cutoffs = {5, 10};
  uint32_t disc_steps = 1;
  uint32_t eval_interval = 1;   // validate every n epochs
  uint32_t reorth_every = 0;    // 0 = off; QR re-orthogonalization for trans5

  void validate() const;
};

struct EpochStats {
  uint32_t epoch = 0;
  uint32_t n_batches = 0;
  double jrl = 0.0;      // mean total jrl loss over batches
  double penalty = 0.0;  // mean unweighted transform penalty
  double disc = 0.0;     // mean discriminator loss
  double gen = 0.0;      // mean generator loss
  double wall_ms = 0.0;
};

struct EtlGrads {
  Mlp2Grads enc_a, enc_b, dec_a, dec_b;
  TransformGrads transform;
};

struct JrlResult {
  double total = 0.0;
  double recon_self_a = 0.0, recon_cross_a = 0.0;
  double recon_self_b = 0.0, recon_cross_b = 0.0;
  double penalty = 0.0;  // unweighted
  EtlGrads grads;
};

// Four-term reconstruction loss plus lambda * transform penalty. The aae_pp
// ablation evaluates only the two within-domain terms.
JrlResult jrl_loss(std::span<const SparseRow> x, std::span<const SparseRow> y,
                   const EtlModel& model, float lambda, Ablation ablation,
                   PenaltyNorm norm, bool training, float dropout_p, Rng& rng);

struct DiscStepResult {
  double loss = 0.0;
  Mlp2Grads disc_a, disc_b;
};

// BCE pushing D(prior) -> 1 and D(encoded) -> 0 over both domains; latents
// are treated as constants.
DiscStepResult prl_discriminator_step(const Matrix& z_a, const Matrix& z_b,
                                      const Matrix& prior_a, const Matrix& prior_b,
                                      const EtlModel& model, bool training,
                                      float dropout_p, Rng& rng);

struct GenStepResult {
  double loss = 0.0;
  Mlp2Grads enc_a, enc_b;
};

// Non-saturating generator loss eta * (-E[log D(enc(x))] - E[log D(enc(y))]);
// discriminators stay frozen.
GenStepResult prl_generator_step(std::span<const SparseRow> x,
                                 std::span<const SparseRow> y, const EtlModel& model,
                                 float eta, bool training, float dropout_p, Rng& rng);

EpochStats train_epoch(const PairedDataset& ds, EtlModel& model, AdamOptimizer& opt,
                       const TrainConfig& cfg, Rng& rng, uint32_t epoch_index);

struct ValPoint {
  uint32_t epoch = 0;
  double ndcg_a = 0.0;
  double ndcg_b = 0.0;
};

struct FitResult {
  EtlModel best_model;
  uint32_t best_epoch = 0;
  double best_val_ndcg = 0.0;
  std::vector<EpochStats> stats;
  std::vector<ValPoint> val_points;
};

// Trains for cfg.epochs epochs, validating NDCG@10 (mean of both domains)
// every eval_interval epochs and keeping the best checkpoint.
FitResult fit(const PairedDataset& ds, const TrainConfig& cfg);

// One CSV line per epoch: epoch,jrl,penalty,disc,gen,val_ndcg10_a,val_ndcg10_b.
// Validation columns are empty on epochs without validation. Wall-clock stays
// out of this file so reruns are byte-identical.
void write_log_csv(const std::string& path, const FitResult& fit);

}  // namespace etl
