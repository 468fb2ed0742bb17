#pragma once

#include <span>
#include <string>

#include "etl/mlp.hpp"

namespace etl {

// Latent transformation family. trans1/trans2 are unconstrained (no cycle
// penalty), trans3/trans4 add a cycle-consistency penalty, trans5 is the
// orthogonal map: a->b applies W^T, b->a applies W, penalty drives W^T W -> I.
enum class TransformKind { trans1, trans2, trans3, trans4, trans5 };
enum class TransAct { relu, tanh };
enum class TransDir { a_to_b, b_to_a };
enum class PenaltyNorm { l1, frobenius };

TransformKind transform_kind_from_string(const std::string& s);
const char* to_string(TransformKind k);

struct TransformParams {
  TransformKind kind = TransformKind::trans5;
  TransAct act = TransAct::relu;        // trans2/trans4 hidden activation
  Matrix w;                             // trans5
  Matrix w_ab, w_ba;                    // trans1, trans3
  Matrix w_ab1, w_ab2, w_ba1, w_ba2;    // trans2, trans4
};

struct TransformGrads {
  Matrix w, w_ab, w_ba, w_ab1, w_ab2, w_ba1, w_ba2;
};

TransformParams make_transform(TransformKind kind, uint32_t d, Rng& rng,
                               TransAct act = TransAct::relu);
TransformGrads zero_grads_like(const TransformParams& p);

struct TransformTrace {
  TransDir dir = TransDir::a_to_b;
  Matrix input;
  Matrix hidden_pre;  // nonlinear kinds only
  Matrix hidden;
  Matrix output;
};

TransformTrace transform_forward(const Matrix& z, const TransformParams& params,
                                 TransDir dir);
// Returns d loss / d input and accumulates parameter gradients.
Matrix transform_backward(const TransformTrace& trace, const TransformParams& params,
                          const Matrix& upstream, TransformGrads& grads);

// Convenience wrapper around transform_forward.
Matrix transform_apply(const Matrix& z, const TransformParams& params, TransDir dir);

struct PenaltyResult {
  double value = 0.0;
  Matrix d_za, d_zb;  // unscaled gradients (caller applies lambda)
};

// Cycle-consistency penalty: mean over the batch of per-row norms of
// z - back(fwd(z)), summed over both directions. Zero for trans1/trans2.
double transform_penalty(const Matrix& z_a, const Matrix& z_b,
                         const TransformParams& params,
                         PenaltyNorm norm = PenaltyNorm::l1);
PenaltyResult transform_penalty_backward(const Matrix& z_a, const Matrix& z_b,
                                         const TransformParams& params,
                                         TransformGrads& grads,
                                         PenaltyNorm norm = PenaltyNorm::l1);

// Replaces W (trans5) with the orthogonal factor of its QR decomposition.
void reorthogonalize(Matrix& w);

enum class PriorKind { gaussian, laplace, uniform, mvgaussian };

PriorKind prior_kind_from_string(const std::string& s);
const char* to_string(PriorKind k);

struct PriorSpec {
  PriorKind kind = PriorKind::gaussian;
  uint32_t d = 0;
};

// i.i.d. entries per kind; mvgaussian entries are N(0,1) + N(3,1).
Matrix sample_prior(const PriorSpec& spec, uint32_t n, Rng& rng);

struct ModelDims {
  uint32_t d = 200;
  uint32_t hidden = 400;       // encoder/decoder hidden width
  uint32_t disc_hidden = 100;  // discriminator hidden width
  uint32_t n_items_a = 0;
  uint32_t n_items_b = 0;
};

enum class Domain { a, b };

struct EtlModel {
  ModelDims dims;
  Mlp2Params enc_a, enc_b;    // items -> hidden -> d
  Mlp2Params dec_a, dec_b;    // d -> hidden -> items (logits)
  Mlp2Params disc_a, disc_b;  // d -> hidden -> 1 (logit)
  TransformParams transform;
};

EtlModel init_model(const ModelDims& dims, TransformKind kind, Rng& rng,
                    TransAct act = TransAct::relu);

// Latent codes for a batch of behavior rows; dropout active only in training.
Matrix encode(std::span<const SparseRow> rows, Domain which, const EtlModel& model,
              bool training, float dropout_p, Rng& rng);
// Item logits for a latent batch (sigmoid lives in the loss / scoring).
Matrix decode(const Matrix& z, Domain which, const EtlModel& model);
// P(real) in (0,1) per row.
Matrix discriminate(const Matrix& z, Domain which, const EtlModel& model,
                    bool training, float dropout_p, Rng& rng);

// Compatibility hash stored in checkpoints (folded FNV-1a over shape-relevant
// structure).
uint32_t model_config_hash(const EtlModel& model);

void save_checkpoint(const EtlModel& model, const std::string& path);
EtlModel load_checkpoint(const std::string& path, TransAct act = TransAct::relu);

}  // namespace etl
