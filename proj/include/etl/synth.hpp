#pragma once

#include "etl/dataio.hpp"
#include "etl/model.hpp"

namespace etl {

// Desk-scale paired dataset with controllable cross-domain correlation:
// user factors are [shared || specific_a] in domain a and
// [shared * R || specific_b] in domain b (R a random rotation), items are
// Gaussian factors, interactions are Bernoulli draws from inner-product
// logits calibrated to the target sparsity. shared_dim = 0 makes the domains
// independent; specific_dim = 0 makes preferences fully shared.
struct SynthConfig {
  uint32_t n_users = 1000;
  uint32_t n_items_a = 500;
  uint32_t n_items_b = 500;
  uint32_t shared_dim = 8;
  uint32_t specific_dim = 4;
  double sparsity = 0.02;    // target interaction density, domain a
  double sparsity_b = -1.0;  // domain b density; < 0 means same as sparsity
  double gain = 3.0;         // logit scale on normalized inner products
  uint64_t seed = 1;
  uint32_t n_negatives = 99;
  uint32_t min_interactions = 3;  // per user per domain, resampled up to a cap
  uint32_t resample_cap = 100;
  bool shared_negatives = false;
};

struct SynthGroundTruth {
  Matrix user_a, user_b;    // N x (shared + specific)
  Matrix items_a, items_b;  // M x (shared + specific)
  Matrix rotation;          // shared x shared (empty when shared_dim = 0)
};

struct SynthResult {
  PairedDataset dataset;
  SynthGroundTruth ground_truth;
};

SynthResult generate_synthetic(const SynthConfig& cfg);

// Ground-truth factors as an ETL1 tensor file for diagnostics.
void save_ground_truth(const SynthGroundTruth& gt, const std::string& path,
                       uint64_t seed);

}  // namespace etl
