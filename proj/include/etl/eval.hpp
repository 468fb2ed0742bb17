#pragma once

#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "etl/dataio.hpp"
#include "etl/model.hpp"

namespace etl {

enum class Phase { val, test };

const char* to_string(Phase p);
const char* to_string(Domain d);

// 1-based rank of target among {target} U negatives by descending score,
// ties broken by ascending item id.
uint32_t rank_position(const std::unordered_map<uint32_t, float>& scores,
                       uint32_t target, std::span<const uint32_t> negatives);

inline double hr_at_k(uint32_t pos, uint32_t k) { return pos <= k ? 1.0 : 0.0; }

// Single relevant item, so the ideal DCG is 1.
inline double ndcg_at_k(uint32_t pos, uint32_t k) {
  return pos <= k ? 1.0 / std::log2(static_cast<double>(pos) + 1.0) : 0.0;
}

inline double mrr_at_k(uint32_t pos, uint32_t k) {
  return pos <= k ? 1.0 / static_cast<double>(pos) : 0.0;
}

inline double mrr_uncut(uint32_t pos) { return 1.0 / static_cast<double>(pos); }

struct MetricsReport {
  struct Entry {
    Domain domain;
    Phase phase;
    std::string metric;  // hr | ndcg | mrr | mrr_uncut
    uint32_t k;
    double value;
  };
  std::vector<Entry> entries;
  uint32_t n_users = 0;
  uint64_t seed = 0;
  uint32_t config_hash = 0;

  double get(Domain domain, Phase phase, const std::string& metric, uint32_t k) const;
};

// Scores decode(encode(train row)) on {target} U fixed negatives per user
// and averages HR/NDCG/MRR at each cutoff. Dropout disabled.
MetricsReport evaluate(const EtlModel& model, const PairedDataset& ds, Phase phase,
                       std::span<const uint32_t> cutoffs);

// Candidate scores (target first, then negatives) for one user, same model
// path evaluate() uses.
std::vector<float> score_candidates(const EtlModel& model, const PairedDataset& ds,
                                    Domain domain, Phase phase, uint32_t user);

// Latent codes of every user's train row (dropout disabled), n_users x d.
Matrix encode_all_users(const EtlModel& model, const PairedDataset& ds, Domain domain);

void write_metrics_csv(const std::string& path, const MetricsReport& report);
// JSON mirror document with run metadata; timestamp_ms is the single
// non-deterministic field (pass 0 to omit nondeterminism).
std::string metrics_to_json(const MetricsReport& report, int64_t timestamp_ms);

}  // namespace etl
