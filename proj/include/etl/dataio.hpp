#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etl/rng.hpp"
#include "etl/sparse.hpp"

namespace etl {

struct RawRating {
  std::string user;
  std::string item;
  float rating = 0.0f;
  int64_t timestamp = 0;
};

struct RawRatings {
  std::vector<RawRating> records;
  size_t skipped_lines = 0;
};

// Deduplicated positive (user, item) pairs.
struct ImplicitRecord {
  std::string user;
  std::string item;
};
using ImplicitRecords = std::vector<ImplicitRecord>;

// Sparse binary user x item matrix for one domain. Row order is shared with
// the paired domain; item indexing is per-domain.
struct InteractionMatrix {
  uint32_t n_users = 0;
  uint32_t n_items = 0;
  std::vector<SparseRow> rows;            // after loo_split these are train rows
  std::vector<std::string> user_tokens;   // row index -> token
  std::vector<std::string> item_tokens;   // column index -> token
};

// Per-user reserved items and fixed negative candidate sets for one domain.
struct EvalSplit {
  std::vector<uint32_t> val_item;
  std::vector<uint32_t> test_item;
  std::vector<uint32_t> val_negatives;   // flattened n_users x n_negatives
  std::vector<uint32_t> test_negatives;  // flattened n_users x n_negatives
};

struct PairedDataset {
  InteractionMatrix domain_a;
  InteractionMatrix domain_b;
  EvalSplit eval_a;
  EvalSplit eval_b;
  bool has_split = false;
  uint64_t seed = 0;
  uint32_t min_count = 5;
  uint32_t n_negatives = 99;

  uint32_t n_users() const { return domain_a.n_users; }
};

// Parses `user,item,rating,timestamp` lines. Malformed lines (wrong field
// count, empty tokens, rating outside [0,5], bad numbers) are skipped and
// counted; more than 1% malformed lines is a format error.
RawRatings load_interactions(const std::string& path);

// Keeps ratings >= threshold as positives, collapsing duplicates.
ImplicitRecords binarize(const RawRatings& raw, float threshold = 3.0f);

// Iteratively removes users and items with fewer than min_count interactions
// until a fixed point.
ImplicitRecords kcore_filter(const ImplicitRecords& records, uint32_t min_count = 5);

// Intersects users across the two domains and builds the paired matrices
// (full rows, no split yet). Users left with fewer than 2 interactions in
// either domain are dropped.
PairedDataset pair_domains(const ImplicitRecords& a, const ImplicitRecords& b);

// Reserves one validation and one test item per user per domain and samples
// fixed negative sets from never-interacted items. Users with fewer than 3
// interactions in either domain are dropped (counted in the returned
// dataset's log line on stderr). When shared_negatives is set the validation
// and test candidates reuse one negative set.
PairedDataset loo_split(const PairedDataset& paired, uint32_t n_negatives, Rng& rng,
                        bool shared_negatives = false);

void save_dataset(const PairedDataset& ds, const std::string& dir);
PairedDataset load_dataset(const std::string& dir);

// Structural FNV-1a hash over every field that save_dataset persists.
uint64_t dataset_hash(const PairedDataset& ds);

// Keeps a uniformly sampled fraction of train interactions per domain,
// leaving the reserved items and negative sets untouched. ratio 1.0 is a
// no-op (bit-identical dataset).
void subsample_train(PairedDataset& ds, double ratio, Rng& rng);

// The user's full interaction set: train row plus reserved val/test items.
std::vector<uint32_t> full_interactions(const PairedDataset& ds, bool domain_a,
                                        uint32_t user);

}  // namespace etl
