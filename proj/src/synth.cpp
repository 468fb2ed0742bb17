#include "etl/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "etl/losses.hpp"

namespace etl {

namespace {

std::string token(const char* prefix, uint32_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%06u", prefix, i);
  return buf;
}

Matrix gaussian_matrix(uint32_t rows, uint32_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (float& v : m.data) v = static_cast<float>(rng.gaussian());
  return m;
}

// Raw inner-product logits scaled by gain / sqrt(dim).
Matrix raw_logits(const Matrix& users, const Matrix& items, double gain) {
  Matrix raw = matmul_a_bt(users, items);
  scale_inplace(raw, static_cast<float>(gain / std::sqrt(double(users.cols))));
  return raw;
}

// Global offset making the mean interaction probability hit the target.
double calibrate_bias(const Matrix& raw, double target) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (float v : raw.data) mean += sigmoid(double(v) + mid);
    mean /= static_cast<double>(raw.size());
    (mean < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SynthResult generate_synthetic(const SynthConfig& cfg) {
  require(cfg.n_users >= 1 && cfg.n_items_a >= 1 && cfg.n_items_b >= 1,
          ErrorCategory::config, "synth: user and item counts must be >= 1");
  require(cfg.shared_dim + cfg.specific_dim >= 1, ErrorCategory::config,
          "synth: shared_dim + specific_dim must be >= 1");
  require(cfg.sparsity > 0.0 && cfg.sparsity < 1.0, ErrorCategory::config,
          "synth: sparsity must be in (0, 1)");
  const double sparsity_b = cfg.sparsity_b < 0.0 ? cfg.sparsity : cfg.sparsity_b;
  require(sparsity_b > 0.0 && sparsity_b < 1.0, ErrorCategory::config,
          "synth: sparsity_b must be in (0, 1)");

  Rng master(cfg.seed);
  Rng factors_rng = master.split();
  Rng interactions_rng = master.split();
  Rng split_rng = master.split();

  const uint32_t dim = cfg.shared_dim + cfg.specific_dim;
  SynthGroundTruth gt;

  Matrix shared = gaussian_matrix(cfg.n_users, std::max(cfg.shared_dim, 1u), factors_rng);
  if (cfg.shared_dim > 0) {
    gt.rotation = gaussian_matrix(cfg.shared_dim, cfg.shared_dim, factors_rng);
    reorthogonalize(gt.rotation);
  }

  auto assemble_users = [&](bool rotate, Rng& rng) {
    Matrix u(cfg.n_users, dim);
    Matrix shared_part = shared;
    if (rotate && cfg.shared_dim > 0) shared_part = matmul(shared, gt.rotation);
    for (uint32_t i = 0; i < cfg.n_users; ++i) {
      float* row = u.row(i);
      for (uint32_t k = 0; k < cfg.shared_dim; ++k) row[k] = shared_part.at(i, k);
      for (uint32_t k = 0; k < cfg.specific_dim; ++k)
        row[cfg.shared_dim + k] = static_cast<float>(rng.gaussian());
    }
    return u;
  };
  gt.user_a = assemble_users(false, factors_rng);
  gt.user_b = assemble_users(true, factors_rng);
  gt.items_a = gaussian_matrix(cfg.n_items_a, dim, factors_rng);
  gt.items_b = gaussian_matrix(cfg.n_items_b, dim, factors_rng);

  auto sample_domain = [&](const Matrix& users, const Matrix& items, double target,
                           const char* item_prefix, InteractionMatrix& out) {
    Matrix raw = raw_logits(users, items, cfg.gain);
    const double bias = calibrate_bias(raw, target);
    const uint32_t n_items = items.rows;

    out.n_users = cfg.n_users;
    out.n_items = n_items;
    out.user_tokens.reserve(cfg.n_users);
    for (uint32_t u = 0; u < cfg.n_users; ++u) out.user_tokens.push_back(token("u", u));
    out.item_tokens.reserve(n_items);
    for (uint32_t i = 0; i < n_items; ++i)
      out.item_tokens.push_back(token(item_prefix, i));

    out.rows.reserve(cfg.n_users);
    std::vector<double> probs(n_items);
    for (uint32_t u = 0; u < cfg.n_users; ++u) {
      Rng user_rng = interactions_rng.split();
      const float* r = raw.row(u);
      double expected = 0.0;
      for (uint32_t i = 0; i < n_items; ++i) {
        probs[i] = sigmoid(double(r[i]) + bias);
        expected += probs[i];
      }
      // Lift users whose expected count cannot support the LOO reservation.
      const double floor_count = cfg.min_interactions + 1.0;
      if (expected < floor_count) {
        double lo = 0.0, hi = 40.0;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          double e = 0.0;
          for (uint32_t i = 0; i < n_items; ++i) e += sigmoid(double(r[i]) + bias + mid);
          (e < floor_count ? lo : hi) = mid;
        }
        const double lift = 0.5 * (lo + hi);
        for (uint32_t i = 0; i < n_items; ++i)
          probs[i] = sigmoid(double(r[i]) + bias + lift);
      }

      SparseRow row(n_items);
      bool ok = false;
      for (uint32_t attempt = 0; attempt < cfg.resample_cap && !ok; ++attempt) {
        row.indices.clear();
        row.values.clear();
        for (uint32_t i = 0; i < n_items; ++i)
          if (user_rng.next_double() < probs[i]) row.push(i);
        ok = row.nnz() >= cfg.min_interactions &&
             n_items - row.nnz() >= cfg.n_negatives;
      }
      require(ok, ErrorCategory::generation,
              "synth: could not draw a feasible row for user " + out.user_tokens[u] +
                  " within " + std::to_string(cfg.resample_cap) + " attempts");
      out.rows.push_back(std::move(row));
    }
  };

  PairedDataset skeleton;
  skeleton.seed = cfg.seed;
  skeleton.min_count = cfg.min_interactions;
  sample_domain(gt.user_a, gt.items_a, cfg.sparsity, "a", skeleton.domain_a);
  sample_domain(gt.user_b, gt.items_b, sparsity_b, "b", skeleton.domain_b);

  SynthResult result;
  result.dataset =
      loo_split(skeleton, cfg.n_negatives, split_rng, cfg.shared_negatives);
  result.ground_truth = std::move(gt);
  return result;
}

void save_ground_truth(const SynthGroundTruth& gt, const std::string& path,
                       uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCategory::io, "cannot write " + path);
  out.write("ETL1", 4);
  std::vector<std::pair<std::string, const Matrix*>> tensors = {
      {"gt.user_a", &gt.user_a},
      {"gt.user_b", &gt.user_b},
      {"gt.items_a", &gt.items_a},
      {"gt.items_b", &gt.items_b},
  };
  if (!gt.rotation.empty()) tensors.emplace_back("gt.rotation", &gt.rotation);
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
  uint32_t hash = static_cast<uint32_t>(seed ^ (seed >> 32));
  out.write(reinterpret_cast<const char*>(&hash), 4);
}

}  // namespace etl
