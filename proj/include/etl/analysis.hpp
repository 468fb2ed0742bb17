#pragma once

#include <span>
#include <vector>

#include "etl/matrix.hpp"
#include "etl/rng.hpp"

namespace etl {

// Biased (V-statistic) MMD with a sum-of-RBF kernel
// k(x, x') = sum_sigma exp(-||x - x'||^2 / (2 sigma^2)), accumulated in double.
double mmd_rbf(const Matrix& x, const Matrix& y, std::span<const double> sigmas);

// Default bandwidth list {1, 2, 4, 8, 16}.
std::span<const double> default_mmd_sigmas();

// Binary pairing probe: feature [z_a,i || z_b,j], label 1 iff i == j. One
// positive and one random unpaired example per user, split 6/2/2 by user.
struct ProbeDataset {
  Matrix features;              // 2N x 2d
  std::vector<uint8_t> labels;  // 2N
  std::vector<uint32_t> train_idx, val_idx, test_idx;
};

ProbeDataset build_probe(const Matrix& z_a, const Matrix& z_b, Rng& rng);

// Two-layer MLP classifier (2d -> hidden -> 1) trained with BCE + Adam;
// returns sigmoid scores on the test split.
std::vector<float> train_probe(const ProbeDataset& probe, uint32_t hidden,
                               uint32_t epochs, Rng& rng, float lr = 0.001f);

// Mann-Whitney AUC; ties contribute 1/2.
double auc(std::span<const float> scores, std::span<const uint8_t> labels);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;  // two-sided
};

// Paired t-test over per-seed values. All-zero differences give p = 1 by
// convention; zero variance with nonzero mean gives t = +-inf, p = 0.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

// Two-sided Student-t tail probability P(|T_nu| >= |t|), |error| < 1e-6.
double student_t_two_sided_p(double t, double dof);

}  // namespace etl
