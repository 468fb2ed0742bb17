#include "etl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "etl/adam.hpp"
#include "etl/losses.hpp"
#include "etl/mlp.hpp"

namespace etl {

namespace {

double multi_rbf(const float* a, const float* b, uint32_t d,
                 std::span<const double> sigmas) {
  double sq = 0.0;
  for (uint32_t k = 0; k < d; ++k) {
    const double diff = double(a[k]) - double(b[k]);
    sq += diff * diff;
  }
  double k_sum = 0.0;
  for (double sigma : sigmas) k_sum += std::exp(-sq / (2.0 * sigma * sigma));
  return k_sum;
}

}  // namespace

namespace {

// Deterministic ordering of the two sample sets so the floating-point
// summation order (hence the result, bit for bit) is symmetric in x and y.
bool swap_for_symmetry(const Matrix& x, const Matrix& y) {
  if (x.rows != y.rows) return y.rows < x.rows;
  for (size_t i = 0; i < x.data.size(); ++i) {
    if (x.data[i] != y.data[i]) return y.data[i] < x.data[i];
  }
  return false;
}

}  // namespace

double mmd_rbf(const Matrix& x_in, const Matrix& y_in, std::span<const double> sigmas) {
  check_shape(x_in.cols == y_in.cols, "mmd_rbf: sample dimensionality mismatch");
  require(x_in.rows >= 1 && y_in.rows >= 1, ErrorCategory::analysis,
          "mmd_rbf: need at least one sample per set");
  require(!sigmas.empty(), ErrorCategory::analysis, "mmd_rbf: sigma list is empty");

  const bool swapped = swap_for_symmetry(x_in, y_in);
  const Matrix& x = swapped ? y_in : x_in;
  const Matrix& y = swapped ? x_in : y_in;
  const uint32_t n = x.rows, m = y.rows, d = x.cols;
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (uint32_t i = 0; i < n; ++i)
    for (uint32_t j = 0; j < n; ++j) xx += multi_rbf(x.row(i), x.row(j), d, sigmas);
  for (uint32_t i = 0; i < m; ++i)
    for (uint32_t j = 0; j < m; ++j) yy += multi_rbf(y.row(i), y.row(j), d, sigmas);
  for (uint32_t i = 0; i < n; ++i)
    for (uint32_t j = 0; j < m; ++j) xy += multi_rbf(x.row(i), y.row(j), d, sigmas);
  return xx / (double(n) * n) + yy / (double(m) * m) - 2.0 * xy / (double(n) * m);
}

std::span<const double> default_mmd_sigmas() {
  static const double sigmas[] = {1.0, 2.0, 4.0, 8.0, 16.0};
  return sigmas;
}

ProbeDataset build_probe(const Matrix& z_a, const Matrix& z_b, Rng& rng) {
  check_shape(z_a.rows == z_b.rows, "build_probe: user counts disagree");
  check_shape(z_a.cols == z_b.cols, "build_probe: latent widths disagree");
  const uint32_t n = z_a.rows;
  const uint32_t d = z_a.cols;
  require(n >= 5, ErrorCategory::analysis, "build_probe: need at least 5 users");

  ProbeDataset probe;
  probe.features = Matrix(2 * n, 2 * d);
  probe.labels.resize(2 * n);
  for (uint32_t u = 0; u < n; ++u) {
    // paired example
    float* pos = probe.features.row(2 * u);
    std::copy(z_a.row(u), z_a.row(u) + d, pos);
    std::copy(z_b.row(u), z_b.row(u) + d, pos + d);
    probe.labels[2 * u] = 1;
    // unpaired example with a random other user's domain-b code
    uint32_t other = static_cast<uint32_t>(rng.next_below(n - 1));
    if (other >= u) ++other;
    float* neg = probe.features.row(2 * u + 1);
    std::copy(z_a.row(u), z_a.row(u) + d, neg);
    std::copy(z_b.row(other), z_b.row(other) + d, neg + d);
    probe.labels[2 * u + 1] = 0;
  }

  // 6/2/2 split over users (both of a user's examples stay together)
  std::vector<uint32_t> users(n);
  std::iota(users.begin(), users.end(), 0);
  for (size_t i = n; i > 1; --i) std::swap(users[i - 1], users[rng.next_below(i)]);
  const uint32_t n_train = static_cast<uint32_t>(0.6 * n);
  const uint32_t n_val = static_cast<uint32_t>(0.2 * n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t u = users[i];
    auto& bucket = i < n_train ? probe.train_idx
                               : (i < n_train + n_val ? probe.val_idx : probe.test_idx);
    bucket.push_back(2 * u);
    bucket.push_back(2 * u + 1);
  }
  return probe;
}

std::vector<float> train_probe(const ProbeDataset& probe, uint32_t hidden,
                               uint32_t epochs, Rng& rng, float lr) {
  require(!probe.train_idx.empty() && !probe.test_idx.empty(), ErrorCategory::analysis,
          "train_probe: empty split");
  const uint32_t in_dim = probe.features.cols;

  Mlp2Params net;
  net.w1 = xavier_init(in_dim, hidden, rng);
  net.b1 = Matrix(1, hidden);
  net.w2 = xavier_init(hidden, 1, rng);
  net.b2 = Matrix(1, 1);
  AdamOptimizer opt(AdamHyper{lr, 0.9f, 0.999f, 1e-8f});

  const uint32_t batch = 64;
  std::vector<uint32_t> order(probe.train_idx);
  for (uint32_t epoch = 0; epoch < epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.next_below(i)]);
    for (size_t lo = 0; lo < order.size(); lo += batch) {
      const size_t hi = std::min(order.size(), lo + batch);
      Matrix xb(static_cast<uint32_t>(hi - lo), in_dim);
      Matrix tb(static_cast<uint32_t>(hi - lo), 1);
      for (size_t i = lo; i < hi; ++i) {
        const uint32_t idx = order[i];
        std::copy(probe.features.row(idx), probe.features.row(idx) + in_dim,
                  xb.row(static_cast<uint32_t>(i - lo)));
        tb.at(static_cast<uint32_t>(i - lo), 0) = probe.labels[idx];
      }
      Mlp2Trace tr = mlp2_forward(xb, net, 0.0f, true, rng, Act2::identity);
      BceResult bce = bce_with_logits(tr.output, tb);
      require(std::isfinite(bce.loss), ErrorCategory::analysis,
              "train_probe: loss diverged");
      Mlp2Grads grads = mlp2_backward(tr, net, bce.logit_grad);
      opt.update("probe.w1", net.w1, grads.w1);
      opt.update("probe.b1", net.b1, grads.b1);
      opt.update("probe.w2", net.w2, grads.w2);
      opt.update("probe.b2", net.b2, grads.b2);
    }
  }

  std::vector<float> scores;
  scores.reserve(probe.test_idx.size());
  Matrix xt(1, in_dim);
  for (uint32_t idx : probe.test_idx) {
    std::copy(probe.features.row(idx), probe.features.row(idx) + in_dim, xt.row(0));
    Matrix logit = mlp2_infer(xt, net);
    scores.push_back(static_cast<float>(sigmoid(logit.at(0, 0))));
  }
  return scores;
}

double auc(std::span<const float> scores, std::span<const uint8_t> labels) {
  require(scores.size() == labels.size(), ErrorCategory::analysis,
          "auc: scores/labels length mismatch");
  size_t n_pos = 0, n_neg = 0;
  for (uint8_t l : labels) (l ? n_pos : n_neg) += 1;
  require(n_pos > 0 && n_neg > 0, ErrorCategory::analysis,
          "auc: both classes must be present");

  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Walk tie groups; each positive gains (#neg below) + 0.5 * (#neg tied).
  double u_stat = 0.0;
  size_t neg_below = 0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    size_t tie_pos = 0, tie_neg = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] ? tie_pos : tie_neg) += 1;
      ++j;
    }
    u_stat += double(tie_pos) * (double(neg_below) + 0.5 * double(tie_neg));
    neg_below += tie_neg;
    i = j;
  }
  return u_stat / (double(n_pos) * double(n_neg));
}

namespace {

// Regularized incomplete beta function via Lentz's continued fraction.
double beta_cont_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-14;
  constexpr double kTiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cont_fraction(a, b, x) / a;
  return 1.0 - front * beta_cont_fraction(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_two_sided_p(double t, double dof) {
  require(dof > 0.0, ErrorCategory::analysis, "student_t: dof must be positive");
  if (std::isinf(t)) return 0.0;
  const double x = dof / (dof + t * t);
  return reg_incomplete_beta(0.5 * dof, 0.5, x);
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCategory::analysis,
          "paired_ttest: length mismatch");
  require(a.size() >= 2, ErrorCategory::analysis,
          "paired_ttest: need at least 2 pairs");
  const size_t n = a.size();
  std::vector<double> diff(n);
  for (size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];

  double mean = 0.0;
  for (double v : diff) mean += v;
  mean /= double(n);
  double ss = 0.0;
  for (double v : diff) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / double(n - 1));

  TTestResult r;
  if (sd == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(double(n)));
  r.p = student_t_two_sided_p(r.t, double(n - 1));
  return r;
}

}  // namespace etl
