#include "etl/eval.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace etl {

const char* to_string(Phase p) { return p == Phase::val ? "val" : "test"; }
const char* to_string(Domain d) { return d == Domain::a ? "a" : "b"; }

uint32_t rank_position(const std::unordered_map<uint32_t, float>& scores,
                       uint32_t target, std::span<const uint32_t> negatives) {
  auto it = scores.find(target);
  require(it != scores.end(), ErrorCategory::evaluation,
          "rank_position: missing score for target item");
  const float target_score = it->second;
  uint32_t rank = 1;
  for (uint32_t neg : negatives) {
    require(neg != target, ErrorCategory::evaluation,
            "rank_position: target appears among negatives");
    auto nit = scores.find(neg);
    require(nit != scores.end(), ErrorCategory::evaluation,
            "rank_position: missing score for negative item");
    const float s = nit->second;
    if (s > target_score || (s == target_score && neg < target)) ++rank;
  }
  return rank;
}

namespace {

// Rank of the first entry of `candidate_scores` against the rest, with the
// same deterministic tie rule as rank_position.
uint32_t rank_of_first(std::span<const float> candidate_scores,
                       std::span<const uint32_t> candidate_ids) {
  const float target_score = candidate_scores[0];
  const uint32_t target_id = candidate_ids[0];
  uint32_t rank = 1;
  for (size_t i = 1; i < candidate_scores.size(); ++i) {
    const float s = candidate_scores[i];
    if (s > target_score || (s == target_score && candidate_ids[i] < target_id)) ++rank;
  }
  return rank;
}

// Hidden activations of the decoder for a block of latents.
Matrix decoder_hidden(const Matrix& z, const Mlp2Params& dec) {
  Matrix h = matmul(z, dec.w1);
  add_bias_rows(h, dec.b1);
  for (float& v : h.data)
    if (v < 0.0f) v = 0.0f;
  return h;
}

float score_item(const Matrix& hidden, uint32_t row, const Mlp2Params& dec,
                 uint32_t item) {
  const float* h = hidden.row(row);
  const uint32_t out_cols = dec.w2.cols;
  const float* w = dec.w2.data.data() + item;
  float acc = dec.b2.at(0, item);
  for (uint32_t k = 0; k < dec.w2.rows; ++k) acc += h[k] * w[size_t(k) * out_cols];
  return acc;
}

struct DomainEvalAccum {
  std::vector<double> hr, ndcg, mrr;  // per cutoff
  double mrr_uncut_sum = 0.0;
};

}  // namespace

MetricsReport evaluate(const EtlModel& model, const PairedDataset& ds, Phase phase,
                       std::span<const uint32_t> cutoffs) {
  require(ds.has_split, ErrorCategory::evaluation, "evaluate: dataset has no split");
  check_shape(model.dims.n_items_a == ds.domain_a.n_items &&
                  model.dims.n_items_b == ds.domain_b.n_items,
              "evaluate: model/dataset item counts disagree");
  const uint32_t n = ds.n_users();
  const uint32_t n_neg = ds.n_negatives;
  const uint32_t block = 512;

  MetricsReport report;
  report.n_users = n;
  report.seed = ds.seed;
  report.config_hash = model_config_hash(model);

  for (Domain domain : {Domain::a, Domain::b}) {
    const InteractionMatrix& m = domain == Domain::a ? ds.domain_a : ds.domain_b;
    const EvalSplit& ev = domain == Domain::a ? ds.eval_a : ds.eval_b;
    const Mlp2Params& dec = domain == Domain::a ? model.dec_a : model.dec_b;
    const std::vector<uint32_t>& targets =
        phase == Phase::val ? ev.val_item : ev.test_item;
    const std::vector<uint32_t>& negatives =
        phase == Phase::val ? ev.val_negatives : ev.test_negatives;

    DomainEvalAccum acc;
    acc.hr.assign(cutoffs.size(), 0.0);
    acc.ndcg.assign(cutoffs.size(), 0.0);
    acc.mrr.assign(cutoffs.size(), 0.0);

    std::vector<float> cand_scores(1 + n_neg);
    std::vector<uint32_t> cand_ids(1 + n_neg);
    for (uint32_t start = 0; start < n; start += block) {
      const uint32_t stop = std::min(n, start + block);
      std::span<const SparseRow> rows(m.rows.data() + start, stop - start);
      Matrix z = domain == Domain::a ? mlp2_infer(rows, model.enc_a)
                                     : mlp2_infer(rows, model.enc_b);
      Matrix hidden = decoder_hidden(z, dec);
      for (uint32_t u = start; u < stop; ++u) {
        const uint32_t r = u - start;
        cand_ids[0] = targets[u];
        cand_scores[0] = score_item(hidden, r, dec, targets[u]);
        for (uint32_t i = 0; i < n_neg; ++i) {
          const uint32_t item = negatives[size_t(u) * n_neg + i];
          cand_ids[1 + i] = item;
          cand_scores[1 + i] = score_item(hidden, r, dec, item);
        }
        const uint32_t pos = rank_of_first(cand_scores, cand_ids);
        for (size_t c = 0; c < cutoffs.size(); ++c) {
          acc.hr[c] += hr_at_k(pos, cutoffs[c]);
          acc.ndcg[c] += ndcg_at_k(pos, cutoffs[c]);
          acc.mrr[c] += mrr_at_k(pos, cutoffs[c]);
        }
        acc.mrr_uncut_sum += mrr_uncut(pos);
      }
    }

    const double n_d = static_cast<double>(n);
    for (size_t c = 0; c < cutoffs.size(); ++c) {
      report.entries.push_back({domain, phase, "hr", cutoffs[c], acc.hr[c] / n_d});
      report.entries.push_back({domain, phase, "ndcg", cutoffs[c], acc.ndcg[c] / n_d});
      report.entries.push_back({domain, phase, "mrr", cutoffs[c], acc.mrr[c] / n_d});
    }
    report.entries.push_back(
        {domain, phase, "mrr_uncut", 1 + n_neg, acc.mrr_uncut_sum / n_d});
  }
  return report;
}

std::vector<float> score_candidates(const EtlModel& model, const PairedDataset& ds,
                                    Domain domain, Phase phase, uint32_t user) {
  const InteractionMatrix& m = domain == Domain::a ? ds.domain_a : ds.domain_b;
  const EvalSplit& ev = domain == Domain::a ? ds.eval_a : ds.eval_b;
  const Mlp2Params& dec = domain == Domain::a ? model.dec_a : model.dec_b;
  require(user < ds.n_users(), ErrorCategory::evaluation, "score_candidates: bad user");

  std::span<const SparseRow> rows(m.rows.data() + user, 1);
  Matrix z = domain == Domain::a ? mlp2_infer(rows, model.enc_a)
                                 : mlp2_infer(rows, model.enc_b);
  Matrix hidden = decoder_hidden(z, dec);

  const uint32_t n_neg = ds.n_negatives;
  const std::vector<uint32_t>& targets = phase == Phase::val ? ev.val_item : ev.test_item;
  const std::vector<uint32_t>& negatives =
      phase == Phase::val ? ev.val_negatives : ev.test_negatives;
  std::vector<float> out(1 + n_neg);
  out[0] = score_item(hidden, 0, dec, targets[user]);
  for (uint32_t i = 0; i < n_neg; ++i)
    out[1 + i] = score_item(hidden, 0, dec, negatives[size_t(user) * n_neg + i]);
  return out;
}

Matrix encode_all_users(const EtlModel& model, const PairedDataset& ds, Domain domain) {
  const InteractionMatrix& m = domain == Domain::a ? ds.domain_a : ds.domain_b;
  const Mlp2Params& enc = domain == Domain::a ? model.enc_a : model.enc_b;
  const uint32_t n = ds.n_users();
  Matrix out(n, model.dims.d);
  const uint32_t block = 1024;
  for (uint32_t start = 0; start < n; start += block) {
    const uint32_t stop = std::min(n, start + block);
    std::span<const SparseRow> rows(m.rows.data() + start, stop - start);
    Matrix z = mlp2_infer(rows, enc);
    std::copy(z.data.begin(), z.data.end(), out.data.begin() + size_t(start) * out.cols);
  }
  return out;
}

double MetricsReport::get(Domain domain, Phase phase, const std::string& metric,
                          uint32_t k) const {
  for (const Entry& e : entries) {
    if (e.domain == domain && e.phase == phase && e.metric == metric && e.k == k)
      return e.value;
  }
  fail(ErrorCategory::evaluation, "metrics report has no entry " + metric + "@" +
                                      std::to_string(k));
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  require(out.good(), ErrorCategory::io, "cannot write " + path);
  out << "domain,phase,metric,k,value\n";
  char buf[64];
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof(buf), "%.6f", e.value);
    out << to_string(e.domain) << ',' << to_string(e.phase) << ',' << e.metric << ','
        << e.k << ',' << buf << '\n';
  }
}

std::string metrics_to_json(const MetricsReport& report, int64_t timestamp_ms) {
  nlohmann::json j;
  j["run"]["n_users"] = report.n_users;
  j["run"]["seed"] = report.seed;
  j["run"]["config_hash"] = report.config_hash;
  j["run"]["generated_at_unix_ms"] = timestamp_ms;
  j["metrics"] = nlohmann::json::array();
  for (const auto& e : report.entries) {
    j["metrics"].push_back({{"domain", to_string(e.domain)},
                            {"phase", to_string(e.phase)},
                            {"metric", e.metric},
                            {"k", e.k},
                            {"value", e.value}});
  }
  return j.dump(2);
}

}  // namespace etl
