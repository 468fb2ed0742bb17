#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "etl/eval.hpp"
#include "etl/synth.hpp"
#include "test_util.hpp"

using namespace etl;

namespace {

// Independent rank recomputation: sort candidates by (-score, id).
uint32_t brute_force_rank(const std::vector<uint32_t>& ids,
                          const std::vector<float>& scores, uint32_t target) {
  std::vector<size_t> order(ids.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  for (size_t r = 0; r < order.size(); ++r)
    if (ids[order[r]] == target) return static_cast<uint32_t>(r + 1);
  return 0;
}

// A handmade one-user dataset small enough to rig by hand.
PairedDataset one_user_dataset() {
  PairedDataset ds;
  ds.has_split = true;
  ds.n_negatives = 5;
  ds.seed = 1;
  for (InteractionMatrix* m : {&ds.domain_a, &ds.domain_b}) {
    m->n_users = 1;
    m->n_items = 20;
    m->user_tokens = {"u0"};
    for (uint32_t i = 0; i < 20; ++i) m->item_tokens.push_back("i" + std::to_string(i));
    SparseRow row(20);
    row.push(0);
    row.push(1);
    m->rows = {row};
  }
  for (EvalSplit* ev : {&ds.eval_a, &ds.eval_b}) {
    ev->val_item = {2};
    ev->test_item = {3};
    ev->val_negatives = {4, 5, 6, 7, 8};
    ev->test_negatives = {9, 10, 11, 12, 13};
  }
  return ds;
}

}  // namespace

TEST_CASE("rank_position") {
  std::vector<uint32_t> negatives;
  std::unordered_map<uint32_t, float> scores;
  for (uint32_t i = 1; i < 100; ++i) {
    negatives.push_back(i);
    scores[i] = static_cast<float>(i) * 0.01f;
  }

  SUBCASE("strictly highest score ranks first") {
    scores[0] = 10.0f;
    CHECK(rank_position(scores, 0, negatives) == 1);
  }

  SUBCASE("strictly lowest score ranks last") {
    scores[0] = -10.0f;
    CHECK(rank_position(scores, 0, negatives) == 100);
  }

  SUBCASE("all-equal scores fall back to ascending item id") {
    std::unordered_map<uint32_t, float> flat;
    flat[0] = 1.0f;
    for (uint32_t i = 1; i < 100; ++i) flat[i] = 1.0f;
    CHECK(rank_position(flat, 0, negatives) == 1);  // target id 0 is smallest
    // move the target to the largest id
    std::unordered_map<uint32_t, float> flat2;
    std::vector<uint32_t> negs2;
    for (uint32_t i = 0; i < 99; ++i) {
      negs2.push_back(i);
      flat2[i] = 1.0f;
    }
    flat2[200] = 1.0f;
    CHECK(rank_position(flat2, 200, negs2) == 100);
  }

  SUBCASE("missing score is an evaluation error") {
    scores.erase(42);
    scores[0] = 0.5f;
    try {
      rank_position(scores, 0, negatives);
      FAIL("expected evaluation error");
    } catch (const EtlError& e) {
      CHECK(e.category() == ErrorCategory::evaluation);
    }
  }

  SUBCASE("score-shift invariance") {
    Rng rng(7);
    std::unordered_map<uint32_t, float> base, shifted;
    std::vector<uint32_t> negs;
    for (uint32_t i = 0; i < 100; ++i) {
      const float s = rng.uniform(-2.0f, 2.0f);
      if (i > 0) negs.push_back(i);
      base[i] = s;
      shifted[i] = s + 7.25f;
    }
    CHECK(rank_position(base, 0, negs) == rank_position(shifted, 0, negs));
  }
}

TEST_CASE("metric closed forms") {
  CHECK(hr_at_k(1, 5) == 1.0);
  CHECK(ndcg_at_k(1, 5) == 1.0);
  CHECK(mrr_at_k(1, 5) == 1.0);
  CHECK(hr_at_k(1, 10) == 1.0);

  CHECK(ndcg_at_k(3, 5) == doctest::Approx(0.5).epsilon(1e-12));  // 1/log2(4)
  CHECK(mrr_at_k(3, 5) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  CHECK(hr_at_k(7, 5) == 0.0);
  CHECK(ndcg_at_k(7, 5) == 0.0);
  CHECK(mrr_at_k(7, 5) == 0.0);

  CHECK(mrr_uncut(7) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));

  // monotonicity in K for fixed rank
  for (uint32_t pos = 1; pos <= 12; ++pos) {
    CHECK(hr_at_k(pos, 10) >= hr_at_k(pos, 5));
    CHECK(ndcg_at_k(pos, 10) >= ndcg_at_k(pos, 5));
    CHECK(mrr_at_k(pos, 10) >= mrr_at_k(pos, 5));
  }
}

TEST_CASE("random scorer hits HR@10 = 0.1 over many trials") {
  Rng rng(20260811);
  const int trials = 10000;
  int hits = 0;
  std::vector<uint32_t> negatives(99);
  for (uint32_t i = 0; i < 99; ++i) negatives[i] = i + 1;
  for (int t = 0; t < trials; ++t) {
    std::unordered_map<uint32_t, float> scores;
    for (uint32_t i = 0; i <= 99; ++i) scores[i] = static_cast<float>(rng.next_double());
    const uint32_t pos = rank_position(scores, 0, negatives);
    hits += pos <= 10;
  }
  const double hr = double(hits) / trials;
  CHECK(std::abs(hr - 0.100) <= 0.01);
}

TEST_CASE("evaluate on a rigged oracle model") {
  PairedDataset ds = one_user_dataset();
  Rng rng(5);
  EtlModel m = init_model(ModelDims{2, 3, 3, 20, 20}, TransformKind::trans5, rng);
  // zero-out the decoders, then pin the test target logits high
  for (Mlp2Params* dec : {&m.dec_a, &m.dec_b}) {
    dec->w1 = Matrix(2, 3);
    dec->b1 = Matrix(1, 3);
    dec->w2 = Matrix(3, 20);
    dec->b2 = Matrix(1, 20);
    dec->b2.at(0, 3) = 40.0f;
  }
  std::vector<uint32_t> cutoffs{5, 10};
  MetricsReport rep = evaluate(m, ds, Phase::test, cutoffs);
  CHECK(rep.get(Domain::a, Phase::test, "hr", 5) == 1.0);
  CHECK(rep.get(Domain::b, Phase::test, "hr", 5) == 1.0);
  CHECK(rep.get(Domain::a, Phase::test, "ndcg", 5) == 1.0);
  CHECK(rep.get(Domain::a, Phase::test, "mrr", 10) == 1.0);

  // same model is at chance-floor for validation (target logit not boosted):
  // val target 2 ties with the other zero-logit candidates, smallest id wins.
  MetricsReport val_rep = evaluate(m, ds, Phase::val, cutoffs);
  CHECK(val_rep.get(Domain::a, Phase::val, "hr", 5) == 1.0);  // id 2 < negatives 4..8
}

TEST_CASE("evaluate matches a brute-force per-user recomputation") {
  SynthConfig scfg;
  scfg.n_users = 60;
  scfg.n_items_a = 120;
  scfg.n_items_b = 140;
  scfg.shared_dim = 3;
  scfg.specific_dim = 2;
  scfg.sparsity = 0.06;
  scfg.seed = 9;
  scfg.n_negatives = 30;
  PairedDataset ds = generate_synthetic(scfg).dataset;

  Rng rng(11);
  EtlModel m = init_model(ModelDims{6, 10, 6, 120, 140}, TransformKind::trans5, rng);
  std::vector<uint32_t> cutoffs{5, 10};

  for (Phase phase : {Phase::val, Phase::test}) {
    MetricsReport rep = evaluate(m, ds, phase, cutoffs);
    for (Domain domain : {Domain::a, Domain::b}) {
      const EvalSplit& ev = domain == Domain::a ? ds.eval_a : ds.eval_b;
      double hr5 = 0, hr10 = 0, ndcg5 = 0, ndcg10 = 0, mrr5 = 0, mrr10 = 0;
      for (uint32_t u = 0; u < ds.n_users(); ++u) {
        std::vector<float> scores = score_candidates(m, ds, domain, phase, u);
        std::vector<uint32_t> ids(1 + ds.n_negatives);
        ids[0] = (phase == Phase::val ? ev.val_item : ev.test_item)[u];
        for (uint32_t i = 0; i < ds.n_negatives; ++i)
          ids[1 + i] = (phase == Phase::val ? ev.val_negatives
                                            : ev.test_negatives)[size_t(u) * ds.n_negatives + i];
        const uint32_t pos = brute_force_rank(ids, scores, ids[0]);
        REQUIRE(pos >= 1);
        hr5 += hr_at_k(pos, 5);
        hr10 += hr_at_k(pos, 10);
        ndcg5 += ndcg_at_k(pos, 5);
        ndcg10 += ndcg_at_k(pos, 10);
        mrr5 += mrr_at_k(pos, 5);
        mrr10 += mrr_at_k(pos, 10);
      }
      const double n = ds.n_users();
      CHECK(rep.get(domain, phase, "hr", 5) == hr5 / n);
      CHECK(rep.get(domain, phase, "hr", 10) == hr10 / n);
      CHECK(rep.get(domain, phase, "ndcg", 5) == ndcg5 / n);
      CHECK(rep.get(domain, phase, "ndcg", 10) == ndcg10 / n);
      CHECK(rep.get(domain, phase, "mrr", 5) == mrr5 / n);
      CHECK(rep.get(domain, phase, "mrr", 10) == mrr10 / n);
    }
  }
}

TEST_CASE("evaluation of a fixed model is deterministic") {
  SynthConfig scfg;
  scfg.n_users = 40;
  scfg.n_items_a = 110;
  scfg.n_items_b = 110;
  scfg.seed = 21;
  scfg.sparsity = 0.05;
  scfg.n_negatives = 25;
  PairedDataset ds = generate_synthetic(scfg).dataset;
  Rng rng(3);
  EtlModel m = init_model(ModelDims{4, 8, 4, 110, 110}, TransformKind::trans5, rng);
  std::vector<uint32_t> cutoffs{5, 10};
  MetricsReport r1 = evaluate(m, ds, Phase::test, cutoffs);
  MetricsReport r2 = evaluate(m, ds, Phase::test, cutoffs);
  REQUIRE(r1.entries.size() == r2.entries.size());
  for (size_t i = 0; i < r1.entries.size(); ++i)
    CHECK(r1.entries[i].value == r2.entries[i].value);
}

TEST_CASE("per-user NDCG never exceeds HR at the same cutoff") {
  for (uint32_t pos = 1; pos <= 15; ++pos)
    for (uint32_t k : {5u, 10u}) CHECK(ndcg_at_k(pos, k) <= hr_at_k(pos, k));
}
