#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "etl/adam.hpp"
#include "etl/model.hpp"
#include "etl/training.hpp"
#include "test_util.hpp"

using namespace etl;
namespace fs = std::filesystem;

namespace {

EtlModel toy_model(uint32_t m_items, uint32_t t_items, uint32_t d, uint32_t hidden,
                   TransformKind kind, uint64_t seed) {
  Rng rng(seed);
  return init_model(ModelDims{d, hidden, hidden, m_items, t_items}, kind, rng);
}

Matrix random_rotation(uint32_t d, Rng& rng) {
  Matrix w = testutil::random_matrix(d, d, -1.0f, 1.0f, rng);
  reorthogonalize(w);
  return w;
}

}  // namespace

TEST_CASE("encode basics") {
  EtlModel m = toy_model(3, 4, 2, 3, TransformKind::trans5, 1);
  Rng rng(2);

  SUBCASE("empty row with zero biases encodes to zero") {
    std::vector<SparseRow> rows{SparseRow(3)};
    Matrix z = encode(rows, Domain::a, m, false, 0.5f, rng);
    CHECK(z.rows == 1);
    CHECK(z.cols == 2);
    for (float v : z.data) CHECK(v == 0.0f);
  }

  SUBCASE("evaluation mode is deterministic") {
    std::vector<SparseRow> rows = testutil::random_rows(4, 3, 1, 2, rng);
    Rng r1(9), r2(99);
    Matrix z1 = encode(rows, Domain::a, m, false, 0.5f, r1);
    Matrix z2 = encode(rows, Domain::a, m, false, 0.5f, r2);
    CHECK(z1.data == z2.data);
  }

  SUBCASE("hand-traced 3-item d=2 instance") {
    // w1 rows per item; row = items {0, 2} so hidden_pre = w1[0] + w1[2] + b1
    EtlModel hm = toy_model(3, 3, 2, 2, TransformKind::trans5, 4);
    hm.enc_a.w1 = Matrix(3, 2);
    hm.enc_a.w1.at(0, 0) = 0.5f;
    hm.enc_a.w1.at(0, 1) = -1.0f;
    hm.enc_a.w1.at(2, 0) = 0.25f;
    hm.enc_a.w1.at(2, 1) = 2.0f;
    hm.enc_a.b1 = Matrix(1, 2);
    hm.enc_a.w2 = Matrix(2, 2);
    hm.enc_a.w2.at(0, 0) = 1.0f;
    hm.enc_a.w2.at(1, 1) = 3.0f;
    hm.enc_a.b2 = Matrix(1, 2);
    std::vector<SparseRow> rows{SparseRow(3)};
    rows[0].push(0);
    rows[0].push(2);
    Matrix z = encode(rows, Domain::a, hm, false, 0.0f, rng);
    // hidden_pre = (0.75, 1.0) -> relu same -> z = (0.75, 3.0)
    CHECK(z.at(0, 0) == doctest::Approx(0.75).epsilon(1e-6));
    CHECK(z.at(0, 1) == doctest::Approx(3.0).epsilon(1e-6));
  }
}

TEST_CASE("decode shape and determinism") {
  EtlModel m = toy_model(5, 6, 3, 4, TransformKind::trans5, 7);
  Rng rng(3);
  Matrix z = testutil::random_matrix(2, 3, -1.0f, 1.0f, rng);
  Matrix out1 = decode(z, Domain::a, m);
  Matrix out2 = decode(z, Domain::a, m);
  CHECK(out1.rows == 2);
  CHECK(out1.cols == 5);
  CHECK(out1.data == out2.data);
  CHECK(decode(z, Domain::b, m).cols == 6);

  Matrix bad(2, 4);
  CHECK_THROWS_AS(decode(bad, Domain::a, m), EtlError);
}

TEST_CASE("transform directions and kinds") {
  Rng rng(11);

  SUBCASE("trans5 with identity W leaves z unchanged") {
    TransformParams p;
    p.kind = TransformKind::trans5;
    p.w = Matrix(3, 3);
    for (uint32_t i = 0; i < 3; ++i) p.w.at(i, i) = 1.0f;
    Matrix z = testutil::random_matrix(4, 3, -2.0f, 2.0f, rng);
    Matrix ab = transform_apply(z, p, TransDir::a_to_b);
    Matrix ba = transform_apply(z, p, TransDir::b_to_a);
    for (size_t i = 0; i < z.data.size(); ++i) {
      CHECK(ab.data[i] == doctest::Approx(z.data[i]).epsilon(1e-6));
      CHECK(ba.data[i] == doctest::Approx(z.data[i]).epsilon(1e-6));
    }
  }

  SUBCASE("trans5 rotation preserves pairwise inner products") {
    const uint32_t d = 6;
    TransformParams p;
    p.kind = TransformKind::trans5;
    p.w = random_rotation(d, rng);
    Matrix z = testutil::random_matrix(5, d, -1.0f, 1.0f, rng);
    Matrix t = transform_apply(z, p, TransDir::a_to_b);
    for (uint32_t i = 0; i < z.rows; ++i)
      for (uint32_t j = 0; j < z.rows; ++j) {
        double orig = 0.0, trans = 0.0;
        for (uint32_t k = 0; k < d; ++k) {
          orig += double(z.at(i, k)) * z.at(j, k);
          trans += double(t.at(i, k)) * t.at(j, k);
        }
        CHECK(std::abs(orig - trans) <= 1e-4 * std::max(1.0, std::abs(orig)));
      }
  }

  SUBCASE("trans1 is a plain per-direction matmul") {
    TransformParams p;
    p.kind = TransformKind::trans1;
    p.w_ab = Matrix(2, 2);
    p.w_ab.at(0, 1) = 1.0f;
    p.w_ab.at(1, 0) = 1.0f;
    p.w_ba = Matrix(2, 2);
    Matrix z(1, 2);
    z.at(0, 0) = 1.0f;
    z.at(0, 1) = 2.0f;
    Matrix t = transform_apply(z, p, TransDir::a_to_b);
    CHECK(t.at(0, 0) == 2.0f);
    CHECK(t.at(0, 1) == 1.0f);
  }

  SUBCASE("all five kinds compose encode -> transform -> decode") {
    for (TransformKind kind : {TransformKind::trans1, TransformKind::trans2,
                               TransformKind::trans3, TransformKind::trans4,
                               TransformKind::trans5}) {
      EtlModel m = toy_model(7, 9, 4, 5, kind, 21);
      std::vector<SparseRow> xa = testutil::random_rows(3, 7, 1, 4, rng);
      std::vector<SparseRow> xb = testutil::random_rows(3, 9, 1, 4, rng);
      Matrix z_a = encode(xa, Domain::a, m, false, 0.0f, rng);
      Matrix z_b = encode(xb, Domain::b, m, false, 0.0f, rng);
      Matrix self_a = decode(z_a, Domain::a, m);
      Matrix cross_b = decode(transform_apply(z_a, m.transform, TransDir::a_to_b),
                              Domain::b, m);
      Matrix cross_a = decode(transform_apply(z_b, m.transform, TransDir::b_to_a),
                              Domain::a, m);
      Matrix self_b = decode(z_b, Domain::b, m);
      CHECK(self_a.cols == 7);
      CHECK(cross_a.cols == 7);
      CHECK(self_b.cols == 9);
      CHECK(cross_b.cols == 9);
      CHECK(all_finite(self_a));
      CHECK(all_finite(cross_a));
      CHECK(all_finite(cross_b));
    }
  }
}

TEST_CASE("transform_penalty values") {
  Rng rng(31);
  const uint32_t d = 4;
  Matrix z_a = testutil::random_matrix(6, d, -1.5f, 1.5f, rng);
  Matrix z_b = testutil::random_matrix(6, d, -1.5f, 1.5f, rng);

  SUBCASE("orthogonal trans5 has (near) zero penalty") {
    TransformParams p;
    p.kind = TransformKind::trans5;
    p.w = random_rotation(d, rng);
    CHECK(transform_penalty(z_a, z_b, p) <= 1e-4);
  }

  SUBCASE("trans5 with W = 0 leaves the batch-mean L1 norms") {
    TransformParams p;
    p.kind = TransformKind::trans5;
    p.w = Matrix(d, d);
    const double expected = l1_norm(z_a) / z_a.rows + l1_norm(z_b) / z_b.rows;
    CHECK(transform_penalty(z_a, z_b, p) == doctest::Approx(expected).epsilon(1e-6));
  }

  SUBCASE("trans3 with an exact inverse pair has zero penalty") {
    TransformParams p;
    p.kind = TransformKind::trans3;
    p.w_ab = random_rotation(d, rng);
    // transpose of an orthogonal matrix is its inverse
    p.w_ba = Matrix(d, d);
    for (uint32_t i = 0; i < d; ++i)
      for (uint32_t j = 0; j < d; ++j) p.w_ba.at(i, j) = p.w_ab.at(j, i);
    CHECK(transform_penalty(z_a, z_b, p) <= 1e-4);
  }

  SUBCASE("unconstrained kinds have exactly zero penalty") {
    TransformParams p1;
    p1.kind = TransformKind::trans1;
    p1.w_ab = testutil::random_matrix(d, d, -1.0f, 1.0f, rng);
    p1.w_ba = testutil::random_matrix(d, d, -1.0f, 1.0f, rng);
    CHECK(transform_penalty(z_a, z_b, p1) == 0.0);
  }

  SUBCASE("penalty grows with the distance from orthogonality") {
    TransformParams p;
    p.kind = TransformKind::trans5;
    Matrix q = random_rotation(d, rng);
    Matrix e = testutil::random_matrix(d, d, -1.0f, 1.0f, rng);
    double prev = -1.0;
    for (float t : {0.0f, 0.05f, 0.15f, 0.4f}) {
      p.w = q;
      axpy_inplace(p.w, t, e);
      const double pen = transform_penalty(z_a, z_b, p);
      CHECK(pen >= prev);
      prev = pen;
    }
  }
}

TEST_CASE("discriminate") {
  Rng rng(41);

  SUBCASE("zero weights output exactly 0.5") {
    EtlModel m = toy_model(3, 3, 2, 3, TransformKind::trans5, 5);
    m.disc_a.w1 = Matrix(2, 3);
    m.disc_a.b1 = Matrix(1, 3);
    m.disc_a.w2 = Matrix(3, 1);
    m.disc_a.b2 = Matrix(1, 1);
    Matrix z = testutil::random_matrix(4, 2, -1.0f, 1.0f, rng);
    Matrix p = discriminate(z, Domain::a, m, false, 0.0f, rng);
    for (float v : p.data) CHECK(v == 0.5f);
  }

  SUBCASE("outputs stay in the open interval (0,1)") {
    EtlModel m = toy_model(3, 3, 4, 6, TransformKind::trans5, 6);
    Matrix z = testutil::random_matrix(16, 4, -5.0f, 5.0f, rng);
    Matrix p = discriminate(z, Domain::a, m, false, 0.0f, rng);
    for (float v : p.data) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
  }

  SUBCASE("learns to separate two well-separated clusters") {
    EtlModel m = toy_model(3, 3, 3, 8, TransformKind::trans5, 7);
    AdamOptimizer opt(AdamHyper{0.01f, 0.9f, 0.999f, 1e-8f});
    Rng data_rng(8);
    Rng train_rng(9);
    for (int step = 0; step < 200; ++step) {
      Matrix fake(32, 3), real(32, 3);
      for (float& v : fake.data) v = static_cast<float>(data_rng.gaussian() - 2.0);
      for (float& v : real.data) v = static_cast<float>(data_rng.gaussian() + 2.0);
      DiscStepResult r = prl_discriminator_step(fake, fake, real, real, m, true, 0.0f,
                                                train_rng);
      opt.update("disc_a.w1", m.disc_a.w1, r.disc_a.w1);
      opt.update("disc_a.b1", m.disc_a.b1, r.disc_a.b1);
      opt.update("disc_a.w2", m.disc_a.w2, r.disc_a.w2);
      opt.update("disc_a.b2", m.disc_a.b2, r.disc_a.b2);
    }
    int correct = 0;
    Matrix fake(100, 3), real(100, 3);
    for (float& v : fake.data) v = static_cast<float>(data_rng.gaussian() - 2.0);
    for (float& v : real.data) v = static_cast<float>(data_rng.gaussian() + 2.0);
    Matrix pf = discriminate(fake, Domain::a, m, false, 0.0f, rng);
    Matrix pr = discriminate(real, Domain::a, m, false, 0.0f, rng);
    for (float v : pf.data) correct += v < 0.5f;
    for (float v : pr.data) correct += v > 0.5f;
    CHECK(correct > 180);  // accuracy > 0.9
  }
}

TEST_CASE("sample_prior distributions") {
  Rng rng(51);

  SUBCASE("uniform support is [0,1)") {
    Matrix s = sample_prior(PriorSpec{PriorKind::uniform, 10}, 1000, rng);
    for (float v : s.data) {
      CHECK(v >= 0.0f);
      CHECK(v < 1.0f);
    }
  }

  SUBCASE("gaussian moments") {
    Matrix s = sample_prior(PriorSpec{PriorKind::gaussian, 100}, 1000, rng);
    const double n = static_cast<double>(s.size());
    double mean = 0.0;
    for (float v : s.data) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : s.data) var += (v - mean) * (v - mean);
    var /= n - 1;
    CHECK(std::abs(mean) <= 3.0 / std::sqrt(n));
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
  }

  SUBCASE("mvgaussian is the sum of N(0,1) and N(3,1)") {
    Matrix s = sample_prior(PriorSpec{PriorKind::mvgaussian, 100}, 1000, rng);
    const double n = static_cast<double>(s.size());
    double mean = 0.0;
    for (float v : s.data) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : s.data) var += (v - mean) * (v - mean);
    var /= n - 1;
    CHECK(std::abs(mean - 3.0) <= 3.0 * std::sqrt(2.0 / n));
    CHECK(var == doctest::Approx(2.0).epsilon(0.05));
  }

  SUBCASE("laplace has variance 2") {
    Matrix s = sample_prior(PriorSpec{PriorKind::laplace, 100}, 1000, rng);
    const double n = static_cast<double>(s.size());
    double mean = 0.0;
    for (float v : s.data) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : s.data) var += (v - mean) * (v - mean);
    var /= n - 1;
    CHECK(std::abs(mean) <= 3.0 * std::sqrt(2.0 / n));
    CHECK(var == doctest::Approx(2.0).epsilon(0.06));
  }

  SUBCASE("unknown kind string is a config error") {
    CHECK_THROWS_AS(prior_kind_from_string("cauchy"), EtlError);
  }
}

TEST_CASE("shared-user degeneration: trans5 with identity W") {
  Rng rng(61);
  EtlModel m = toy_model(8, 10, 4, 6, TransformKind::trans5, 62);
  m.transform.w = Matrix(4, 4);
  for (uint32_t i = 0; i < 4; ++i) m.transform.w.at(i, i) = 1.0f;

  std::vector<SparseRow> xb = testutil::random_rows(3, 10, 2, 5, rng);
  Matrix z_b = encode(xb, Domain::b, m, false, 0.0f, rng);
  Matrix direct = decode(z_b, Domain::a, m);
  Matrix via_transform =
      decode(transform_apply(z_b, m.transform, TransDir::b_to_a), Domain::a, m);
  for (size_t i = 0; i < direct.data.size(); ++i)
    CHECK(via_transform.data[i] == doctest::Approx(direct.data[i]).epsilon(1e-6));
}

TEST_CASE("checkpoint round-trip for every transform kind") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "etl_test_ckpt";
  fs::create_directories(dir);

  for (TransformKind kind : {TransformKind::trans1, TransformKind::trans2,
                             TransformKind::trans3, TransformKind::trans4,
                             TransformKind::trans5}) {
    EtlModel m = toy_model(6, 9, 3, 5, kind, 100 + static_cast<int>(kind));
    const fs::path path = dir / ("model_" + std::string(to_string(kind)) + ".etl1");
    save_checkpoint(m, path.string());
    EtlModel loaded = load_checkpoint(path.string());
    CHECK(loaded.transform.kind == kind);
    CHECK(loaded.dims.d == m.dims.d);
    CHECK(loaded.dims.n_items_a == 6);
    CHECK(loaded.dims.n_items_b == 9);
    CHECK(loaded.enc_a.w1.data == m.enc_a.w1.data);
    CHECK(loaded.dec_b.w2.data == m.dec_b.w2.data);
    CHECK(loaded.disc_a.b2.data == m.disc_a.b2.data);
    if (kind == TransformKind::trans5) CHECK(loaded.transform.w.data == m.transform.w.data);
    if (kind == TransformKind::trans3) CHECK(loaded.transform.w_ba.data == m.transform.w_ba.data);
    if (kind == TransformKind::trans4)
      CHECK(loaded.transform.w_ab2.data == m.transform.w_ab2.data);
    CHECK(model_config_hash(loaded) == model_config_hash(m));
  }

  SUBCASE("bad magic is a format error") {
    const fs::path path = dir / "bad.etl1";
    std::ofstream out(path, std::ios::binary);
    out << "NOPE then some garbage";
    out.close();
    try {
      load_checkpoint(path.string());
      FAIL("expected format error");
    } catch (const EtlError& e) {
      CHECK(e.category() == ErrorCategory::format);
    }
  }

  SUBCASE("truncated file is a format error") {
    EtlModel m = toy_model(4, 4, 2, 3, TransformKind::trans5, 3);
    const fs::path path = dir / "trunc.etl1";
    save_checkpoint(m, path.string());
    const auto size = fs::file_size(path);
    fs::resize_file(path, size / 2);
    CHECK_THROWS_AS(load_checkpoint(path.string()), EtlError);
  }
}

TEST_CASE("reorthogonalize produces an orthogonal matrix") {
  Rng rng(71);
  Matrix w = testutil::random_matrix(8, 8, -1.0f, 1.0f, rng);
  reorthogonalize(w);
  CHECK(orthogonality_residual_l1(w) <= 1e-4);
}
