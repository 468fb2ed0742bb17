#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "etl/config.hpp"
#include "etl/dataio.hpp"

using namespace etl;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  static fs::path p = [] {
    fs::path dir = fs::temp_directory_path() / "etl_cli_tests";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
  }();
  return p;
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  const fs::path log = work_dir() / "last_command.log";
  const std::string cmd =
      std::string(ETL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output != nullptr) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  return WEXITSTATUS(status);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config round-trip and validation") {
  SUBCASE("defaults survive print/parse") {
    RunConfig def;
    CHECK(parse_config(print_config(def)) == def);
  }

  SUBCASE("non-default values survive print/parse") {
    RunConfig cfg;
    config_set(cfg, "d", "64");
    config_set(cfg, "lambda", "5");
    config_set(cfg, "eta", "0.25");
    config_set(cfg, "prior", "laplace");
    config_set(cfg, "transform", "trans3");
    config_set(cfg, "trans_act", "tanh");
    config_set(cfg, "penalty_norm", "frobenius");
    config_set(cfg, "ablation", "aae++");
    config_set(cfg, "cutoffs", "3,7,20");
    config_set(cfg, "train_ratio", "0.6");
    config_set(cfg, "dataset", "/tmp/ds");
    config_set(cfg, "out", "/tmp/run");
    CHECK(parse_config(print_config(cfg)) == cfg);
  }

  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(parse_config("nonsense = 1\n"), EtlError);
    RunConfig cfg;
    CHECK_THROWS_AS(config_set(cfg, "lr_schedule", "cosine"), EtlError);
  }

  SUBCASE("bad values are config errors") {
    CHECK_THROWS_AS(parse_config("d = twelve\n"), EtlError);
    CHECK_THROWS_AS(parse_config("prior = cauchy\n"), EtlError);
    CHECK_THROWS_AS(parse_config("d 12\n"), EtlError);
  }

  SUBCASE("comments and blank lines are ignored") {
    RunConfig cfg = parse_config("# a comment\n\nd = 32  # trailing\n");
    CHECK(cfg.train.d == 32);
  }
}

TEST_CASE("cli synth/train/eval round trip") {
  const fs::path dir = work_dir();
  const fs::path ds = dir / "ds";
  std::string out;

  REQUIRE(run_cli("synth --users 120 --items-a 130 --items-b 140 --shared-dim 4"
                  " --specific-dim 2 --sparsity 0.05 --seed 5 --negatives 30 --out " +
                      ds.string(),
                  &out) == 0);
  CHECK(out.find("stats domain=a users=120 items=130") != std::string::npos);
  CHECK(out.find("stats domain=b users=120 items=140") != std::string::npos);
  CHECK(fs::exists(ds / "manifest"));
  CHECK(fs::exists(ds / "ground_truth.etl1"));

  SUBCASE("printed density equals interactions / (users * items)") {
    std::stringstream ss(out);
    std::string line;
    bool found = false;
    while (std::getline(ss, line)) {
      if (line.rfind("stats domain=a", 0) != 0) continue;
      found = true;
      size_t ipos = line.find("interactions=");
      size_t dpos = line.find("density=");
      REQUIRE(ipos != std::string::npos);
      const double interactions = std::stod(line.substr(ipos + 13));
      const double density = std::stod(line.substr(dpos + 8));
      CHECK(density == doctest::Approx(interactions / (120.0 * 130.0)).epsilon(1e-9));
    }
    CHECK(found);
  }

  SUBCASE("synth is reproducible and seed-sensitive") {
    const fs::path ds2 = dir / "ds_same";
    const fs::path ds3 = dir / "ds_other";
    REQUIRE(run_cli("synth --users 120 --items-a 130 --items-b 140 --shared-dim 4"
                    " --specific-dim 2 --sparsity 0.05 --seed 5 --negatives 30 --out " +
                    ds2.string()) == 0);
    REQUIRE(run_cli("synth --users 120 --items-a 130 --items-b 140 --shared-dim 4"
                    " --specific-dim 2 --sparsity 0.05 --seed 6 --negatives 30 --out " +
                    ds3.string()) == 0);
    CHECK(dataset_hash(load_dataset(ds.string())) ==
          dataset_hash(load_dataset(ds2.string())));
    CHECK(dataset_hash(load_dataset(ds.string())) !=
          dataset_hash(load_dataset(ds3.string())));
    for (const char* f : {"manifest", "users.tsv", "items_a.tsv", "train_a.bin",
                          "eval_b.bin"})
      CHECK(read_file(ds / f) == read_file(ds2 / f));
  }

  // minimal but real training run
  const fs::path run1 = dir / "run1";
  const fs::path run2 = dir / "run2";
  const std::string train_args =
      "train --set d=8 --set hidden=16 --set disc_hidden=8 --set batch=32"
      " --set epochs=3 --set seed=11 --set eval_interval=1 --dataset " +
      ds.string();
  REQUIRE(run_cli(train_args + " --out " + run1.string(), &out) == 0);
  CHECK(out.find("train: best_epoch=") != std::string::npos);
  for (const char* f : {"config.txt", "log.csv", "model.etl1", "metrics.csv",
                        "metrics.json"})
    CHECK(fs::exists(run1 / f));

  SUBCASE("identical seed reruns are byte-identical (log + checkpoint)") {
    REQUIRE(run_cli(train_args + " --out " + run2.string()) == 0);
    CHECK(read_file(run1 / "log.csv") == read_file(run2 / "log.csv"));
    CHECK(read_file(run1 / "model.etl1") == read_file(run2 / "model.etl1"));
    CHECK(read_file(run1 / "metrics.csv") == read_file(run2 / "metrics.csv"));
  }

  SUBCASE("log.csv has the documented columns") {
    std::ifstream log(run1 / "log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "epoch,jrl,penalty,disc,gen,val_ndcg10_a,val_ndcg10_b");
    int lines = 0;
    std::string line;
    while (std::getline(log, line)) ++lines;
    CHECK(lines == 3);
  }

  SUBCASE("eval reads the checkpoint back") {
    REQUIRE(run_cli("eval --checkpoint " + (run1 / "model.etl1").string() +
                        " --dataset " + ds.string() + " --phase test --out " +
                        (dir / "eval_out").string(),
                    &out) == 0);
    CHECK(out.find("a,test,hr,5,") != std::string::npos);
    CHECK(out.find("b,test,ndcg,10,") != std::string::npos);
    CHECK(fs::exists(dir / "eval_out" / "metrics.csv"));
    CHECK(fs::exists(dir / "eval_out" / "metrics.json"));
  }

  SUBCASE("analyze appends mmd and probe blocks to metrics.json") {
    REQUIRE(run_cli("analyze --checkpoint " + (run1 / "model.etl1").string() +
                        " --dataset " + ds.string() + " --which mmd --out " +
                        run1.string(),
                    &out) == 0);
    CHECK(out.find("mmd = ") != std::string::npos);
    REQUIRE(run_cli("analyze --checkpoint " + (run1 / "model.etl1").string() +
                        " --dataset " + ds.string() +
                        " --which probe --probe-runs 2 --probe-epochs 10 --out " +
                        run1.string(),
                    &out) == 0);
    CHECK(out.find("probe_auc = ") != std::string::npos);
    const std::string json = read_file(run1 / "metrics.json");
    CHECK(json.find("\"analysis\"") != std::string::npos);
    CHECK(json.find("\"mmd\"") != std::string::npos);
    CHECK(json.find("\"probe_auc\"") != std::string::npos);
  }

  SUBCASE("train-ratio 1.0 leaves the dataset hash unchanged") {
    // covered at the library level; here just confirm the flag parses
    REQUIRE(run_cli(train_args + " --set train_ratio=1.0 --out " +
                    (dir / "run_ratio").string()) == 0);
  }
}

TEST_CASE("cli error reporting") {
  std::string out;

  SUBCASE("missing checkpoint is a one-line io error") {
    const int code = run_cli("eval --checkpoint /nonexistent/model.etl1 --dataset /nonexistent",
                             &out);
    CHECK(code == 2);
    CHECK(out.rfind("error[io]:", 0) == 0);
    CHECK(std::count(out.begin(), out.end(), '\n') == 1);
  }

  SUBCASE("bad config value is a config error") {
    const int code = run_cli("train --set prior=cauchy --dataset x --out y", &out);
    CHECK(code == 2);
    CHECK(out.rfind("error[config]:", 0) == 0);
  }

  SUBCASE("bad ratings file is an io error") {
    const int code = run_cli("prepare --ratings-a /missing_a.csv --ratings-b /missing_b.csv"
                             " --out /tmp/etl_prepare_fail",
                             &out);
    CHECK(code == 2);
    CHECK(out.rfind("error[io]:", 0) == 0);
  }
}

TEST_CASE("cli prepare on a toy ratings fixture") {
  const fs::path dir = work_dir();
  const fs::path ra = dir / "ratings_a.csv";
  const fs::path rb = dir / "ratings_b.csv";

  // 20 users in two groups with overlapping 8-item windows over 12 items, so
  // k-core(5) keeps everything and every user still has never-interacted items
  std::ofstream fa(ra), fb(rb);
  for (int u = 0; u < 20; ++u) {
    const int base = u < 10 ? 0 : 4;
    for (int i = base; i < base + 8; ++i) {
      fa << "user" << u << ",itemA" << i << "," << (3 + (u + i) % 3) << ".0,"
         << 1000 + u * 10 + i << "\n";
      fb << "user" << u << ",itemB" << i << "," << (3 + (u * i) % 3) << ".0,"
         << 2000 + u * 10 + i << "\n";
    }
  }
  fa << "user0,itemA0,9.9,0\n";  // malformed rating, must be skipped (1/161 < 1%)
  fa.close();
  fb.close();

  std::string out;
  const fs::path ds = dir / "prepared";
  REQUIRE(run_cli("prepare --ratings-a " + ra.string() + " --ratings-b " + rb.string() +
                      " --out " + ds.string() + " --seed 3 --negatives 3",
                  &out) == 0);
  CHECK(out.find("skipped 1") != std::string::npos);
  PairedDataset loaded = load_dataset(ds.string());
  CHECK(loaded.n_users() == 20);
  CHECK(loaded.domain_a.n_items == 12);
  CHECK(loaded.n_negatives == 3);

  SUBCASE("same seed gives an identical dataset directory") {
    const fs::path ds2 = dir / "prepared2";
    REQUIRE(run_cli("prepare --ratings-a " + ra.string() + " --ratings-b " +
                    rb.string() + " --out " + ds2.string() + " --seed 3 --negatives 3") ==
            0);
    CHECK(dataset_hash(load_dataset(ds.string())) ==
          dataset_hash(load_dataset(ds2.string())));
  }
}

TEST_CASE("cli sweep emits one csv row per run and report summarizes") {
  const fs::path dir = work_dir();
  const fs::path ds = dir / "ds_sweep";
  REQUIRE(run_cli("synth --users 80 --items-a 110 --items-b 110 --shared-dim 3"
                  " --specific-dim 2 --sparsity 0.06 --seed 9 --negatives 20 --out " +
                  ds.string()) == 0);

  const fs::path sweep_dir = dir / "sweep";
  std::string out;
  REQUIRE(run_cli("sweep --set d=6 --set hidden=12 --set disc_hidden=6"
                  " --set batch=32 --set epochs=2 --set eval_interval=2 --dataset " +
                      ds.string() + " --vary lambda=0.5,2.0 --vary seed=1,2 --out " +
                      sweep_dir.string(),
                  &out) == 0);
  CHECK(out.find("sweep complete: 4 runs") != std::string::npos);

  std::ifstream csv(sweep_dir / "sweep.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.rfind("run,lambda,seed,best_epoch,val_ndcg10", 0) == 0);
  CHECK(header.find("test_hr10_a") != std::string::npos);
  CHECK(header.find("test_mrr5_b") != std::string::npos);
  int rows = 0;
  std::string line;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);
  for (int r = 0; r < 4; ++r) {
    char name[16];
    std::snprintf(name, sizeof(name), "run_%03d", r);
    CHECK(fs::exists(sweep_dir / name / "model.etl1"));
  }

  SUBCASE("report groups rows and runs the paired t-test") {
    REQUIRE(run_cli("report --sweep " + (sweep_dir / "sweep.csv").string() +
                        " --metric test_hr10_a --group-by lambda --paired-by seed"
                        " --compare 0.5,2.0 --out " +
                        (dir / "report.json").string(),
                    &out) == 0);
    CHECK(out.find("lambda=0.5 n=2") != std::string::npos);
    CHECK(out.find("lambda=2.0 n=2") != std::string::npos);
    CHECK(out.find("paired t-test") != std::string::npos);
    const std::string rj = read_file(dir / "report.json");
    CHECK(rj.find("\"ttest\"") != std::string::npos);
  }
}
