#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "etl/analysis.hpp"
#include "etl/config.hpp"
#include "etl/eval.hpp"
#include "etl/synth.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void print_dataset_stats(const etl::PairedDataset& ds) {
  auto domain_stats = [&](const char* name, const etl::InteractionMatrix& m,
                          const etl::EvalSplit&) {
    size_t interactions = 0;
    for (const auto& row : m.rows) interactions += row.nnz();
    interactions += 2 * size_t(m.n_users);  // reserved val/test items
    const double density =
        double(interactions) / (double(m.n_users) * double(m.n_items));
    char dbuf[32];
    std::snprintf(dbuf, sizeof(dbuf), "%.10g", density);
    std::cout << "stats domain=" << name << " users=" << m.n_users
              << " items=" << m.n_items << " interactions=" << interactions
              << " density=" << dbuf << "\n";
  };
  domain_stats("a", ds.domain_a, ds.eval_a);
  domain_stats("b", ds.domain_b, ds.eval_b);
}

etl::PairedDataset load_dataset_for_run(const etl::RunConfig& cfg) {
  etl::require(!cfg.dataset.empty(), etl::ErrorCategory::config,
               "config key `dataset` is required");
  etl::PairedDataset ds = etl::load_dataset(cfg.dataset);
  if (cfg.train_ratio != 1.0) {
    // Deterministic subsample keyed by the run seed; val/test stay fixed.
    etl::Rng rng(cfg.train.seed ^ 0x5b5a7a11ce5eedULL);
    etl::subsample_train(ds, cfg.train_ratio, rng);
  }
  return ds;
}

json metrics_json_of(const etl::MetricsReport& report) {
  return json::parse(etl::metrics_to_json(report, now_ms()));
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  etl::require(out.good(), etl::ErrorCategory::io, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

etl::MetricsReport merge_reports(const etl::MetricsReport& a,
                                 const etl::MetricsReport& b) {
  etl::MetricsReport merged = a;
  merged.entries.insert(merged.entries.end(), b.entries.begin(), b.entries.end());
  return merged;
}

// Runs training end to end for one config; returns the best-model test report.
etl::MetricsReport run_training(const etl::RunConfig& cfg, const fs::path& out_dir,
                                bool quiet) {
  etl::PairedDataset ds = load_dataset_for_run(cfg);
  fs::create_directories(out_dir);
  etl::save_config(cfg, (out_dir / "config.txt").string());

  etl::FitResult fit = etl::fit(ds, cfg.train);
  etl::write_log_csv((out_dir / "log.csv").string(), fit);
  etl::save_checkpoint(fit.best_model, (out_dir / "model.etl1").string());

  etl::MetricsReport val_report =
      etl::evaluate(fit.best_model, ds, etl::Phase::val, cfg.train.cutoffs);
  etl::MetricsReport test_report =
      etl::evaluate(fit.best_model, ds, etl::Phase::test, cfg.train.cutoffs);
  etl::MetricsReport merged = merge_reports(val_report, test_report);
  etl::write_metrics_csv((out_dir / "metrics.csv").string(), merged);
  write_json(out_dir / "metrics.json", metrics_json_of(merged));

  if (!quiet) {
    double total_ms = 0.0;
    for (const auto& s : fit.stats) total_ms += s.wall_ms;
    std::cout << "train: best_epoch=" << fit.best_epoch
              << " val_ndcg10=" << fit.best_val_ndcg << " epochs=" << fit.stats.size()
              << " wall_ms=" << total_ms << "\n";
    for (const auto& e : test_report.entries) {
      if (e.metric == "mrr_uncut") continue;
      std::cout << "test " << etl::to_string(e.domain) << " " << e.metric << "@" << e.k
                << " = " << e.value << "\n";
    }
  }
  return test_report;
}

json load_or_new_json(const fs::path& path) {
  if (!fs::exists(path)) return json::object();
  std::ifstream in(path);
  etl::require(in.good(), etl::ErrorCategory::io, "cannot read " + path.string());
  json j;
  in >> j;
  return j;
}

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  etl::require(in.good(), etl::ErrorCategory::io, "cannot read " + path.string());
  std::string line;
  etl::require(static_cast<bool>(std::getline(in, line)), etl::ErrorCategory::format,
               "empty csv: " + path.string());
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::map<std::string, std::string> row;
    for (const std::string& col : header) {
      if (!std::getline(ss, cell, ',')) cell = "";
      row[col] = cell;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain recommender with equivalent latent transformations"};
  app.require_subcommand(1);

  // ---- prepare ----
  auto* prepare = app.add_subcommand("prepare", "Build a paired dataset from ratings");
  std::string ratings_a, ratings_b, prepare_out;
  uint64_t prepare_seed = 1;
  uint32_t min_count = 5, prepare_negatives = 99;
  float threshold = 3.0f;
  bool prepare_shared_negs = false;
  prepare->add_option("--ratings-a", ratings_a, "domain a csv")->required();
  prepare->add_option("--ratings-b", ratings_b, "domain b csv")->required();
  prepare->add_option("--out", prepare_out, "output dataset dir")->required();
  prepare->add_option("--seed", prepare_seed, "split seed");
  prepare->add_option("--min-count", min_count, "k-core minimum interactions");
  prepare->add_option("--negatives", prepare_negatives, "negatives per user");
  prepare->add_option("--threshold", threshold, "positive rating threshold");
  prepare->add_flag("--shared-negatives", prepare_shared_negs,
                    "reuse one negative set for val and test");

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  etl::SynthConfig synth_cfg;
  std::string synth_out;
  synth->add_option("--users", synth_cfg.n_users, "user count");
  synth->add_option("--items-a", synth_cfg.n_items_a, "items in domain a");
  synth->add_option("--items-b", synth_cfg.n_items_b, "items in domain b");
  synth->add_option("--shared-dim", synth_cfg.shared_dim, "shared factor width");
  synth->add_option("--specific-dim", synth_cfg.specific_dim, "specific factor width");
  synth->add_option("--sparsity", synth_cfg.sparsity, "interaction density, domain a");
  synth->add_option("--sparsity-b", synth_cfg.sparsity_b,
                    "domain b density (default: same as --sparsity)");
  synth->add_option("--gain", synth_cfg.gain, "logit scale");
  synth->add_option("--seed", synth_cfg.seed, "generation seed");
  synth->add_option("--negatives", synth_cfg.n_negatives, "negatives per user");
  synth->add_flag("--shared-negatives", synth_cfg.shared_negatives,
                  "reuse one negative set for val and test");
  synth->add_option("--out", synth_out, "output dataset dir")->required();

  // ---- train ----
  auto* train = app.add_subcommand("train", "Train a model");
  std::string train_config_path;
  std::vector<std::string> train_sets;
  std::string train_dataset_override, train_out_override;
  train->add_option("--config", train_config_path, "config file");
  train->add_option("--set", train_sets, "key=value override (repeatable)");
  train->add_option("--dataset", train_dataset_override, "dataset dir override");
  train->add_option("--out", train_out_override, "run dir override");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_checkpoint, eval_dataset, eval_phase = "test", eval_out;
  std::vector<uint32_t> eval_cutoffs = {5, 10};
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "model.etl1 path")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "dataset dir")->required();
  eval_cmd->add_option("--phase", eval_phase, "val or test");
  eval_cmd->add_option("--out", eval_out, "output dir (metrics.csv/json)");
  eval_cmd->add_option("--cutoffs", eval_cutoffs, "rank cutoffs");

  // ---- analyze ----
  auto* analyze = app.add_subcommand("analyze", "Latent diagnostics (mmd or probe)");
  std::string an_checkpoint, an_dataset, an_which = "mmd", an_out;
  std::vector<double> an_sigmas;
  uint32_t probe_hidden = 100, probe_epochs = 100, probe_runs = 10;
  uint64_t an_seed = 1;
  analyze->add_option("--checkpoint", an_checkpoint, "model.etl1 path")->required();
  analyze->add_option("--dataset", an_dataset, "dataset dir")->required();
  analyze->add_option("--which", an_which, "mmd or probe");
  analyze->add_option("--out", an_out, "dir whose metrics.json receives results");
  analyze->add_option("--sigmas", an_sigmas, "rbf bandwidths (default 1 2 4 8 16)");
  analyze->add_option("--probe-hidden", probe_hidden, "probe hidden width");
  analyze->add_option("--probe-epochs", probe_epochs, "probe training epochs");
  analyze->add_option("--probe-runs", probe_runs, "probe repetitions");
  analyze->add_option("--seed", an_seed, "probe seed");

  // ---- sweep ----
  auto* sweep = app.add_subcommand("sweep", "Grid of training runs");
  std::string sweep_config_path, sweep_out, sweep_dataset;
  std::vector<std::string> sweep_vary, sweep_sets;
  sweep->add_option("--config", sweep_config_path, "base config file");
  sweep->add_option("--dataset", sweep_dataset, "dataset dir override");
  sweep->add_option("--set", sweep_sets, "base key=value override (repeatable)");
  sweep->add_option("--vary", sweep_vary, "key=v1,v2,... grid axis (repeatable)")
      ->required();
  sweep->add_option("--out", sweep_out, "sweep output dir")->required();

  // ---- report ----
  auto* report = app.add_subcommand("report", "Summarize a sweep csv");
  std::string report_sweep, report_metric, report_group, report_paired = "seed";
  std::string report_compare_arg;
  std::string report_out;
  report->add_option("--sweep", report_sweep, "sweep.csv path")->required();
  report->add_option("--metric", report_metric, "metric column")->required();
  report->add_option("--group-by", report_group, "grouping column")->required();
  report->add_option("--paired-by", report_paired, "pairing column for the t-test");
  report->add_option("--compare", report_compare_arg,
                     "two comma-separated group values for a paired t-test");
  report->add_option("--out", report_out, "report.json path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare) {
      etl::RawRatings raw_a = etl::load_interactions(ratings_a);
      etl::RawRatings raw_b = etl::load_interactions(ratings_b);
      std::cout << "loaded a=" << raw_a.records.size() << " (skipped "
                << raw_a.skipped_lines << "), b=" << raw_b.records.size()
                << " (skipped " << raw_b.skipped_lines << ")\n";
      etl::ImplicitRecords rec_a = etl::kcore_filter(etl::binarize(raw_a, threshold),
                                                     min_count);
      etl::ImplicitRecords rec_b = etl::kcore_filter(etl::binarize(raw_b, threshold),
                                                     min_count);
      etl::PairedDataset skeleton = etl::pair_domains(rec_a, rec_b);
      skeleton.seed = prepare_seed;
      skeleton.min_count = min_count;
      etl::Rng rng(prepare_seed);
      etl::PairedDataset ds =
          etl::loo_split(skeleton, prepare_negatives, rng, prepare_shared_negs);
      etl::save_dataset(ds, prepare_out);
      print_dataset_stats(ds);
      std::cout << "dataset written to " << prepare_out << "\n";
    } else if (*synth) {
      etl::SynthResult result = etl::generate_synthetic(synth_cfg);
      etl::save_dataset(result.dataset, synth_out);
      etl::save_ground_truth(result.ground_truth,
                             (fs::path(synth_out) / "ground_truth.etl1").string(),
                             synth_cfg.seed);
      print_dataset_stats(result.dataset);
      std::cout << "dataset written to " << synth_out << "\n";
    } else if (*train) {
      etl::RunConfig cfg;
      if (!train_config_path.empty()) cfg = etl::load_config(train_config_path);
      for (const std::string& kv : train_sets) {
        const size_t eq = kv.find('=');
        etl::require(eq != std::string::npos, etl::ErrorCategory::config,
                     "--set expects key=value, got: " + kv);
        etl::config_set(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (!train_dataset_override.empty()) cfg.dataset = train_dataset_override;
      if (!train_out_override.empty()) cfg.out = train_out_override;
      etl::require(!cfg.out.empty(), etl::ErrorCategory::config,
                   "config key `out` is required");
      run_training(cfg, cfg.out, false);
    } else if (*eval_cmd) {
      etl::require(eval_phase == "val" || eval_phase == "test",
                   etl::ErrorCategory::config, "--phase must be val or test");
      etl::EtlModel model = etl::load_checkpoint(eval_checkpoint);
      etl::PairedDataset ds = etl::load_dataset(eval_dataset);
      etl::MetricsReport rep =
          etl::evaluate(model, ds, eval_phase == "val" ? etl::Phase::val : etl::Phase::test,
                        eval_cutoffs);
      std::cout << "domain,phase,metric,k,value\n";
      for (const auto& e : rep.entries)
        std::cout << etl::to_string(e.domain) << ',' << etl::to_string(e.phase) << ','
                  << e.metric << ',' << e.k << ',' << e.value << "\n";
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        etl::write_metrics_csv((fs::path(eval_out) / "metrics.csv").string(), rep);
        write_json(fs::path(eval_out) / "metrics.json", metrics_json_of(rep));
      }
    } else if (*analyze) {
      etl::require(an_which == "mmd" || an_which == "probe", etl::ErrorCategory::config,
                   "--which must be mmd or probe");
      etl::EtlModel model = etl::load_checkpoint(an_checkpoint);
      etl::PairedDataset ds = etl::load_dataset(an_dataset);
      etl::Matrix z_a = etl::encode_all_users(model, ds, etl::Domain::a);
      etl::Matrix z_b = etl::encode_all_users(model, ds, etl::Domain::b);

      json analysis = json::object();
      if (an_which == "mmd") {
        std::vector<double> sigmas(an_sigmas);
        if (sigmas.empty())
          sigmas.assign(etl::default_mmd_sigmas().begin(),
                        etl::default_mmd_sigmas().end());
        const double mmd = etl::mmd_rbf(z_a, z_b, sigmas);
        analysis["mmd"] = {{"value", mmd}, {"sigmas", sigmas}};
        std::cout << "mmd = " << mmd << "\n";
      } else {
        etl::Rng rng(an_seed);
        std::vector<double> aucs;
        for (uint32_t run = 0; run < probe_runs; ++run) {
          etl::Rng run_rng = rng.split();
          etl::ProbeDataset probe = etl::build_probe(z_a, z_b, run_rng);
          std::vector<float> scores =
              etl::train_probe(probe, probe_hidden, probe_epochs, run_rng);
          std::vector<uint8_t> labels;
          labels.reserve(probe.test_idx.size());
          for (uint32_t idx : probe.test_idx) labels.push_back(probe.labels[idx]);
          aucs.push_back(etl::auc(scores, labels));
        }
        double mean = 0.0;
        for (double v : aucs) mean += v;
        mean /= double(aucs.size());
        analysis["probe_auc"] = {{"mean", mean}, {"runs", aucs}};
        std::cout << "probe_auc = " << mean << "\n";
      }

      if (!an_out.empty()) {
        fs::create_directories(an_out);
        const fs::path json_path = fs::path(an_out) / "metrics.json";
        json j = load_or_new_json(json_path);
        for (auto& [k, v] : analysis.items()) j["analysis"][k] = v;
        write_json(json_path, j);
      }
    } else if (*sweep) {
      etl::RunConfig base;
      if (!sweep_config_path.empty()) base = etl::load_config(sweep_config_path);
      for (const std::string& kv : sweep_sets) {
        const size_t eq = kv.find('=');
        etl::require(eq != std::string::npos, etl::ErrorCategory::config,
                     "--set expects key=value, got: " + kv);
        etl::config_set(base, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (!sweep_dataset.empty()) base.dataset = sweep_dataset;
      std::vector<std::pair<std::string, std::vector<std::string>>> axes;
      for (const std::string& spec : sweep_vary) {
        const size_t eq = spec.find('=');
        etl::require(eq != std::string::npos, etl::ErrorCategory::config,
                     "--vary expects key=v1,v2,..., got: " + spec);
        std::vector<std::string> values;
        std::stringstream ss(spec.substr(eq + 1));
        std::string v;
        while (std::getline(ss, v, ',')) values.push_back(v);
        etl::require(!values.empty(), etl::ErrorCategory::config,
                     "--vary has no values: " + spec);
        axes.emplace_back(spec.substr(0, eq), values);
      }

      fs::create_directories(sweep_out);
      std::ofstream csv(fs::path(sweep_out) / "sweep.csv");
      etl::require(csv.good(), etl::ErrorCategory::io, "cannot write sweep.csv");
      csv << "run";
      for (const auto& [key, _] : axes) csv << ',' << key;
      const std::vector<uint32_t>& ks = base.train.cutoffs;
      csv << ",best_epoch,val_ndcg10";
      for (const char* dom : {"a", "b"})
        for (uint32_t k : ks)
          csv << ",test_hr" << k << '_' << dom << ",test_ndcg" << k << '_' << dom
              << ",test_mrr" << k << '_' << dom;
      csv << "\n";

      size_t total = 1;
      for (const auto& [_, values] : axes) total *= values.size();
      for (size_t run = 0; run < total; ++run) {
        etl::RunConfig cfg = base;
        size_t rem = run;
        std::vector<std::string> chosen;
        for (const auto& [key, values] : axes) {
          const std::string& value = values[rem % values.size()];
          rem /= values.size();
          etl::config_set(cfg, key, value);
          chosen.push_back(value);
        }
        char run_name[32];
        std::snprintf(run_name, sizeof(run_name), "run_%03zu", run);
        const fs::path run_dir = fs::path(sweep_out) / run_name;
        std::cout << "sweep " << run_name;
        for (size_t i = 0; i < axes.size(); ++i)
          std::cout << ' ' << axes[i].first << '=' << chosen[i];
        std::cout << std::endl;

        etl::PairedDataset ds = load_dataset_for_run(cfg);
        fs::create_directories(run_dir);
        etl::save_config(cfg, (run_dir / "config.txt").string());
        etl::FitResult fit = etl::fit(ds, cfg.train);
        etl::write_log_csv((run_dir / "log.csv").string(), fit);
        etl::save_checkpoint(fit.best_model, (run_dir / "model.etl1").string());
        etl::MetricsReport test_rep =
            etl::evaluate(fit.best_model, ds, etl::Phase::test, ks);
        etl::write_metrics_csv((run_dir / "metrics.csv").string(), test_rep);
        write_json(run_dir / "metrics.json", metrics_json_of(test_rep));

        csv << run_name;
        for (const std::string& value : chosen) csv << ',' << value;
        csv << ',' << fit.best_epoch << ',' << fit.best_val_ndcg;
        for (etl::Domain dom : {etl::Domain::a, etl::Domain::b})
          for (uint32_t k : ks)
            csv << ',' << test_rep.get(dom, etl::Phase::test, "hr", k) << ','
                << test_rep.get(dom, etl::Phase::test, "ndcg", k) << ','
                << test_rep.get(dom, etl::Phase::test, "mrr", k);
        csv << "\n";
        csv.flush();
      }
      std::cout << "sweep complete: " << total << " runs\n";
    } else if (*report) {
      auto rows = read_csv(report_sweep);
      etl::require(!rows.empty(), etl::ErrorCategory::format, "sweep csv has no rows");
      std::map<std::string, std::vector<double>> groups;
      std::map<std::string, std::map<std::string, double>> paired;  // group -> key -> v
      for (const auto& row : rows) {
        etl::require(row.count(report_group) && row.count(report_metric),
                     etl::ErrorCategory::format, "missing column in sweep csv");
        const std::string g = row.at(report_group);
        const double v = std::stod(row.at(report_metric));
        groups[g].push_back(v);
        if (row.count(report_paired)) paired[g][row.at(report_paired)] = v;
      }
      json out_json;
      for (const auto& [g, values] : groups) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= double(values.size());
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        const double sd = values.size() > 1 ? std::sqrt(ss / double(values.size() - 1)) : 0.0;
        std::cout << report_group << '=' << g << " n=" << values.size()
                  << " mean=" << mean << " sd=" << sd << "\n";
        out_json["groups"][g] = {{"n", values.size()}, {"mean", mean}, {"sd", sd}};
      }
      std::vector<std::string> report_compare;
      if (!report_compare_arg.empty()) {
        std::stringstream ss(report_compare_arg);
        std::string part;
        while (std::getline(ss, part, ',')) report_compare.push_back(part);
        etl::require(report_compare.size() == 2, etl::ErrorCategory::config,
                     "--compare expects exactly two comma-separated values");
      }
      if (report_compare.size() == 2) {
        const auto& pa = paired[report_compare[0]];
        const auto& pb = paired[report_compare[1]];
        std::vector<double> a, b;
        for (const auto& [key, v] : pa) {
          auto it = pb.find(key);
          if (it != pb.end()) {
            a.push_back(v);
            b.push_back(it->second);
          }
        }
        etl::TTestResult t = etl::paired_ttest(a, b);
        std::cout << "paired t-test " << report_compare[0] << " vs "
                  << report_compare[1] << ": t=" << t.t << " p=" << t.p
                  << " (n=" << a.size() << ")\n";
        out_json["analysis"]["ttest"] = {{"metric", report_metric},
                                         {"group_a", report_compare[0]},
                                         {"group_b", report_compare[1]},
                                         {"n", a.size()},
                                         {"t", t.t},
                                         {"p", t.p}};
      }
      if (!report_out.empty()) write_json(report_out, out_json);
    }
  } catch (const etl::EtlError& e) {
    std::cerr << "error[" << etl::to_string(e.category()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
