#include "etl/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace etl {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t out = std::stoull(v, &pos);
    require(pos == v.size(), ErrorCategory::config, "bad integer for " + key);
    return out;
  } catch (const EtlError&) {
    throw;
  } catch (...) {
    fail(ErrorCategory::config, "bad integer for " + key + ": " + v);
  }
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double out = std::stod(v, &pos);
    require(pos == v.size(), ErrorCategory::config, "bad number for " + key);
    return out;
  } catch (const EtlError&) {
    throw;
  } catch (...) {
    fail(ErrorCategory::config, "bad number for " + key + ": " + v);
  }
}

std::vector<uint32_t> parse_u32_list(const std::string& key, const std::string& v) {
  std::vector<uint32_t> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    out.push_back(static_cast<uint32_t>(parse_u64(key, part)));
  }
  require(!out.empty(), ErrorCategory::config, "empty list for " + key);
  return out;
}

std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
  TrainConfig& t = cfg.train;
  if (key == "d")
    t.d = static_cast<uint32_t>(parse_u64(key, value));
  else if (key == "hidden")
    t.hidden = static_cast<uint32_t>(parse_u64(key, value));
  else if (key == "disc_hidden")
    t.disc_hidden = static_cast<uint32_t>(parse_u64(key, value));
  else if (key == "lr")
    t.lr = static_cast<float>(parse_f64(key, value));
  else if (key == "batch")
    t.batch = static_cast<uint32_t>(parse_u64(key, value));
  else if (key == "epochs")
    t.epochs = static_cast<uint32_t>(parse_u64(key, value));
  else if (key == "dropout")
    t.dropout = static_cast<float>(parse_f64(key, value));
  else if (key == "lambda")
    t.lambda = static_cast<float>(parse_f64(key, value));
  else if (key == "eta")
    t.eta = static_cast<float>(parse_f64(key, value));
  else if (key == "prior")
    t.prior = prior_kind_from_string(value);
  else if (key == "transform")
    t.transform = transform_kind_from_string(value);
  else if (key == "trans_act") {
    if (value == "relu")
      t.trans_act = TransAct::relu;
    else if (value == "tanh")
      t.trans_act = TransAct::tanh;
    else
      fail(ErrorCategory::config, "trans_act must be relu or tanh");
  } else if (key == "penalty_norm") {
    if (value == "l1")
      t.penalty_norm = PenaltyNorm::l1;
    else if (value == "frobenius")
      t.penalty_norm = PenaltyNorm::frobenius;
    else
      fail(ErrorCategory::config, "penalty_norm must be l1 or frobenius");
  } else if (key == "ablation")
    t.ablation = ablation_from_string(value);
  else if (key == "seed")
    t.seed = parse_u64(key, value);
  else if (key == "cutoffs")
    t.cutoffs = parse_u32_list(key, value);
  else if (key == "disc_steps")
    t.disc_steps = static_cast<uint32_t>(parse_u64(key, value));
  else if (key == "eval_interval")
    t.eval_interval = static_cast<uint32_t>(parse_u64(key, value));
  else if (key == "reorth_every")
    t.reorth_every = static_cast<uint32_t>(parse_u64(key, value));
  else if (key == "train_ratio")
    cfg.train_ratio = parse_f64(key, value);
  else if (key == "dataset")
    cfg.dataset = value;
  else if (key == "out")
    cfg.out = value;
  else if (key == "checkpoint")
    cfg.checkpoint = value;
  else
    fail(ErrorCategory::config, "unknown config key: " + key);
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    require(eq != std::string::npos, ErrorCategory::config,
            "config line is not `key = value`: " + line);
    config_set(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCategory::io, "cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string print_config(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  std::ostringstream out;
  out << "d = " << t.d << '\n';
  out << "hidden = " << t.hidden << '\n';
  out << "disc_hidden = " << t.disc_hidden << '\n';
  out << "lr = " << format_float(t.lr) << '\n';
  out << "batch = " << t.batch << '\n';
  out << "epochs = " << t.epochs << '\n';
  out << "dropout = " << format_float(t.dropout) << '\n';
  out << "lambda = " << format_float(t.lambda) << '\n';
  out << "eta = " << format_float(t.eta) << '\n';
  out << "prior = " << to_string(t.prior) << '\n';
  out << "transform = " << to_string(t.transform) << '\n';
  out << "trans_act = " << (t.trans_act == TransAct::relu ? "relu" : "tanh") << '\n';
  out << "penalty_norm = "
      << (t.penalty_norm == PenaltyNorm::l1 ? "l1" : "frobenius") << '\n';
  out << "ablation = " << to_string(t.ablation) << '\n';
  out << "seed = " << t.seed << '\n';
  out << "cutoffs = ";
  for (size_t i = 0; i < t.cutoffs.size(); ++i)
    out << (i ? "," : "") << t.cutoffs[i];
  out << '\n';
  out << "disc_steps = " << t.disc_steps << '\n';
  out << "eval_interval = " << t.eval_interval << '\n';
  out << "reorth_every = " << t.reorth_every << '\n';
  out << "train_ratio = " << format_float(cfg.train_ratio) << '\n';
  out << "dataset = " << cfg.dataset << '\n';
  out << "out = " << cfg.out << '\n';
  out << "checkpoint = " << cfg.checkpoint << '\n';
  return out.str();
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCategory::io, "cannot write config: " + path);
  out << print_config(cfg);
}

bool RunConfig::operator==(const RunConfig& o) const {
  const TrainConfig& a = train;
  const TrainConfig& b = o.train;
  return a.d == b.d && a.hidden == b.hidden && a.disc_hidden == b.disc_hidden &&
         a.lr == b.lr && a.batch == b.batch && a.epochs == b.epochs &&
         a.dropout == b.dropout && a.lambda == b.lambda && a.eta == b.eta &&
         a.prior == b.prior && a.transform == b.transform &&
         a.trans_act == b.trans_act && a.penalty_norm == b.penalty_norm &&
         a.ablation == b.ablation && a.seed == b.seed && a.cutoffs == b.cutoffs &&
         a.disc_steps == b.disc_steps && a.eval_interval == b.eval_interval &&
         a.reorth_every == b.reorth_every && train_ratio == o.train_ratio &&
         dataset == o.dataset && out == o.out && checkpoint == o.checkpoint;
}

}  // namespace etl
