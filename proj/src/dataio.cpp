#include "etl/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "etl/common.hpp"
#include "etl/matrix.hpp"

namespace fs = std::filesystem;

namespace etl {

namespace {

bool parse_float_field(const std::string& s, float& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end;
}

bool parse_i64_field(const std::string& s, int64_t& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end;
}

}  // namespace

RawRatings load_interactions(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCategory::io, "cannot open ratings file: " + path);

  RawRatings out;
  std::string line;
  size_t total_lines = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++total_lines;

    std::array<std::string, 4> fields;
    size_t field = 0, start = 0;
    bool bad = false;
    for (size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (field >= 4) {
          bad = true;
          break;
        }
        fields[field++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    RawRating rec;
    if (!bad && field == 4 && !fields[0].empty() && !fields[1].empty() &&
        parse_float_field(fields[2], rec.rating) &&
        parse_i64_field(fields[3], rec.timestamp) && rec.rating >= 0.0f &&
        rec.rating <= 5.0f) {
      rec.user = std::move(fields[0]);
      rec.item = std::move(fields[1]);
      out.records.push_back(std::move(rec));
    } else {
      ++out.skipped_lines;
    }
  }
  if (total_lines > 0 &&
      static_cast<double>(out.skipped_lines) > 0.01 * static_cast<double>(total_lines)) {
    fail(ErrorCategory::format,
         "more than 1% malformed lines in " + path + " (" +
             std::to_string(out.skipped_lines) + "/" + std::to_string(total_lines) + ")");
  }
  return out;
}

ImplicitRecords binarize(const RawRatings& raw, float threshold) {
  require(threshold > 0.0f && threshold <= 5.0f, ErrorCategory::config,
          "binarize threshold must be in (0, 5]");
  std::set<std::pair<std::string, std::string>> seen;
  ImplicitRecords out;
  for (const RawRating& r : raw.records) {
    if (r.rating < threshold) continue;
    if (seen.emplace(r.user, r.item).second) out.push_back({r.user, r.item});
  }
  return out;
}

ImplicitRecords kcore_filter(const ImplicitRecords& records, uint32_t min_count) {
  require(min_count >= 1, ErrorCategory::config, "kcore min_count must be >= 1");
  std::vector<char> keep(records.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string, uint32_t> user_count, item_count;
    for (size_t i = 0; i < records.size(); ++i) {
      if (!keep[i]) continue;
      ++user_count[records[i].user];
      ++item_count[records[i].item];
    }
    for (size_t i = 0; i < records.size(); ++i) {
      if (!keep[i]) continue;
      if (user_count[records[i].user] < min_count ||
          item_count[records[i].item] < min_count) {
        keep[i] = 0;
        changed = true;
      }
    }
  }
  ImplicitRecords out;
  for (size_t i = 0; i < records.size(); ++i)
    if (keep[i]) out.push_back(records[i]);
  if (out.empty() && !records.empty())
    std::cerr << "warning: k-core filter removed every interaction (min_count="
              << min_count << ")\n";
  return out;
}

namespace {

InteractionMatrix build_matrix(const ImplicitRecords& records,
                               const std::vector<std::string>& users) {
  std::unordered_map<std::string, uint32_t> user_idx;
  for (uint32_t i = 0; i < users.size(); ++i) user_idx[users[i]] = i;

  std::set<std::string> item_set;
  for (const auto& r : records)
    if (user_idx.count(r.user)) item_set.insert(r.item);

  InteractionMatrix m;
  m.user_tokens = users;
  m.item_tokens.assign(item_set.begin(), item_set.end());
  m.n_users = static_cast<uint32_t>(users.size());
  m.n_items = static_cast<uint32_t>(m.item_tokens.size());

  std::unordered_map<std::string, uint32_t> item_idx;
  for (uint32_t i = 0; i < m.item_tokens.size(); ++i) item_idx[m.item_tokens[i]] = i;

  std::vector<std::vector<uint32_t>> cols(m.n_users);
  for (const auto& r : records) {
    auto it = user_idx.find(r.user);
    if (it == user_idx.end()) continue;
    cols[it->second].push_back(item_idx[r.item]);
  }
  m.rows.reserve(m.n_users);
  for (uint32_t u = 0; u < m.n_users; ++u) {
    std::sort(cols[u].begin(), cols[u].end());
    SparseRow row(m.n_items);
    for (uint32_t c : cols[u]) row.push(c);
    m.rows.push_back(std::move(row));
  }
  return m;
}

}  // namespace

PairedDataset pair_domains(const ImplicitRecords& a, const ImplicitRecords& b) {
  std::unordered_map<std::string, uint32_t> count_a, count_b;
  for (const auto& r : a) ++count_a[r.user];
  for (const auto& r : b) ++count_b[r.user];

  std::set<std::string> shared;
  for (const auto& [user, ca] : count_a) {
    auto it = count_b.find(user);
    if (it == count_b.end()) continue;
    // need val+test reservation to leave >= 1 train item downstream
    if (ca < 2 || it->second < 2) continue;
    shared.insert(user);
  }
  require(!shared.empty(), ErrorCategory::pairing,
          "no shared users between the two domains");

  std::vector<std::string> users(shared.begin(), shared.end());
  PairedDataset ds;
  ds.domain_a = build_matrix(a, users);
  ds.domain_b = build_matrix(b, users);
  return ds;
}

namespace {

// Samples `count` distinct item ids outside `forbidden` (sorted).
std::vector<uint32_t> sample_negatives(uint32_t n_items,
                                       const std::vector<uint32_t>& forbidden,
                                       uint32_t count, Rng& rng) {
  require(n_items >= forbidden.size() + count, ErrorCategory::split,
          "not enough never-interacted items to sample negatives");
  std::unordered_set<uint32_t> taken(forbidden.begin(), forbidden.end());
  std::vector<uint32_t> out;
  out.reserve(count);
  while (out.size() < count) {
    uint32_t cand = static_cast<uint32_t>(rng.next_below(n_items));
    if (taken.insert(cand).second) out.push_back(cand);
  }
  return out;
}

}  // namespace

PairedDataset loo_split(const PairedDataset& paired, uint32_t n_negatives, Rng& rng,
                        bool shared_negatives) {
  const uint32_t n = paired.n_users();
  check_shape(paired.domain_b.n_users == n, "loo_split: unpaired matrices");

  // One child RNG per user, split in row order regardless of survival.
  std::vector<Rng> child;
  child.reserve(n);
  for (uint32_t u = 0; u < n; ++u) child.push_back(rng.split());

  std::vector<uint32_t> survivors;
  for (uint32_t u = 0; u < n; ++u) {
    if (paired.domain_a.rows[u].nnz() >= 3 && paired.domain_b.rows[u].nnz() >= 3)
      survivors.push_back(u);
  }
  const size_t dropped = n - survivors.size();
  if (dropped > 0)
    std::cerr << "loo_split: dropped " << dropped
              << " users with fewer than 3 interactions in a domain\n";
  require(!survivors.empty(), ErrorCategory::split,
          "loo_split: no users with enough interactions");

  PairedDataset out;
  out.seed = paired.seed;
  out.min_count = paired.min_count;
  out.n_negatives = n_negatives;
  out.has_split = true;

  auto init_domain = [&](const InteractionMatrix& src, InteractionMatrix& dst,
                         EvalSplit& ev) {
    dst.n_items = src.n_items;
    dst.item_tokens = src.item_tokens;
    dst.n_users = static_cast<uint32_t>(survivors.size());
    dst.user_tokens.reserve(survivors.size());
    for (uint32_t u : survivors) dst.user_tokens.push_back(src.user_tokens[u]);
    ev.val_item.reserve(survivors.size());
    ev.test_item.reserve(survivors.size());
    ev.val_negatives.reserve(survivors.size() * n_negatives);
    ev.test_negatives.reserve(survivors.size() * n_negatives);
  };
  init_domain(paired.domain_a, out.domain_a, out.eval_a);
  init_domain(paired.domain_b, out.domain_b, out.eval_b);

  auto split_user = [&](const InteractionMatrix& src, InteractionMatrix& dst,
                        EvalSplit& ev, uint32_t u, Rng& user_rng) {
    const SparseRow& full = src.rows[u];
    const size_t k = full.nnz();
    size_t val_pos = user_rng.next_below(k);
    size_t test_pos = user_rng.next_below(k - 1);
    if (test_pos >= val_pos) ++test_pos;

    const uint32_t val_item = full.indices[val_pos];
    const uint32_t test_item = full.indices[test_pos];
    ev.val_item.push_back(val_item);
    ev.test_item.push_back(test_item);

    SparseRow train(full.dim);
    for (size_t i = 0; i < full.indices.size(); ++i) {
      if (i == val_pos || i == test_pos) continue;
      train.push(full.indices[i], full.values[i]);
    }
    dst.rows.push_back(std::move(train));

    std::vector<uint32_t> val_negs =
        sample_negatives(src.n_items, full.indices, n_negatives, user_rng);
    std::vector<uint32_t> test_negs =
        shared_negatives ? val_negs
                         : sample_negatives(src.n_items, full.indices, n_negatives, user_rng);
    ev.val_negatives.insert(ev.val_negatives.end(), val_negs.begin(), val_negs.end());
    ev.test_negatives.insert(ev.test_negatives.end(), test_negs.begin(), test_negs.end());
  };

  for (uint32_t u : survivors) {
    Rng& user_rng = child[u];
    split_user(paired.domain_a, out.domain_a, out.eval_a, u, user_rng);
    split_user(paired.domain_b, out.domain_b, out.eval_b, u, user_rng);
  }
  return out;
}

namespace {

constexpr const char* kManifestMagic = "etl-dataset-version";
constexpr uint32_t kFormatVersion = 1;

void write_tokens(const fs::path& path, const std::vector<std::string>& tokens) {
  std::ofstream out(path);
  require(out.good(), ErrorCategory::io, "cannot write " + path.string());
  for (size_t i = 0; i < tokens.size(); ++i) out << i << '\t' << tokens[i] << '\n';
}

std::vector<std::string> read_tokens(const fs::path& path, size_t expected) {
  std::ifstream in(path);
  require(in.good(), ErrorCategory::io, "cannot read " + path.string());
  std::vector<std::string> tokens(expected);
  std::string line;
  size_t count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    require(tab != std::string::npos, ErrorCategory::format,
            "malformed token line in " + path.string());
    size_t idx = std::stoull(line.substr(0, tab));
    require(idx < expected, ErrorCategory::format,
            "token index out of range in " + path.string());
    tokens[idx] = line.substr(tab + 1);
    ++count;
  }
  require(count == expected, ErrorCategory::format,
          "token count mismatch in " + path.string());
  return tokens;
}

void write_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::ifstream& in, const std::string& what) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  require(in.good(), ErrorCategory::format, "truncated " + what);
  return v;
}

void write_train(const fs::path& path, const InteractionMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCategory::io, "cannot write " + path.string());
  for (const SparseRow& row : m.rows) {
    write_u32(out, static_cast<uint32_t>(row.nnz()));
    for (uint32_t idx : row.indices) write_u32(out, idx);
  }
}

void read_train(const fs::path& path, InteractionMatrix& m) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCategory::io, "cannot read " + path.string());
  m.rows.clear();
  m.rows.reserve(m.n_users);
  for (uint32_t u = 0; u < m.n_users; ++u) {
    uint32_t count = read_u32(in, path.string());
    SparseRow row(m.n_items);
    for (uint32_t i = 0; i < count; ++i) {
      uint32_t idx = read_u32(in, path.string());
      require(idx < m.n_items, ErrorCategory::format,
              "item index out of range in " + path.string());
      row.push(idx);
    }
    validate_row(row);
    m.rows.push_back(std::move(row));
  }
}

void write_eval(const fs::path& path, const EvalSplit& ev, uint32_t n_users,
                uint32_t n_negatives) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCategory::io, "cannot write " + path.string());
  for (uint32_t u = 0; u < n_users; ++u) {
    write_u32(out, ev.val_item[u]);
    write_u32(out, ev.test_item[u]);
    for (uint32_t i = 0; i < n_negatives; ++i)
      write_u32(out, ev.val_negatives[size_t(u) * n_negatives + i]);
    for (uint32_t i = 0; i < n_negatives; ++i)
      write_u32(out, ev.test_negatives[size_t(u) * n_negatives + i]);
  }
}

void read_eval(const fs::path& path, EvalSplit& ev, uint32_t n_users,
               uint32_t n_negatives) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCategory::io, "cannot read " + path.string());
  ev.val_item.resize(n_users);
  ev.test_item.resize(n_users);
  ev.val_negatives.resize(size_t(n_users) * n_negatives);
  ev.test_negatives.resize(size_t(n_users) * n_negatives);
  for (uint32_t u = 0; u < n_users; ++u) {
    ev.val_item[u] = read_u32(in, path.string());
    ev.test_item[u] = read_u32(in, path.string());
    for (uint32_t i = 0; i < n_negatives; ++i)
      ev.val_negatives[size_t(u) * n_negatives + i] = read_u32(in, path.string());
    for (uint32_t i = 0; i < n_negatives; ++i)
      ev.test_negatives[size_t(u) * n_negatives + i] = read_u32(in, path.string());
  }
}

}  // namespace

void save_dataset(const PairedDataset& ds, const std::string& dir) {
  require(ds.has_split, ErrorCategory::config, "save_dataset: dataset has no split");
  fs::create_directories(dir);
  const fs::path root(dir);

  std::ofstream mf(root / "manifest");
  require(mf.good(), ErrorCategory::io, "cannot write manifest in " + dir);
  mf << kManifestMagic << ' ' << kFormatVersion << '\n';
  mf << "seed " << ds.seed << '\n';
  mf << "n_users " << ds.n_users() << '\n';
  mf << "n_items_a " << ds.domain_a.n_items << '\n';
  mf << "n_items_b " << ds.domain_b.n_items << '\n';
  mf << "min_count " << ds.min_count << '\n';
  mf << "n_negatives " << ds.n_negatives << '\n';
  mf.close();

  write_tokens(root / "users.tsv", ds.domain_a.user_tokens);
  write_tokens(root / "items_a.tsv", ds.domain_a.item_tokens);
  write_tokens(root / "items_b.tsv", ds.domain_b.item_tokens);
  write_train(root / "train_a.bin", ds.domain_a);
  write_train(root / "train_b.bin", ds.domain_b);
  write_eval(root / "eval_a.bin", ds.eval_a, ds.n_users(), ds.n_negatives);
  write_eval(root / "eval_b.bin", ds.eval_b, ds.n_users(), ds.n_negatives);
}

PairedDataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream mf(root / "manifest");
  require(mf.good(), ErrorCategory::io, "cannot read manifest in " + dir);

  std::string magic;
  uint32_t version = 0;
  mf >> magic >> version;
  require(magic == kManifestMagic, ErrorCategory::format,
          "bad dataset manifest magic in " + dir);
  require(version == kFormatVersion, ErrorCategory::format,
          "unsupported dataset format version " + std::to_string(version));

  PairedDataset ds;
  ds.has_split = true;
  uint32_t n_users = 0;
  std::string key;
  while (mf >> key) {
    if (key == "seed")
      mf >> ds.seed;
    else if (key == "n_users")
      mf >> n_users;
    else if (key == "n_items_a")
      mf >> ds.domain_a.n_items;
    else if (key == "n_items_b")
      mf >> ds.domain_b.n_items;
    else if (key == "min_count")
      mf >> ds.min_count;
    else if (key == "n_negatives")
      mf >> ds.n_negatives;
    else
      fail(ErrorCategory::format, "unknown manifest key: " + key);
    require(mf.good(), ErrorCategory::format, "malformed manifest value for " + key);
  }
  ds.domain_a.n_users = ds.domain_b.n_users = n_users;

  ds.domain_a.user_tokens = read_tokens(root / "users.tsv", n_users);
  ds.domain_b.user_tokens = ds.domain_a.user_tokens;
  ds.domain_a.item_tokens = read_tokens(root / "items_a.tsv", ds.domain_a.n_items);
  ds.domain_b.item_tokens = read_tokens(root / "items_b.tsv", ds.domain_b.n_items);
  read_train(root / "train_a.bin", ds.domain_a);
  read_train(root / "train_b.bin", ds.domain_b);
  read_eval(root / "eval_a.bin", ds.eval_a, n_users, ds.n_negatives);
  read_eval(root / "eval_b.bin", ds.eval_b, n_users, ds.n_negatives);
  return ds;
}

namespace {

struct Fnv1a {
  uint64_t h = 1469598103934665603ULL;
  void bytes(const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  }
  void u32(uint32_t v) { bytes(&v, sizeof(v)); }
  void u64(uint64_t v) { bytes(&v, sizeof(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
};

void hash_domain(Fnv1a& f, const InteractionMatrix& m, const EvalSplit& ev) {
  f.u32(m.n_users);
  f.u32(m.n_items);
  for (const auto& t : m.user_tokens) f.str(t);
  for (const auto& t : m.item_tokens) f.str(t);
  for (const SparseRow& row : m.rows) {
    f.u64(row.nnz());
    for (uint32_t idx : row.indices) f.u32(idx);
  }
  for (uint32_t v : ev.val_item) f.u32(v);
  for (uint32_t v : ev.test_item) f.u32(v);
  for (uint32_t v : ev.val_negatives) f.u32(v);
  for (uint32_t v : ev.test_negatives) f.u32(v);
}

}  // namespace

uint64_t dataset_hash(const PairedDataset& ds) {
  Fnv1a f;
  f.u64(ds.seed);
  f.u32(ds.min_count);
  f.u32(ds.n_negatives);
  hash_domain(f, ds.domain_a, ds.eval_a);
  hash_domain(f, ds.domain_b, ds.eval_b);
  return f.h;
}

void subsample_train(PairedDataset& ds, double ratio, Rng& rng) {
  require(ratio > 0.0 && ratio <= 1.0, ErrorCategory::config,
          "train ratio must be in (0, 1]");
  if (ratio == 1.0) return;

  auto subsample_domain = [&](InteractionMatrix& m) {
    std::vector<std::pair<uint32_t, uint32_t>> pairs;  // (user, item)
    for (uint32_t u = 0; u < m.n_users; ++u)
      for (uint32_t idx : m.rows[u].indices) pairs.emplace_back(u, idx);
    // Fisher-Yates, then keep a prefix
    for (size_t i = pairs.size(); i > 1; --i)
      std::swap(pairs[i - 1], pairs[rng.next_below(i)]);
    const size_t keep = static_cast<size_t>(
        std::llround(ratio * static_cast<double>(pairs.size())));
    pairs.resize(keep);

    std::vector<std::vector<uint32_t>> cols(m.n_users);
    for (const auto& [u, idx] : pairs) cols[u].push_back(idx);
    for (uint32_t u = 0; u < m.n_users; ++u) {
      std::sort(cols[u].begin(), cols[u].end());
      SparseRow row(m.n_items);
      for (uint32_t c : cols[u]) row.push(c);
      m.rows[u] = std::move(row);
    }
  };
  subsample_domain(ds.domain_a);
  subsample_domain(ds.domain_b);
}

std::vector<uint32_t> full_interactions(const PairedDataset& ds, bool domain_a,
                                        uint32_t user) {
  const InteractionMatrix& m = domain_a ? ds.domain_a : ds.domain_b;
  const EvalSplit& ev = domain_a ? ds.eval_a : ds.eval_b;
  std::vector<uint32_t> out(m.rows[user].indices);
  if (ds.has_split) {
    out.push_back(ev.val_item[user]);
    out.push_back(ev.test_item[user]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace etl
