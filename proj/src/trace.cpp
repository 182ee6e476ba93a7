#include "acpc/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "acpc/error.hpp"
#include "acpc/io.hpp"
#include "acpc/rng.hpp"

namespace acpc {

namespace {

constexpr std::array<std::string_view, 4> kTypeNames = {"EMBEDDING", "KV_READ", "KV_APPEND",
                                                         "WEIGHT"};

// Inverse-CDF Zipf sampler over ranks [0, n).
class ZipfTable {
 public:
  ZipfTable(std::uint64_t n, double exponent) : cdf_(n) {
    double total = 0.0;
    for (std::uint64_t r = 0; r < n; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
      cdf_[r] = total;
    }
    for (auto& c : cdf_) c /= total;
    cdf_.back() = 1.0;
  }

  std::uint64_t sample(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(
        it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
  }

 private:
  std::vector<double> cdf_;
};

// Floyd's algorithm: k distinct values from [0, n), returned sorted.
std::vector<std::uint64_t> sample_without_replacement(Rng& rng, std::uint64_t n,
                                                      std::uint64_t k) {
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(k * 2);
  for (std::uint64_t j = n - k; j < n; ++j) {
    const std::uint64_t r = rng.below(j + 1);
    if (!chosen.insert(r).second) chosen.insert(j);
  }
  std::vector<std::uint64_t> out(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

// Fenwick tree over trace positions.
class PrefixCounter {
 public:
  explicit PrefixCounter(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t pos, int delta) {
    for (std::size_t i = pos + 1; i < tree_.size(); i += i & (~i + 1)) tree_[i] += delta;
  }
  // Sum over positions [0, pos).
  std::int64_t prefix(std::size_t pos) const {
    std::int64_t s = 0;
    for (std::size_t i = pos; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

template <typename T>
T parse_field(std::string_view field, std::size_t line, const char* name) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(line, std::string("bad ") + name + " '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::string_view to_string(AccessType type) {
  return kTypeNames[static_cast<std::size_t>(type)];
}

AccessType access_type_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (kTypeNames[i] == name) return static_cast<AccessType>(i);
  }
  throw DataError("unknown access type '" + std::string(name) + "'");
}

void GenConfig::validate() const {
  if (num_tokens < 1) throw ConfigError("num_tokens must be >= 1");
  if (embedding_table_lines < 1) throw ConfigError("embedding_table_lines must be >= 1");
  if (kv_lines_per_token < 1) throw ConfigError("kv_lines_per_token must be >= 1");
  if (!std::isfinite(zipf_exponent) || zipf_exponent <= 0.0) {
    throw ConfigError("zipf_exponent must be finite and > 0");
  }
  if (!(kv_scan_fraction >= 0.0 && kv_scan_fraction <= 1.0)) {
    throw ConfigError("kv_scan_fraction must lie in [0, 1]");
  }
  if (weight_region_lines != 0 && weight_region_lines < weight_lines_per_token) {
    throw ConfigError("weight_region_lines must be 0 or >= weight_lines_per_token");
  }
  if (embedding_table_lines >= kWeightBase) throw ConfigError("embedding table too large");
}

void to_json(nlohmann::json& j, const GenConfig& cfg) {
  j = nlohmann::json{{"num_tokens", cfg.num_tokens},
                     {"embedding_table_lines", cfg.embedding_table_lines},
                     {"zipf_exponent", cfg.zipf_exponent},
                     {"embedding_lookups_per_token", cfg.embedding_lookups_per_token},
                     {"kv_lines_per_token", cfg.kv_lines_per_token},
                     {"weight_lines_per_token", cfg.weight_lines_per_token},
                     {"weight_region_lines", cfg.weight_region_lines},
                     {"kv_scan_fraction", cfg.kv_scan_fraction},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, GenConfig& cfg) {
  if (!j.is_object()) throw ConfigError("GenConfig must be a JSON object");
  GenConfig out;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "num_tokens") out.num_tokens = value.get<std::uint64_t>();
      else if (key == "embedding_table_lines") out.embedding_table_lines = value.get<std::uint64_t>();
      else if (key == "zipf_exponent") out.zipf_exponent = value.get<double>();
      else if (key == "embedding_lookups_per_token") out.embedding_lookups_per_token = value.get<std::uint64_t>();
      else if (key == "kv_lines_per_token") out.kv_lines_per_token = value.get<std::uint64_t>();
      else if (key == "weight_lines_per_token") out.weight_lines_per_token = value.get<std::uint64_t>();
      else if (key == "weight_region_lines") out.weight_region_lines = value.get<std::uint64_t>();
      else if (key == "kv_scan_fraction") out.kv_scan_fraction = value.get<double>();
      else if (key == "seed") out.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown GenConfig field '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("GenConfig field '" + key + "': " + e.what());
    }
  }
  out.validate();
  cfg = out;
}

Trace generate_trace(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  // Popularity rank -> table row, so hot rows are scattered over the table.
  std::vector<std::uint64_t> row_of_rank(cfg.embedding_table_lines);
  for (std::uint64_t i = 0; i < row_of_rank.size(); ++i) row_of_rank[i] = i;
  for (std::uint64_t i = row_of_rank.size(); i > 1; --i) {
    std::swap(row_of_rank[i - 1], row_of_rank[rng.below(i)]);
  }
  const ZipfTable zipf(cfg.embedding_table_lines, cfg.zipf_exponent);
  const std::uint64_t weight_region =
      cfg.weight_region_lines == 0 ? cfg.weight_lines_per_token : cfg.weight_region_lines;

  Trace trace;
  std::uint64_t kv_appended = 0;
  std::uint64_t weight_cursor = 0;
  auto emit = [&](std::uint64_t token, std::uint64_t line, AccessType type, std::uint64_t hash) {
    AccessRecord r;
    r.t = trace.size();
    r.line_id = line;
    r.feature_hash = hash;
    r.seq_len = static_cast<std::uint32_t>(std::min<std::uint64_t>(token + 1, UINT32_MAX));
    r.type = type;
    r.token_id = token;
    trace.push_back(r);
  };

  for (std::uint64_t token = 0; token < cfg.num_tokens; ++token) {
    for (std::uint64_t e = 0; e < cfg.embedding_lookups_per_token; ++e) {
      const std::uint64_t rank = zipf.sample(rng);
      emit(token, kEmbeddingBase + row_of_rank[rank], AccessType::Embedding, splitmix64(rank + 1));
    }
    const auto reads = static_cast<std::uint64_t>(
        std::floor(cfg.kv_scan_fraction * static_cast<double>(kv_appended) + 0.5));
    for (std::uint64_t kv : sample_without_replacement(rng, kv_appended, reads)) {
      emit(token, kKvBase + kv, AccessType::KvRead, 0);
    }
    for (std::uint64_t a = 0; a < cfg.kv_lines_per_token; ++a) {
      emit(token, kKvBase + kv_appended++, AccessType::KvAppend, 0);
    }
    for (std::uint64_t w = 0; w < cfg.weight_lines_per_token; ++w) {
      emit(token, kWeightBase + weight_cursor, AccessType::Weight, 0);
      weight_cursor = (weight_cursor + 1) % weight_region;
    }
  }
  compute_reuse_distance(trace);
  return trace;
}

void compute_reuse_labels(Trace& trace, std::size_t window) {
  std::unordered_map<std::uint64_t, std::size_t> next_seen;
  next_seen.reserve(trace.size());
  for (std::size_t i = trace.size(); i-- > 0;) {
    auto [it, fresh] = next_seen.try_emplace(trace[i].line_id, i);
    trace[i].label = (!fresh && it->second - i <= window) ? 1 : 0;
    it->second = i;
  }
}

void compute_reuse_distance(Trace& trace) {
  PrefixCounter latest(trace.size());
  std::unordered_map<std::uint64_t, std::size_t> last_seen;
  last_seen.reserve(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    auto [it, fresh] = last_seen.try_emplace(trace[i].line_id, i);
    if (fresh) {
      trace[i].reuse_dist = kNeverReused;
    } else {
      const std::size_t prev = it->second;
      trace[i].reuse_dist = latest.prefix(i) - latest.prefix(prev + 1);
      latest.add(prev, -1);
      it->second = i;
    }
    latest.add(i, +1);
  }
}

std::size_t reuse_bucket(std::int64_t reuse_dist) {
  if (reuse_dist < 0) return 5;
  if (reuse_dist == 0) return 0;
  if (reuse_dist <= 2) return 1;
  if (reuse_dist <= 8) return 2;
  if (reuse_dist <= 64) return 3;
  if (reuse_dist <= 1024) return 4;
  return 5;
}

FeatureVector extract_features(const AccessRecord& record,
                               std::optional<std::uint64_t> prev_timestamp) {
  FeatureVector x{};
  if (prev_timestamp && *prev_timestamp <= record.t) {
    const double dt = static_cast<double>(record.t - *prev_timestamp);
    x[feature::kInterval] = std::min(std::log2(1.0 + dt) / 32.0, 1.0);
  } else {
    x[feature::kInterval] = 1.0;
  }
  x[feature::kTypeBegin + static_cast<std::size_t>(record.type)] = 1.0;
  x[feature::kReuseBucketBegin + reuse_bucket(record.reuse_dist)] = 1.0;
  for (std::size_t c = 0; c < feature::kHashBits; ++c) {
    x[feature::kHashBegin + c] = (mix_seed(record.line_id, c) >> 63) ? -1.0 : 1.0;
  }
  x[feature::kSeqLen] = std::min(static_cast<double>(record.seq_len) / 4096.0, 1.0);
  return x;
}

std::vector<FeatureVector> featurize(std::span<const AccessRecord> trace) {
  std::vector<FeatureVector> out;
  out.reserve(trace.size());
  std::unordered_map<std::uint64_t, std::uint64_t> last_t;
  last_t.reserve(trace.size());
  for (const auto& r : trace) {
    auto it = last_t.find(r.line_id);
    out.push_back(extract_features(
        r, it == last_t.end() ? std::nullopt : std::optional<std::uint64_t>(it->second)));
    last_t[r.line_id] = r.t;
  }
  return out;
}

std::pair<std::size_t, std::size_t> split_boundaries(std::size_t n) {
  return {n * 70 / 100, n * 85 / 100};
}

DatasetSplit split_dataset(const Trace& trace) {
  if (trace.size() < 20) {
    throw DataError("trace of " + std::to_string(trace.size()) +
                    " records is too short to split (need >= 20)");
  }
  const auto [a, b] = split_boundaries(trace.size());
  DatasetSplit s;
  s.train.assign(trace.begin(), trace.begin() + static_cast<std::ptrdiff_t>(a));
  s.validation.assign(trace.begin() + static_cast<std::ptrdiff_t>(a),
                      trace.begin() + static_cast<std::ptrdiff_t>(b));
  s.test.assign(trace.begin() + static_cast<std::ptrdiff_t>(b), trace.end());
  return s;
}

void write_trace(const Trace& trace, std::ostream& out) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace) {
    out << r.t << ',' << r.line_id << ',' << to_string(r.type) << ',' << r.feature_hash << ','
        << r.seq_len << ',' << r.reuse_dist << ',' << static_cast<int>(r.label) << ','
        << r.token_id << '\n';
  }
}

void write_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ostringstream ss;
  write_trace(trace, ss);
  write_file_atomic(path, ss.str());
}

Trace read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty trace file (missing header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) throw FormatError("missing or unexpected trace header: '" + line + "'");

  Trace trace;
  std::size_t line_no = 1;
  std::array<std::string_view, 8> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string_view rest = line;
    std::size_t n = 0;
    while (true) {
      const auto comma = rest.find(',');
      if (n == fields.size()) throw ParseError(line_no, "too many fields");
      fields[n++] = rest.substr(0, comma);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (n != fields.size()) throw ParseError(line_no, "expected 8 fields, got " + std::to_string(n));

    AccessRecord r;
    r.t = parse_field<std::uint64_t>(fields[0], line_no, "timestamp");
    r.line_id = parse_field<std::uint64_t>(fields[1], line_no, "line_id");
    try {
      r.type = access_type_from_string(fields[2]);
    } catch (const DataError&) {
      throw ParseError(line_no, "bad access_type '" + std::string(fields[2]) + "'");
    }
    r.feature_hash = parse_field<std::uint64_t>(fields[3], line_no, "feature_hash");
    r.seq_len = parse_field<std::uint32_t>(fields[4], line_no, "seq_len");
    r.reuse_dist = parse_field<std::int64_t>(fields[5], line_no, "reuse_dist");
    const int label = parse_field<int>(fields[6], line_no, "label");
    r.token_id = parse_field<std::uint64_t>(fields[7], line_no, "token_id");
    if (label != 0 && label != 1) throw ParseError(line_no, "label must be 0 or 1");
    if (r.reuse_dist < kNeverReused) throw ParseError(line_no, "reuse_dist below -1");
    if (r.seq_len == 0) throw ParseError(line_no, "seq_len must be positive");
    if (!trace.empty() && (r.t < trace.back().t || r.token_id < trace.back().token_id)) {
      throw ParseError(line_no, "timestamps and token ids must be non-decreasing");
    }
    r.label = static_cast<std::uint8_t>(label);
    trace.push_back(r);
  }
  return trace;
}

Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("io", "cannot open trace " + path.string());
  return read_trace(in);
}

std::string trace_fingerprint(std::span<const AccessRecord> trace) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& r : trace) {
    mix(r.t);
    mix(r.line_id);
    mix(static_cast<std::uint64_t>(r.type));
    mix(r.token_id);
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

}  // namespace acpc
