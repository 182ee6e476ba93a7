#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace acpc {

enum class AccessType : std::uint8_t { Embedding = 0, KvRead = 1, KvAppend = 2, Weight = 3 };

std::string_view to_string(AccessType type);
AccessType access_type_from_string(std::string_view name);

// Reuse distance of a first access.
inline constexpr std::int64_t kNeverReused = -1;

// One demand access in a trace.
struct AccessRecord {
  std::uint64_t t = 0;             // tick, non-decreasing
  std::uint64_t line_id = 0;       // cache-line identifier
  std::uint64_t feature_hash = 0;  // token-embedding hash
  std::uint32_t seq_len = 1;       // context length at this access
  std::int64_t reuse_dist = kNeverReused;  // LRU stack distance or kNeverReused
  std::uint8_t label = 0;          // 1 iff re-accessed within the label window
  AccessType type = AccessType::Embedding;
  std::uint64_t token_id = 0;

  friend bool operator==(const AccessRecord&, const AccessRecord&) = default;
};

using Trace = std::vector<AccessRecord>;

// Synthetic decode-workload parameters. Every field maps 1:1 onto a JSON key.
struct GenConfig {
  std::uint64_t num_tokens = 256;
  std::uint64_t embedding_table_lines = 4096;
  double zipf_exponent = 1.0;
  std::uint64_t embedding_lookups_per_token = 1;
  std::uint64_t kv_lines_per_token = 2;
  std::uint64_t weight_lines_per_token = 32;
  // Size of the cyclic weight region; 0 means weight_lines_per_token, i.e.
  // every token re-streams the same weight lines.
  std::uint64_t weight_region_lines = 0;
  double kv_scan_fraction = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const GenConfig& cfg);
void from_json(const nlohmann::json& j, GenConfig& cfg);

// Line-id bases of the three address regions the generator uses.
inline constexpr std::uint64_t kEmbeddingBase = 0;
inline constexpr std::uint64_t kWeightBase = 1ULL << 40;
inline constexpr std::uint64_t kKvBase = 1ULL << 41;

// Emits the decode trace. Per token: embedding lookups (Zipf over the
// table), KV reads over a uniform sample of earlier KV lines in ascending
// order, KV appends to fresh lines, then the weight stream. t is the record
// index; reuse distances are filled, labels are left at 0.
Trace generate_trace(const GenConfig& cfg);

// Sets label = 1 iff the same line recurs within the next `window` records.
void compute_reuse_labels(Trace& trace, std::size_t window);

// Sets reuse_dist to the number of distinct lines touched strictly between
// the previous access to the same line and this one.
void compute_reuse_distance(Trace& trace);

// ---- features ----

inline constexpr std::size_t kFeatureDim = 16;
using FeatureVector = std::array<double, kFeatureDim>;

namespace feature {
inline constexpr std::size_t kInterval = 0;
inline constexpr std::size_t kTypeBegin = 1;
inline constexpr std::size_t kReuseBucketBegin = 5;
inline constexpr std::size_t kReuseBuckets = 6;
inline constexpr std::size_t kHashBegin = 11;
inline constexpr std::size_t kHashBits = 4;
inline constexpr std::size_t kSeqLen = 15;
}  // namespace feature

// Bucket index of a reuse distance: {0}, {1-2}, {3-8}, {9-64}, {65-1024},
// {>1024 or never}.
std::size_t reuse_bucket(std::int64_t reuse_dist);

// prev_timestamp is the tick of the previous access to the same line, if any.
FeatureVector extract_features(const AccessRecord& record,
                               std::optional<std::uint64_t> prev_timestamp);

// Features of every record, tracking per-line previous timestamps.
std::vector<FeatureVector> featurize(std::span<const AccessRecord> trace);

// ---- splits and I/O ----

struct DatasetSplit {
  Trace train;
  Trace validation;
  Trace test;
};

// Contiguous 70/15/15 split in time order.
DatasetSplit split_dataset(const Trace& trace);

// Index boundaries [0, a), [a, b), [b, n) of split_dataset.
std::pair<std::size_t, std::size_t> split_boundaries(std::size_t n);

void write_trace(const Trace& trace, std::ostream& out);
void write_trace(const Trace& trace, const std::filesystem::path& path);
Trace read_trace(std::istream& in);
Trace read_trace(const std::filesystem::path& path);

inline constexpr std::string_view kTraceHeader =
    "t,line_id,access_type,feature_hash,seq_len,reuse_dist,label,token_id";

// Stable content hash used as a trace identifier when no name is supplied.
std::string trace_fingerprint(std::span<const AccessRecord> trace);

}  // namespace acpc
