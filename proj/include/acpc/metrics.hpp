#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace acpc {

struct LevelCounters {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;

  friend bool operator==(const LevelCounters&, const LevelCounters&) = default;
};

// Raw simulator tallies. Level entries count demand lookups only.
struct Counters {
  std::array<LevelCounters, 3> levels;  // L1, L2, L3
  std::uint64_t demand_accesses = 0;
  std::uint64_t prefetch_insertions = 0;
  // Prefetched L2 lines that saw no demand hit before eviction or trace end.
  std::uint64_t prefetch_unused_evictions = 0;
  // Sum over L2 demand misses of (resolution latency - L2 hit latency).
  std::uint64_t l2_miss_penalty_cycles = 0;
  std::uint64_t total_cycles = 0;
  std::uint64_t tokens = 0;
  // (useful, valid) L2 line counts sampled every kOccupancyInterval accesses;
  // a line is useful if its current fill eventually receives a demand hit.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> occupancy;

  std::uint64_t cache_hits() const {
    return levels[0].hits + levels[1].hits + levels[2].hits;
  }
  std::uint64_t memory_fills() const { return levels[2].misses; }

  friend bool operator==(const Counters&, const Counters&) = default;
};

inline constexpr std::uint64_t kOccupancyInterval = 1024;

void to_json(nlohmann::json& j, const Counters& c);

struct MetricsReport {
  double chr_pct = 0.0;
  double ppr_pct = 0.0;
  double mpr_pct = 0.0;
  double mal_cycles = 0.0;
  double emu_pct = 0.0;
  double tgt_tokens_per_mcycle = 0.0;
  std::string policy;
  std::string trace_id;
  std::uint64_t seed = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

// Demand accesses resolved in any cache level, percent.
double chr(const Counters& c);
// Unused prefetch insertions over all prefetch insertions, percent; 0 when
// nothing was prefetched.
double ppr(const Counters& c);
// L2 miss-penalty reduction relative to an LRU run of the same trace, percent.
// Negative when the candidate is worse.
double mpr(const Counters& c, const Counters& lru_baseline);
// Mean cycles per demand access.
double mal(const Counters& c);
// Useful over valid L2 lines across occupancy samples, percent.
double emu(const Counters& c);
// Tokens per million cycles.
double tgt(const Counters& c);

MetricsReport make_report(const Counters& c, const Counters& lru_baseline, std::string policy,
                          std::string trace_id, std::uint64_t seed);

// Relative changes of a candidate against a baseline, in percent.
struct DerivedImprovements {
  double pollution_reduction_pct = 0.0;  // (PPR_b - PPR_c) / PPR_b
  double chr_gain_pct = 0.0;             // (CHR_c - CHR_b) / CHR_b
  double mpr_gain_pct = 0.0;             // (MPR_c - MPR_b) / MPR_b
  double tgt_gain_pct = 0.0;             // (TGT_c - TGT_b) / TGT_b
};

// Throws DataError naming the metric when a baseline value is zero, or when
// the reports come from different traces.
DerivedImprovements derived_improvements(const MetricsReport& baseline,
                                         const MetricsReport& candidate);

}  // namespace acpc
