#include "acpc/metrics.hpp"

#include "acpc/error.hpp"

namespace acpc {

void to_json(nlohmann::json& j, const Counters& c) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : c.levels) levels.push_back({{"hits", l.hits}, {"misses", l.misses}});
  j = nlohmann::json{{"levels", levels},
                     {"demand_accesses", c.demand_accesses},
                     {"prefetch_insertions", c.prefetch_insertions},
                     {"prefetch_unused_evictions", c.prefetch_unused_evictions},
                     {"l2_miss_penalty_cycles", c.l2_miss_penalty_cycles},
                     {"total_cycles", c.total_cycles},
                     {"tokens", c.tokens},
                     {"occupancy_samples", c.occupancy.size()}};
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"chr_pct", r.chr_pct},
                     {"ppr_pct", r.ppr_pct},
                     {"mpr_pct", r.mpr_pct},
                     {"mal_cycles", r.mal_cycles},
                     {"emu_pct", r.emu_pct},
                     {"tgt_tokens_per_mcycle", r.tgt_tokens_per_mcycle},
                     {"policy", r.policy},
                     {"trace_id", r.trace_id},
                     {"seed", r.seed}};
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
  try {
    r.chr_pct = j.at("chr_pct").get<double>();
    r.ppr_pct = j.at("ppr_pct").get<double>();
    r.mpr_pct = j.at("mpr_pct").get<double>();
    r.mal_cycles = j.at("mal_cycles").get<double>();
    r.emu_pct = j.at("emu_pct").get<double>();
    r.tgt_tokens_per_mcycle = j.at("tgt_tokens_per_mcycle").get<double>();
    r.policy = j.at("policy").get<std::string>();
    r.trace_id = j.at("trace_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metrics report: ") + e.what());
  }
}

double chr(const Counters& c) {
  if (c.demand_accesses == 0) throw DataError("CHR undefined: no demand accesses");
  return 100.0 * static_cast<double>(c.cache_hits()) / static_cast<double>(c.demand_accesses);
}

double ppr(const Counters& c) {
  if (c.prefetch_insertions == 0) return 0.0;
  return 100.0 * static_cast<double>(c.prefetch_unused_evictions) /
         static_cast<double>(c.prefetch_insertions);
}

double mpr(const Counters& c, const Counters& lru_baseline) {
  if (lru_baseline.l2_miss_penalty_cycles == 0) {
    throw DataError("MPR undefined: baseline L2 miss penalty is zero");
  }
  const double base = static_cast<double>(lru_baseline.l2_miss_penalty_cycles);
  return 100.0 * (base - static_cast<double>(c.l2_miss_penalty_cycles)) / base;
}

double mal(const Counters& c) {
  if (c.demand_accesses == 0) throw DataError("MAL undefined: no demand accesses");
  return static_cast<double>(c.total_cycles) / static_cast<double>(c.demand_accesses);
}

double emu(const Counters& c) {
  if (c.occupancy.empty()) throw DataError("EMU undefined: no occupancy samples");
  std::uint64_t useful = 0, valid = 0;
  for (const auto& [u, v] : c.occupancy) {
    useful += u;
    valid += v;
  }
  if (valid == 0) return 0.0;
  return 100.0 * static_cast<double>(useful) / static_cast<double>(valid);
}

double tgt(const Counters& c) {
  if (c.tokens == 0) throw DataError("TGT undefined: zero tokens");
  if (c.total_cycles == 0) throw DataError("TGT undefined: zero cycles");
  return static_cast<double>(c.tokens) / (static_cast<double>(c.total_cycles) / 1e6);
}

MetricsReport make_report(const Counters& c, const Counters& lru_baseline, std::string policy,
                          std::string trace_id, std::uint64_t seed) {
  MetricsReport r;
  r.chr_pct = chr(c);
  r.ppr_pct = ppr(c);
  r.mpr_pct = mpr(c, lru_baseline);
  r.mal_cycles = mal(c);
  // Traces shorter than one sampling interval have no occupancy samples.
  r.emu_pct = c.occupancy.empty() ? 0.0 : emu(c);
  r.tgt_tokens_per_mcycle = tgt(c);
  r.policy = std::move(policy);
  r.trace_id = std::move(trace_id);
  r.seed = seed;
  return r;
}

namespace {

double relative_change(double baseline, double candidate, const char* metric) {
  if (baseline == 0.0) {
    throw DataError(std::string("derived improvement undefined: baseline ") + metric + " is zero");
  }
  return 100.0 * (candidate - baseline) / baseline;
}

}  // namespace

DerivedImprovements derived_improvements(const MetricsReport& baseline,
                                         const MetricsReport& candidate) {
  if (baseline.trace_id != candidate.trace_id) {
    throw DataError("derived improvements need reports from the same trace ('" +
                    baseline.trace_id + "' vs '" + candidate.trace_id + "')");
  }
  DerivedImprovements d;
  d.pollution_reduction_pct = -relative_change(baseline.ppr_pct, candidate.ppr_pct, "PPR");
  d.chr_gain_pct = relative_change(baseline.chr_pct, candidate.chr_pct, "CHR");
  d.mpr_gain_pct = relative_change(baseline.mpr_pct, candidate.mpr_pct, "MPR");
  d.tgt_gain_pct = relative_change(baseline.tgt_tokens_per_mcycle,
                                   candidate.tgt_tokens_per_mcycle, "TGT");
  return d;
}

}  // namespace acpc
