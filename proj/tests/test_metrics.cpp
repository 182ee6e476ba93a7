#include <doctest.h>

#include "acpc/cache.hpp"
#include "acpc/error.hpp"
#include "acpc/metrics.hpp"

using namespace acpc;

namespace {

MetricsReport report(std::string policy, double chr, double ppr, double mpr, double tgt) {
  MetricsReport r;
  r.policy = std::move(policy);
  r.trace_id = "t";
  r.chr_pct = chr;
  r.ppr_pct = ppr;
  r.mpr_pct = mpr;
  r.tgt_tokens_per_mcycle = tgt;
  return r;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("hit rate") {
  Counters c;
  c.demand_accesses = 1000;
  c.levels[0].hits = 800;
  c.levels[1].hits = 60;
  c.levels[2].hits = 36;
  CHECK(chr(c) == doctest::Approx(89.6));
  CHECK_THROWS_AS(chr(Counters{}), DataError);

  CacheSimulator cold(CacheConfig{}, 0);
  for (std::uint64_t i = 0; i < 100; ++i) {
    AccessRecord r;
    r.t = i;
    r.line_id = i * 7919;
    cold.access(r);
  }
  CHECK(chr(cold.counters()) == 0.0);

  CacheSimulator one(CacheConfig{}, 0);
  for (std::uint64_t i = 0; i < 100; ++i) {
    AccessRecord r;
    r.t = i;
    r.line_id = 5;
    one.access(r);
  }
  CHECK(chr(one.counters()) == doctest::Approx(99.0));
}

TEST_CASE("pollution ratio") {
  Counters c;
  CHECK(ppr(c) == 0.0);
  c.prefetch_insertions = 4;
  c.prefetch_unused_evictions = 1;
  CHECK(ppr(c) == 25.0);
  c.prefetch_unused_evictions = 0;
  CHECK(ppr(c) == 0.0);
}

TEST_CASE("miss penalty reduction") {
  Counters base, c;
  base.l2_miss_penalty_cycles = 3875;
  CHECK(mpr(base, base) == 0.0);
  c.l2_miss_penalty_cycles = 1550;
  CHECK(mpr(c, base) == doctest::Approx(60.0));
  c.l2_miss_penalty_cycles = 5000;
  CHECK(mpr(c, base) < 0.0);
  CHECK_THROWS_AS(mpr(c, Counters{}), DataError);
}

TEST_CASE("latency, occupancy and throughput") {
  Counters c;
  c.demand_accesses = 1000;
  c.total_cycles = 4000;
  CHECK(mal(c) == 4.0);
  c.demand_accesses = 2;
  c.total_cycles = 204;
  CHECK(mal(c) == 102.0);

  c.occupancy = {{1, 2}, {3, 4}};
  CHECK(emu(c) == doctest::Approx(100.0 * 4 / 6));
  c.occupancy = {{0, 8}};
  CHECK(emu(c) == 0.0);
  c.occupancy = {{8, 8}};
  CHECK(emu(c) == 100.0);
  c.occupancy.clear();
  CHECK_THROWS_AS(emu(c), DataError);

  c.tokens = 2;
  c.total_cycles = 1000000;
  CHECK(tgt(c) == 2.0);
  c.total_cycles = 500000;
  CHECK(tgt(c) == 4.0);
  c.tokens = 0;
  CHECK_THROWS_AS(tgt(c), DataError);
}

TEST_CASE("derived improvements reproduce the headline figures") {
  const auto mlp = report("MLP", 82.3, 10.8, 15.5, 214);
  const auto parm = report("PARM", 89.6, 6.3, 24.8, 248);
  const auto d = derived_improvements(mlp, parm);
  CHECK(std::abs(d.pollution_reduction_pct - 41.7) <= 0.05);
  CHECK(std::abs(d.chr_gain_pct - 8.9) <= 0.05);
  CHECK(std::abs(d.mpr_gain_pct - 60.0) <= 0.05);
  CHECK(std::abs(d.tgt_gain_pct - 15.9) <= 0.05);

  const auto same = derived_improvements(parm, parm);
  CHECK(same.pollution_reduction_pct == 0.0);
  CHECK(same.chr_gain_pct == 0.0);
  CHECK(same.mpr_gain_pct == 0.0);
  CHECK(same.tgt_gain_pct == 0.0);

  auto other = parm;
  other.trace_id = "u";
  CHECK_THROWS_AS(derived_improvements(mlp, other), DataError);
  const auto lru = report("LRU", 80, 10, 0, 200);
  try {
    derived_improvements(lru, parm);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("MPR") != std::string::npos);
  }
}

TEST_CASE("report JSON field names") {
  const auto r = report("PARM", 1, 2, 3, 4);
  nlohmann::json j = r;
  for (const char* k : {"chr_pct", "ppr_pct", "mpr_pct", "mal_cycles", "emu_pct",
                        "tgt_tokens_per_mcycle", "policy", "trace_id", "seed"}) {
    CHECK(j.contains(k));
  }
  CHECK(j.size() == 9);
  CHECK(j.get<MetricsReport>() == r);
}

TEST_CASE("make_report is a pure function of the counters") {
  Counters c;
  c.demand_accesses = 10;
  c.levels[0].hits = 7;
  c.levels[2].misses = 3;
  c.total_cycles = 7 * 4 + 3 * 200;
  c.l2_miss_penalty_cycles = 3 * 186;
  c.tokens = 2;
  const auto a = make_report(c, c, "LRU", "x", 0);
  CHECK(a == make_report(c, c, "LRU", "x", 0));
  CHECK(a.mpr_pct == 0.0);
  CHECK(a.chr_pct == 70.0);
  CHECK(a.emu_pct == 0.0);
}

}  // TEST_SUITE
