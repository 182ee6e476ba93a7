#include <doctest.h>

#include <cmath>
#include <sstream>

#include "acpc/cache.hpp"
#include "acpc/error.hpp"
#include "acpc/mlp.hpp"
#include "acpc/tcn.hpp"
#include "oracles.hpp"

using namespace acpc;

namespace {

LineState valid_line(std::uint64_t tag, double predicted = 0.5, std::uint8_t freq = 1) {
  LineState l;
  l.tag = tag;
  l.valid = true;
  l.predicted = predicted;
  l.freq_counter = freq;
  return l;
}

// Small hierarchy: 1-set 2-way L1, 4-set 2-way L2, 8-set 4-way L3.
CacheConfig tiny_config(Policy policy = Policy::Lru, bool prefetch = false) {
  CacheConfig c;
  c.l1 = {64, 1, 2};
  c.l2 = {64, 4, 2};
  c.l3 = {64, 8, 4};
  c.prefetcher.enabled = prefetch;
  c.policy = policy;
  return c;
}

AccessRecord rec(std::uint64_t t, std::uint64_t line, std::uint64_t token = 0) {
  AccessRecord r;
  r.t = t;
  r.line_id = line;
  r.token_id = token;
  return r;
}

}  // namespace

TEST_SUITE("cache") {

TEST_CASE("LRU hand trace") {
  CacheLevel c({64, 1, 2}, Policy::Lru, 0.5, 0);
  c.access(1);  // A
  c.access(2);  // B
  CHECK(c.access(1).hit);
  const auto r = c.access(3);  // C
  CHECK_FALSE(r.hit);
  REQUIRE(r.victim);
  CHECK(*r.victim == 2);

  CacheLevel hot({64, 1, 4}, Policy::Lru, 0.5, 0);
  for (std::uint64_t i = 0; i < 50; ++i) {
    hot.access(100);
    const auto x = hot.access(i);
    if (x.victim) CHECK(*x.victim != 100);
  }
}

TEST_CASE("fills use empty ways first") {
  for (Policy p : {Policy::Lru, Policy::Random, Policy::Srrip, Policy::Parm}) {
    CacheLevel c({64, 1, 4}, p, 0.5, 3);
    for (std::uint64_t i = 0; i < 4; ++i) CHECK_FALSE(c.access(i).victim);
    CHECK(c.access(9).victim);
  }
  std::vector<LineState> partial{valid_line(1), LineState{}};
  CHECK_THROWS_AS(replacement::lru_victim(partial), InvariantError);
}

TEST_CASE("SRRIP hand traces") {
  CacheLevel c({64, 1, 2}, Policy::Srrip, 0.5, 0);
  c.access(10);
  c.access(11);
  const auto r = c.access(12);
  REQUIRE(r.victim);
  CHECK(*r.victim == 10);  // both aged to 3, leftmost goes

  CacheLevel d({64, 1, 2}, Policy::Srrip, 0.5, 0);
  d.access(10);
  d.access(11);
  d.access(10);  // hit -> rrpv 0
  const auto e = d.access(12);
  REQUIRE(e.victim);
  CHECK(*e.victim == 11);

  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<LineState> set(1 + rng.below(8));
    for (auto& l : set) {
      l.valid = true;
      l.rrpv = static_cast<std::uint8_t>(rng.below(4));
    }
    const auto before = set;
    const auto w = replacement::srrip_victim(set);
    CHECK(set[w].rrpv == 3);
    const std::uint8_t max_before = std::max_element(before.begin(), before.end(), [](auto& a, auto& b) {
                                      return a.rrpv < b.rrpv;
                                    })->rrpv;
    for (std::size_t i = 0; i < set.size(); ++i) CHECK(set[i].rrpv == before[i].rrpv + (3 - max_before));
  }
}

TEST_CASE("LRU and SRRIP match brute-force references") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::uint32_t sets = 1u << rng.below(3);
    const std::uint32_t ways = static_cast<std::uint32_t>(1 + rng.below(4));
    const auto lines = oracle::random_lines(rng, 1 + rng.below(512), 1 + rng.below(24));
    CacheLevel lru({64, sets, ways}, Policy::Lru, 0.5, 0);
    CacheLevel srrip({64, sets, ways}, Policy::Srrip, 0.5, 0);
    oracle::LruCache lru_ref(sets, ways);
    oracle::SrripCache srrip_ref(sets, ways);
    for (auto line : lines) {
      const auto a = lru.access(line);
      REQUIRE(oracle::Step{a.hit, a.victim} == lru_ref.access(line));
      const auto b = srrip.access(line);
      REQUIRE(oracle::Step{b.hit, b.victim} == srrip_ref.access(line));
    }
  }
}

TEST_CASE("RANDOM policy is seeded") {
  auto run = [](std::uint64_t seed) {
    CacheLevel c({64, 2, 4}, Policy::Random, 0.5, seed);
    Rng rng(77);
    std::vector<std::optional<std::uint64_t>> victims;
    for (int i = 0; i < 400; ++i) victims.push_back(c.access(rng.below(40)).victim);
    return victims;
  };
  CHECK(run(1) == run(1));
  CHECK(run(1) != run(2));
}

TEST_CASE("utility scores") {
  const double eq[] = {0.3, 0.3, 0.3, 0.3};
  for (double u : replacement::utility_scores(eq)) CHECK(u == doctest::Approx(0.25).epsilon(1e-15));
  const double two[] = {std::log(2.0), 0.0};
  const auto u = replacement::utility_scores(two);
  CHECK(u[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(u[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> y(1 + rng.below(16));
    for (auto& v : y) v = rng.uniform();
    const auto s = replacement::utility_scores(y);
    double total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      total += s[i];
      // Direct softmax as the oracle.
      double denom = 0;
      for (double v : y) denom += std::exp(v);
      CHECK(s[i] == doctest::Approx(std::exp(y[i]) / denom).epsilon(1e-13));
      for (std::size_t j = 0; j < y.size(); ++j) {
        if (y[i] < y[j]) CHECK(s[i] < s[j]);
      }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("priority blend") {
  CHECK(replacement::compute_priority(0.8, 0.4, 0.5) == doctest::Approx(0.6).epsilon(1e-15));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double u = rng.uniform(), f = rng.uniform();
    CHECK(replacement::compute_priority(u, f, 1.0) == u);
    CHECK(replacement::compute_priority(u, f, 0.0) == f);
  }
  CHECK_THROWS_AS(replacement::compute_priority(0.1, 0.1, 1.5), ConfigError);
  CHECK_THROWS_AS(replacement::compute_priority(0.1, 0.1, -0.1), ConfigError);
}

TEST_CASE("PARM victim selection") {
  // alpha = 1 makes P = U, a monotone function of the prediction.
  std::vector<LineState> set{valid_line(1, 0.2), valid_line(2, 0.9), valid_line(3, 0.5), valid_line(4, 0.7)};
  CHECK(replacement::parm_victim(set, 1.0) == 0);
  std::vector<LineState> flat(4, valid_line(5, 0.4));
  CHECK(replacement::parm_victim(flat, 0.5) == 0);

  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<LineState> s(2 + rng.below(7));
    for (auto& l : s) l = valid_line(rng.next(), rng.uniform(), static_cast<std::uint8_t>(rng.below(16)));
    const double alpha = rng.uniform();
    auto shifted = s;
    const double c = 3.0 * rng.uniform() - 1.5;
    for (auto& l : shifted) l.predicted += c;
    const auto w = replacement::parm_victim(s, alpha);
    CHECK(replacement::parm_victim(shifted, alpha) == w);
    // Direct recomputation of the argmin.
    std::vector<double> y;
    for (auto& l : s) y.push_back(l.predicted);
    const auto u = replacement::utility_scores(y);
    std::size_t best = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double p = alpha * u[i] + (1 - alpha) * s[i].freq_counter / 15.0;
      const double pb = alpha * u[best] + (1 - alpha) * s[best].freq_counter / 15.0;
      if (p < pb) best = i;
    }
    CHECK(w == best);
  }
}

TEST_CASE("PARM insertion") {
  std::vector<LineState> set(4);
  replacement::parm_insert(set, 0, 42, 0.8, 0.5);
  CHECK(set[0].valid);
  CHECK(set[0].freq_counter == 1);
  CHECK(set[0].utility == 1.0);
  CHECK(set[0].priority == doctest::Approx(0.5 + 0.5 / 15.0).epsilon(1e-15));
  replacement::parm_insert(set, 1, 43, 0.2, 0.5);
  CHECK(set[0].priority > set[1].priority);
  CHECK(set[0].utility + set[1].utility == doctest::Approx(1.0));
}

TEST_CASE("frequency counters") {
  std::vector<LineState> set{valid_line(1, 0.5, 15), valid_line(2, 0.5, 8)};
  set[0].freq_counter = 14;
  replacement::update_frequency(set, 0);  // reaches 15, everything halves
  CHECK(set[0].freq_counter == 7);
  CHECK(set[1].freq_counter == 4);

  std::vector<LineState> sat{valid_line(1, 0.5, 15)};
  replacement::update_frequency(sat, 0);
  CHECK(sat[0].freq_counter == 7);

  CacheLevel c({64, 1, 2}, Policy::Parm, 0.5, 0);
  c.access(5);
  c.access(5);
  CHECK(c.set(0)[0].freq_counter == 2);
  CHECK(c.set(0)[0].frequency() == doctest::Approx(2.0 / 15.0));
}

TEST_CASE("PARM with alpha 0 keeps the most frequent line") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    CacheLevel c({64, 1, 4}, Policy::Parm, 0.0, 0);
    for (int i = 0; i < 300; ++i) {
      const std::uint64_t line = rng.below(3) == 0 ? 1000 + rng.below(3) : rng.below(30);
      auto set = c.set(0);
      std::optional<std::uint64_t> top;
      int full = 0;
      for (const auto& l : set) full += l.valid;
      if (full == 4 && !c.find(line)) {
        std::uint8_t hi = 0, lo = 255;
        for (const auto& l : set) {
          hi = std::max(hi, l.freq_counter);
          lo = std::min(lo, l.freq_counter);
        }
        int at_hi = 0;
        for (const auto& l : set) at_hi += l.freq_counter == hi;
        if (lo < hi && at_hi == 1) {
          for (const auto& l : set) {
            if (l.freq_counter == hi) top = l.tag;
          }
        }
      }
      const auto r = c.access(line);
      if (top && r.victim) CHECK(*r.victim != *top);
    }
  }
}

TEST_CASE("next-line candidates") {
  CHECK(replacement::prefetch_next_line(7, 1) == std::vector<std::uint64_t>{8});
  CHECK(replacement::prefetch_next_line(7, 0).empty());
  CHECK(replacement::prefetch_next_line(7, 3) == std::vector<std::uint64_t>{8, 9, 10});
}

TEST_CASE("simulator lookup path and latencies") {
  CacheSimulator sim(CacheConfig{}, 0);
  auto a = sim.access(rec(0, 123));
  CHECK(a.hit_level == Level::Mem);
  CHECK(a.latency == 200);
  auto b = sim.access(rec(1, 123));
  CHECK(b.hit_level == Level::L1);
  CHECK(b.latency == 4);

  // Conflict in a direct-mapped L1: alternating lines always miss there.
  auto cfg = tiny_config();
  cfg.l1 = {64, 1, 1};
  CacheSimulator conflict(cfg, 0);
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto r = conflict.access(rec(i, i % 2));
    CHECK(r.hit_level != Level::L1);
  }
  CHECK(conflict.counters().levels[0].hits == 0);
}

TEST_CASE("accounting closes on random traces") {
  Rng rng(31);
  for (Policy p : {Policy::Lru, Policy::Random, Policy::Srrip}) {
    for (bool pf : {false, true}) {
      auto cfg = tiny_config(p, pf);
      CacheSimulator sim(cfg, 5);
      std::uint64_t cycles = 0;
      const auto lines = oracle::random_lines(rng, 3000, 80);
      for (std::size_t i = 0; i < lines.size(); ++i) cycles += sim.access(rec(i, lines[i], i / 10)).latency;
      sim.finish();
      const auto& c = sim.counters();
      CHECK(c.demand_accesses == lines.size());
      CHECK(c.levels[0].hits + c.levels[0].misses == c.demand_accesses);
      CHECK(c.levels[1].hits + c.levels[1].misses == c.levels[0].misses);
      CHECK(c.levels[2].hits + c.levels[2].misses == c.levels[1].misses);
      CHECK(c.cache_hits() + c.memory_fills() == c.demand_accesses);
      CHECK(c.total_cycles == cycles);
      CHECK(c.total_cycles == 4 * c.levels[0].hits + 14 * c.levels[1].hits + 40 * c.levels[2].hits +
                                  200 * c.levels[2].misses);
      CHECK(c.l2_miss_penalty_cycles == 26 * c.levels[2].hits + 186 * c.levels[2].misses);
      CHECK(c.prefetch_unused_evictions <= c.prefetch_insertions);
      CHECK(c.tokens == 300);
      CHECK(c.occupancy.size() == lines.size() / kOccupancyInterval);
      if (!pf) CHECK(c.prefetch_insertions == 0);
    }
  }
}

TEST_CASE("prefetch bookkeeping by hand") {
  auto cfg = tiny_config(Policy::Lru, true);
  CacheSimulator sim(cfg, 0);
  sim.access(rec(0, 0));  // miss, prefetch line 1 into L2
  CHECK(sim.counters().prefetch_insertions == 1);
  auto r = sim.access(rec(1, 1));  // L2 hit on the prefetched line
  CHECK(r.hit_level == Level::L2);
  CHECK(sim.counters().prefetch_insertions == 1);  // hits do not trigger prefetches
  sim.access(rec(2, 8));  // miss, prefetches 9
  sim.finish();
  CHECK(sim.counters().prefetch_insertions == 2);
  CHECK(sim.counters().prefetch_unused_evictions == 1);  // line 9 never used
}

TEST_CASE("prefetch skips resident lines and fills L2 only") {
  auto cfg = tiny_config(Policy::Lru, true);
  CacheSimulator sim(cfg, 0);
  sim.access(rec(0, 1));  // prefetches 2
  sim.access(rec(1, 0));  // prefetch target 1 already in L2
  CHECK(sim.counters().prefetch_insertions == 1);
  CHECK(sim.level(Level::L1).find(2) == std::nullopt);
  CHECK(sim.level(Level::L3).find(2) == std::nullopt);
  CHECK(sim.level(Level::L2).find(2).has_value());
}

TEST_CASE("learned policies need a matching model") {
  CHECK_THROWS_AS(CacheSimulator(tiny_config(Policy::Parm), 0), ConfigError);
  MlpModel mlp;
  CHECK_THROWS_AS(CacheSimulator(tiny_config(Policy::Parm), 0, &mlp), ConfigError);
  TcnModel tcn;
  CHECK_THROWS_AS(CacheSimulator(tiny_config(Policy::Mlp), 0, &tcn), ConfigError);
  CHECK_NOTHROW(CacheSimulator(tiny_config(Policy::Mlp), 0, &mlp));
}

TEST_CASE("simulation is deterministic and stride only thins predictions") {
  auto tcn = TcnModel::random(3);
  GenConfig g;
  g.num_tokens = 60;
  const auto trace = generate_trace(g);
  auto run = [&](std::uint32_t stride) {
    auto cfg = tiny_config(Policy::Parm, true);
    cfg.predictor_stride = stride;
    CacheSimulator sim(cfg, 0, &tcn);
    sim.record_events(true);
    for (const auto& r : trace) sim.access(r);
    sim.finish();
    std::ostringstream ss;
    write_event_log(sim.events(), ss);
    return std::make_pair(sim.counters(), ss.str());
  };
  const auto a = run(1);
  CHECK(a == run(1));
  const auto b = run(4);
  CHECK(b.first.demand_accesses == a.first.demand_accesses);
}

TEST_CASE("event log format") {
  auto cfg = tiny_config();
  cfg.l2 = {64, 1, 1};
  CacheSimulator sim(cfg, 0);
  sim.record_events(true);
  sim.access(rec(0, 1));
  sim.access(rec(1, 2));
  sim.access(rec(2, 2));
  std::ostringstream ss;
  write_event_log(sim.events(), ss);
  CHECK(ss.str() ==
        "t,level,hit,victim_tag,victim_was_prefetch\n"
        "0,MEM,0,-1,\n"
        "1,MEM,0,1,0\n"
        "2,L1,1,-1,\n");
}

TEST_CASE("cache config JSON") {
  CacheConfig cfg;
  nlohmann::json j = cfg;
  CHECK(j["l2"]["sets"] == 1024);
  CHECK(j["policy"] == "LRU");
  const auto back = j.get<CacheConfig>();
  CHECK(back.l3.ways == 16);
  j["policy"] = "parm";
  CHECK(j.get<CacheConfig>().policy == Policy::Parm);
  j["l2"]["sets"] = 1000;
  CHECK_THROWS_AS(j.get<CacheConfig>(), ConfigError);
  nlohmann::json lat = cfg;
  lat["latencies"]["l3_hit"] = 10;
  CHECK_THROWS_AS(lat.get<CacheConfig>(), ConfigError);
  nlohmann::json extra = cfg;
  extra["victim_buffer"] = true;
  CHECK_THROWS_AS(extra.get<CacheConfig>(), ConfigError);
  nlohmann::json a = cfg;
  a["alpha"] = 2.0;
  CHECK_THROWS_AS(a.get<CacheConfig>(), ConfigError);
  CHECK_THROWS_AS(policy_from_string("belady"), ConfigError);
}

}  // TEST_SUITE
