#include <doctest.h>

#include <filesystem>

#include <unistd.h>

#include "acpc/error.hpp"
#include "acpc/harness.hpp"
#include "acpc/io.hpp"
#include "acpc/mlp.hpp"
#include "acpc/tcn.hpp"

using namespace acpc;
namespace fs = std::filesystem;

namespace {

const fs::path kData = ACPC_DATA_DIR;

template <typename T>
T load(const fs::path& p) {
  return nlohmann::json::parse(read_file(p)).get<T>();
}

Trace smoke_trace(std::uint64_t seed = 7) {
  auto g = load<GenConfig>(kData / "smoke" / "gen.json");
  g.seed = seed;
  return generate_trace(g);
}

CacheConfig smoke_cache(Policy policy) {
  auto c = load<CacheConfig>(kData / "smoke" / "cache.json");
  c.policy = policy;
  return c;
}

MetricsReport report(std::string policy, double chr, double ppr, double mpr, double tgt,
                     std::uint64_t seed = 0) {
  MetricsReport r;
  r.policy = std::move(policy);
  r.trace_id = "t";
  r.seed = seed;
  r.chr_pct = chr;
  r.ppr_pct = ppr;
  r.mpr_pct = mpr;
  r.tgt_tokens_per_mcycle = tgt;
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("acpc_harness_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("LRU is its own baseline") {
  const auto t = smoke_trace();
  BaselineCache b;
  const auto r = run_policy(t, smoke_cache(Policy::Lru), nullptr, 0, b);
  CHECK(r.report.mpr_pct == 0.0);
  CHECK(r.report.policy == "LRU");
  CHECK(r.report.trace_id == trace_fingerprint(t));
  CHECK(r.counters.demand_accesses == t.size());
}

TEST_CASE("run_policy is deterministic and shares one baseline simulation") {
  const auto t = smoke_trace();
  const auto tcn = TcnModel::random(3);
  BaselineCache b;
  const auto a1 = run_policy(t, smoke_cache(Policy::Parm), &tcn, 5, b);
  const auto a2 = run_policy(t, smoke_cache(Policy::Parm), &tcn, 5, b);
  CHECK(a1.report == a2.report);
  CHECK(a1.counters == a2.counters);
  run_policy(t, smoke_cache(Policy::Srrip), nullptr, 5, b);
  auto other_alpha = smoke_cache(Policy::Parm);
  other_alpha.alpha = 0.9;
  run_policy(t, other_alpha, &tcn, 5, b);
  CHECK(b.simulations() == 1);

  auto bigger = smoke_cache(Policy::Lru);
  bigger.l2.ways *= 2;
  run_policy(t, bigger, nullptr, 5, b);
  CHECK(b.simulations() == 2);
  run_policy(t, smoke_cache(Policy::Lru), nullptr, 5, b, "renamed");
  CHECK(b.simulations() == 3);
}

TEST_CASE("learned policies require a model") {
  const auto t = smoke_trace();
  BaselineCache b;
  CHECK_THROWS_AS(run_policy(t, smoke_cache(Policy::Parm), nullptr, 0, b), ConfigError);
  CHECK_THROWS_AS(run_policy(Trace{}, smoke_cache(Policy::Lru), nullptr, 0, b), DataError);
}

TEST_CASE("online loop with zero learning rate matches run_policy") {
  const auto t = smoke_trace();
  const auto tcn = TcnModel::random(4);
  OnlineConfig on;
  on.enabled = true;
  on.learning_rate = 0.0;
  on.batch_tokens = 8;
  on.resolution_window = 64;
  BaselineCache b;
  const auto ref = run_policy(t, smoke_cache(Policy::Parm), &tcn, 2, b);
  const auto run = online_feedback_loop(t, smoke_cache(Policy::Parm), tcn, on, 2, b);
  CHECK(run.run.report == ref.report);
  CHECK(run.run.counters == ref.counters);
  CHECK(run.stats.updates == 64 / 8);
  CHECK(run.loss_curve.size() == run.stats.updates);
  const auto p = run.model->parameters();
  CHECK(std::equal(p.begin(), p.end(), tcn.parameters().begin()));
}

TEST_CASE("online loop accounting") {
  const auto t = smoke_trace();
  const auto tcn = TcnModel::random(4);
  OnlineConfig on;
  on.enabled = true;
  on.learning_rate = 1e-3;
  on.batch_tokens = 5;
  on.resolution_window = 50;
  BaselineCache b;
  const auto run = online_feedback_loop(t, smoke_cache(Policy::Parm), tcn, on, 2, b);
  const auto& s = run.stats;
  CHECK(s.fills > 0);
  CHECK(s.fills == s.evict_resolved + s.timeout_resolved + s.censored);
  CHECK(s.timeout_resolved > 0);
  CHECK(s.evict_resolved > 0);
  // 64 tokens at B=5: the trailing 4 tokens never complete a batch.
  CHECK(s.updates == 12);
  CHECK(s.examples_trained <= s.evict_resolved + s.timeout_resolved);
  const auto p = run.model->parameters();
  CHECK_FALSE(std::equal(p.begin(), p.end(), tcn.parameters().begin()));

  const auto again = online_feedback_loop(t, smoke_cache(Policy::Parm), tcn, on, 2, b);
  CHECK(again.loss_curve == run.loss_curve);
  CHECK(again.run.report == run.run.report);
}

TEST_CASE("batch larger than the trace gives no updates") {
  const auto t = smoke_trace();
  const auto tcn = TcnModel::random(6);
  OnlineConfig on;
  on.enabled = true;
  on.learning_rate = 1e-2;
  on.batch_tokens = 65;
  BaselineCache b;
  const auto run = online_feedback_loop(t, smoke_cache(Policy::Parm), tcn, on, 0, b);
  CHECK(run.stats.updates == 0);
  CHECK(run.loss_curve.empty());
  const auto p = run.model->parameters();
  CHECK(std::equal(p.begin(), p.end(), tcn.parameters().begin()));
}

TEST_CASE("online loop preconditions") {
  const auto t = smoke_trace();
  const auto tcn = TcnModel::random(6);
  OnlineConfig on;
  on.enabled = true;
  BaselineCache b;
  CHECK_THROWS_AS(online_feedback_loop(t, smoke_cache(Policy::Lru), tcn, on, 0, b), ConfigError);
  on.batch_tokens = 0;
  CHECK_THROWS_AS(online_feedback_loop(t, smoke_cache(Policy::Parm), tcn, on, 0, b), ConfigError);
  nlohmann::json j = OnlineConfig{};
  CHECK(j.get<OnlineConfig>().batch_tokens == 256);
  j["typo"] = 1;
  CHECK_THROWS_AS(j.get<OnlineConfig>(), ConfigError);
}

TEST_CASE("online loss falls on the stress suite") {
  auto gen = load<GenConfig>(kData / "stress" / "gen.json");
  const auto cache = load<CacheConfig>(kData / "stress" / "cache.json");
  const auto on = load<OnlineConfig>(kData / "stress" / "online.json");
  double first = 0.0, last = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    gen.seed = s;
    const auto t = generate_trace(gen);
    BaselineCache b;
    const auto run = online_feedback_loop(t, cache, TcnModel::random(1 + s), on, s, b);
    const auto& c = run.loss_curve;
    const std::size_t q = c.size() / 4;
    REQUIRE(q > 0);
    for (std::size_t i = 0; i < q; ++i) {
      first += c[i] / static_cast<double>(q * 5);
      last += c[c.size() - q + i] / static_cast<double>(q * 5);
    }
  }
  CHECK(last < first);
}

TEST_CASE("compare_table reproduces the headline derived figures") {
  const auto table = compare_table({report("MLP", 82.3, 10.8, 15.5, 214), report("PARM", 89.6, 6.3, 24.8, 248)});
  REQUIRE(table.rows.size() == 2);
  REQUIRE(table.derived.size() == 1);
  const auto& d = table.derived[0];
  CHECK(d.candidate == "PARM");
  CHECK(d.baseline == "MLP");
  CHECK(std::abs(*d.pollution_reduction - 41.7) <= 0.05);
  CHECK(std::abs(*d.chr_gain - 8.9) <= 0.05);
  CHECK(std::abs(*d.mpr_gain - 60.0) <= 0.05);
  CHECK(std::abs(*d.tgt_gain - 15.9) <= 0.05);
}

TEST_CASE("compare_table averages per policy in first-appearance order") {
  const auto table = compare_table({report("PARM", 90, 6, 20, 250, 0), report("LRU", 80, 10, 0, 200, 0),
                                    report("PARM", 92, 8, 30, 260, 1), report("LRU", 82, 12, 0, 210, 1)},
                                   {{"PARM", 0.25}});
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].policy == "PARM");
  CHECK(table.rows[0].chr == 91.0);
  CHECK(table.rows[0].ppr == 7.0);
  CHECK(table.rows[0].final_loss == 0.25);
  CHECK_FALSE(table.rows[1].final_loss.has_value());
  REQUIRE(table.derived.size() == 1);
  CHECK_FALSE(table.derived[0].mpr_gain.has_value());  // LRU MPR is 0

  const auto csv = comparison_csv(table);
  CHECK(csv ==
        "Model,CHR,PPR,MPR,TGT,FinalLoss\n"
        "PARM,91.0000,7.0000,25.0000,255.0000,0.2500\n"
        "LRU,81.0000,11.0000,0.0000,205.0000,NA\n"
        "\nCandidate,Baseline,PollutionReduction,ChrGain,MprGain,TgtGain\n"
        "PARM,LRU,36.3636,12.3457,NA,24.3902\n");
}

TEST_CASE("compare_table edge cases") {
  CHECK_THROWS_AS(compare_table({}), DataError);
  auto a = report("LRU", 1, 2, 0, 4), b = report("PARM", 1, 2, 0, 4);
  b.trace_id = "other";
  CHECK_THROWS_AS(compare_table({a, b}), DataError);
  const auto one = compare_table({a});
  CHECK(one.rows.size() == 1);
  CHECK(one.derived.empty());
}

TEST_CASE("loss curve CSV") {
  CHECK(loss_curve_csv({}) == "epoch_or_batch,loss\n");
  CHECK(loss_curve_csv({0.5, 0.25}) == "epoch_or_batch,loss\n1,0.5\n2,0.25\n");
}

TEST_CASE("run_experiment writes per-run reports and is independent of threading") {
  TempDir tmp;
  const auto t = smoke_trace();
  write_trace(t, tmp.path / "trace.csv");
  ExperimentConfig cfg;
  cfg.trace = tmp.path / "trace.csv";
  cfg.policies = {Policy::Lru, Policy::Mlp, Policy::Parm};
  cfg.cache = smoke_cache(Policy::Lru);
  cfg.seeds = {0, 1};
  cfg.models[Policy::Parm] = {std::make_shared<TcnModel>(TcnModel::random(1)), {0.6, 0.4}};
  cfg.models[Policy::Mlp] = {std::make_shared<MlpModel>(MlpModel::random(1)), {0.7, 0.5}};

  cfg.output_dir = tmp.path / "serial";
  const auto serial = run_experiment(cfg);
  cfg.output_dir = tmp.path / "parallel";
  cfg.jobs = 4;
  const auto parallel = run_experiment(cfg);

  REQUIRE(serial.reports.size() == 6);
  CHECK(serial.reports == parallel.reports);
  CHECK(serial.reports[0].policy == "LRU");
  CHECK(serial.reports[5].policy == "PARM");
  CHECK(serial.reports[5].seed == 1);
  CHECK(serial.table.rows.size() == 3);
  CHECK(serial.table.derived.size() == 3);
  CHECK(serial.loss_curve == std::vector<double>{0.6, 0.4});
  CHECK(serial.table.rows[2].final_loss == 0.4);

  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(tmp.path / "serial")) {
    ++files;
    CHECK(read_file(e.path()) == read_file(tmp.path / "parallel" / e.path().filename()));
  }
  CHECK(files == 8);
  CHECK(fs::exists(tmp.path / "serial" / "PARM_1.metrics.json"));
  CHECK(fs::exists(tmp.path / "serial" / "comparison.csv"));
  CHECK(fs::exists(tmp.path / "serial" / "loss_curve.csv"));

  cfg.models.erase(Policy::Mlp);
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

}  // TEST_SUITE
