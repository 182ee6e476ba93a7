#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "acpc/cache.hpp"
#include "acpc/metrics.hpp"
#include "acpc/model.hpp"
#include "acpc/trace.hpp"
#include "acpc/train.hpp"

namespace acpc {

// Memoized LRU runs used as the MPR reference. Keyed by trace id and the
// cache configuration with policy, alpha and predictor stride stripped, since
// none of those affect an LRU hierarchy. Safe to share between threads.
class BaselineCache {
 public:
  const Counters& get(const Trace& trace, const std::string& trace_id, const CacheConfig& cfg);
  // Number of LRU simulations actually executed.
  std::size_t simulations() const { return simulations_.load(); }

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_future<Counters>> entries_;
  std::atomic<std::size_t> simulations_{0};
};

// Streams a trace through a fresh simulator and returns its counters.
Counters simulate(const Trace& trace, const CacheConfig& cfg, std::uint64_t seed,
                  const ReuseModel* model = nullptr, FillObserver* observer = nullptr);

struct PolicyRun {
  MetricsReport report;
  Counters counters;
};

// `cfg.policy` selects the L2 policy. A model is required for MLP/PARM and
// ignored otherwise. `trace_id` defaults to the trace fingerprint.
PolicyRun run_policy(const Trace& trace, const CacheConfig& cfg, const ReuseModel* model,
                     std::uint64_t seed, BaselineCache& baselines,
                     std::optional<std::string> trace_id = {});

struct OnlineConfig {
  bool enabled = false;
  std::size_t batch_tokens = 256;        // B
  std::size_t resolution_window = 1024;  // W, in demand accesses
  double learning_rate = 1e-4;
  double dropout_p = 0.3;

  void validate() const;
};

void to_json(nlohmann::json& j, const OnlineConfig& cfg);
void from_json(const nlohmann::json& j, OnlineConfig& cfg);

// Fills of a run split by how their training label was obtained.
struct OnlineStats {
  std::uint64_t fills = 0;
  std::uint64_t evict_resolved = 0;
  std::uint64_t timeout_resolved = 0;
  std::uint64_t censored = 0;  // still unresolved at trace end
  std::uint64_t updates = 0;
  std::uint64_t examples_trained = 0;
};

struct OnlineRun {
  PolicyRun run;
  std::unique_ptr<ReuseModel> model;
  std::vector<double> loss_curve;  // one entry per update
  OnlineStats stats;
};

// Simulates with `model` while learning from resolved fills: each L2 fill is
// labeled 1 iff it received a demand hit before eviction or before
// `resolution_window` further accesses, whichever comes first. Every
// `batch_tokens` tokens one Adam step is taken on the labels resolved since
// the previous step; decisions in between use the frozen weights.
OnlineRun online_feedback_loop(const Trace& trace, const CacheConfig& cfg, const ReuseModel& model,
                               const OnlineConfig& online, std::uint64_t seed,
                               BaselineCache& baselines, std::optional<std::string> trace_id = {});

// Per-policy means over seeds plus derived improvements.
struct ComparisonRow {
  std::string policy;
  double chr = 0.0, ppr = 0.0, mpr = 0.0, tgt = 0.0;
  std::optional<double> final_loss;
};

struct DerivedRow {
  std::string candidate;
  std::string baseline;
  // Unset where the baseline value is zero.
  std::optional<double> pollution_reduction, chr_gain, mpr_gain, tgt_gain;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::vector<DerivedRow> derived;
};

// Rows keep first-appearance order; derived rows compare PARM with MLP and
// LRU, and MLP with LRU, whenever both sides are present.
ComparisonTable compare_table(const std::vector<MetricsReport>& reports,
                              const std::map<std::string, double>& final_losses = {});

std::string comparison_csv(const ComparisonTable& table);
std::string loss_curve_csv(const std::vector<double>& losses);
std::string report_json(const MetricsReport& report);

struct LearnedModel {
  std::shared_ptr<const ReuseModel> model;
  std::vector<double> loss_curve;  // offline training curve, may be empty
};

struct ExperimentConfig {
  std::filesystem::path trace;
  std::vector<Policy> policies;
  CacheConfig cache;
  OnlineConfig online;  // applies to PARM runs only
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir;
  std::map<Policy, LearnedModel> models;
  std::size_t jobs = 1;

  void validate() const;
};

struct ExperimentResult {
  std::vector<MetricsReport> reports;  // ordered by (policy, seed)
  ComparisonTable table;
  std::vector<double> loss_curve;
};

// Runs every (policy, seed) pair, possibly on several threads, and writes
// <policy>_<seed>.metrics.json, comparison.csv and loss_curve.csv into the
// output directory.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace acpc
