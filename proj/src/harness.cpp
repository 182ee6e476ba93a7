#include "acpc/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "acpc/adam.hpp"
#include "acpc/error.hpp"
#include "acpc/io.hpp"
#include "acpc/log.hpp"

namespace acpc {

// ---- baselines ----

Counters simulate(const Trace& trace, const CacheConfig& cfg, std::uint64_t seed,
                  const ReuseModel* model, FillObserver* observer) {
  if (trace.empty()) throw DataError("cannot simulate an empty trace");
  CacheSimulator sim(cfg, seed, model);
  sim.set_observer(observer);
  for (const auto& r : trace) sim.access(r);
  sim.finish();
  return sim.counters();
}

const Counters& BaselineCache::get(const Trace& trace, const std::string& trace_id,
                                   const CacheConfig& cfg) {
  CacheConfig key_cfg = cfg;
  key_cfg.policy = Policy::Lru;
  key_cfg.alpha = 0.5;
  key_cfg.predictor_stride = 1;
  nlohmann::json j = key_cfg;
  const std::string key = trace_id + "|" + j.dump();

  std::promise<Counters> promise;
  std::shared_future<Counters> future;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      future = promise.get_future().share();
      entries_.emplace(key, future);
      owner = true;
    } else {
      future = it->second;
    }
  }
  if (owner) {
    try {
      ++simulations_;
      promise.set_value(simulate(trace, key_cfg, 0));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  // shared_future::get returns a reference that lives as long as the shared
  // state, which the map keeps alive.
  return future.get();
}

PolicyRun run_policy(const Trace& trace, const CacheConfig& cfg, const ReuseModel* model,
                     std::uint64_t seed, BaselineCache& baselines,
                     std::optional<std::string> trace_id) {
  cfg.validate();
  if (is_learned(cfg.policy) && model == nullptr) {
    throw ConfigError("policy " + std::string(to_string(cfg.policy)) + " requires a model");
  }
  const std::string id = trace_id ? *trace_id : trace_fingerprint(trace);
  const auto& base = baselines.get(trace, id, cfg);
  PolicyRun out;
  out.counters = cfg.policy == Policy::Lru
                     ? base
                     : simulate(trace, cfg, seed, is_learned(cfg.policy) ? model : nullptr);
  out.report = make_report(out.counters, base, std::string(to_string(cfg.policy)), id, seed);
  return out;
}

// ---- online loop ----

void OnlineConfig::validate() const {
  if (batch_tokens < 1) throw ConfigError("batch_tokens must be >= 1");
  if (resolution_window < 1) throw ConfigError("resolution_window must be >= 1");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const OnlineConfig& cfg) {
  j = nlohmann::json{{"enabled", cfg.enabled},
                     {"batch_tokens", cfg.batch_tokens},
                     {"resolution_window", cfg.resolution_window},
                     {"learning_rate", cfg.learning_rate},
                     {"dropout_p", cfg.dropout_p}};
}

void from_json(const nlohmann::json& j, OnlineConfig& cfg) {
  if (!j.is_object()) throw ConfigError("OnlineConfig must be a JSON object");
  OnlineConfig out;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "enabled") out.enabled = value.get<bool>();
      else if (key == "batch_tokens") out.batch_tokens = value.get<std::size_t>();
      else if (key == "resolution_window") out.resolution_window = value.get<std::size_t>();
      else if (key == "learning_rate") out.learning_rate = value.get<double>();
      else if (key == "dropout_p") out.dropout_p = value.get<double>();
      else throw ConfigError("unknown OnlineConfig field '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("OnlineConfig field '" + key + "': " + e.what());
    }
  }
  out.validate();
  cfg = out;
}

namespace {

struct PendingFill {
  std::vector<FeatureVector> context;
  std::uint64_t deadline = 0;
};

struct ResolvedExample {
  std::vector<FeatureVector> context;
  double label = 0.0;
};

class Resolver : public FillObserver {
 public:
  Resolver(std::size_t window, OnlineStats& stats) : window_(window), stats_(stats) {}

  void set_now(std::uint64_t access_index) { now_ = access_index; }

  void on_fill(std::uint64_t fill_id, std::uint64_t, bool, double,
               std::vector<FeatureVector> context) override {
    ++stats_.fills;
    pending_.emplace(fill_id, PendingFill{std::move(context), now_ + window_});
    queue_.push_back(fill_id);
  }

  void on_evict(std::uint64_t fill_id, std::uint64_t, bool demand_hit) override {
    auto it = pending_.find(fill_id);
    if (it == pending_.end()) return;
    ++stats_.evict_resolved;
    resolve(it, demand_hit);
  }

  // Labels fills that have aged past the window without being evicted.
  void expire(const CacheSimulator& sim) {
    while (!queue_.empty()) {
      auto it = pending_.find(queue_.front());
      if (it == pending_.end()) {
        queue_.pop_front();
        continue;
      }
      if (it->second.deadline > now_) break;
      queue_.pop_front();
      ++stats_.timeout_resolved;
      resolve(it, sim.fill_received_demand_hit(it->first));
    }
  }

  void censor_rest() {
    stats_.censored += pending_.size();
    pending_.clear();
    queue_.clear();
  }

  std::vector<ResolvedExample> take() { return std::exchange(ready_, {}); }

 private:
  void resolve(std::unordered_map<std::uint64_t, PendingFill>::iterator it, bool label) {
    if (!it->second.context.empty()) {
      ready_.push_back({std::move(it->second.context), label ? 1.0 : 0.0});
    }
    pending_.erase(it);
  }

  std::size_t window_;
  OnlineStats& stats_;
  std::uint64_t now_ = 0;
  std::unordered_map<std::uint64_t, PendingFill> pending_;
  std::deque<std::uint64_t> queue_;
  std::vector<ResolvedExample> ready_;
};

}  // namespace

OnlineRun online_feedback_loop(const Trace& trace, const CacheConfig& cfg, const ReuseModel& model,
                               const OnlineConfig& online, std::uint64_t seed,
                               BaselineCache& baselines, std::optional<std::string> trace_id) {
  cfg.validate();
  online.validate();
  if (cfg.policy != Policy::Parm) throw ConfigError("the online loop requires the PARM policy");
  if (trace.empty()) throw DataError("cannot simulate an empty trace");
  const std::string id = trace_id ? *trace_id : trace_fingerprint(trace);

  OnlineRun out;
  out.model = model.clone();
  AdamState adam(out.model->parameters().size());
  std::vector<double> grad(out.model->parameters().size());

  Resolver resolver(online.resolution_window, out.stats);
  CacheSimulator sim(cfg, seed, out.model.get());
  sim.set_observer(&resolver);

  std::size_t tokens_in_batch = 0;
  std::optional<std::uint64_t> current_token;
  std::vector<ResolvedExample> batch;

  auto update = [&] {
    auto fresh = resolver.take();
    batch.insert(batch.end(), std::make_move_iterator(fresh.begin()),
                 std::make_move_iterator(fresh.end()));
    if (batch.empty()) return;
    const std::uint64_t step_seed = mix_seed(seed, out.stats.updates);
    std::vector<Example> examples;
    examples.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      examples.push_back({Window(batch[i].context), batch[i].label, mix_seed(step_seed, i)});
    }
    const double loss = batch_gradient(*out.model, examples, Mode::Train, online.dropout_p, grad);
    adam_step(*out.model, grad, adam, online.learning_rate);
    sim.model_updated();
    out.loss_curve.push_back(loss);
    ++out.stats.updates;
    out.stats.examples_trained += batch.size();
    batch.clear();
  };

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& r = trace[i];
    if (current_token && *current_token != r.token_id) {
      if (++tokens_in_batch == online.batch_tokens) {
        update();
        tokens_in_batch = 0;
      }
    }
    current_token = r.token_id;
    resolver.set_now(i);
    resolver.expire(sim);
    sim.access(r);
  }
  // The final token completes at the end of the trace.
  if (++tokens_in_batch == online.batch_tokens) {
    resolver.set_now(trace.size());
    resolver.expire(sim);
    update();
  }
  sim.finish();
  resolver.censor_rest();

  const auto& base = baselines.get(trace, id, cfg);
  out.run.counters = sim.counters();
  out.run.report = make_report(out.run.counters, base, "PARM", id, seed);
  log::debug("online loop: " + std::to_string(out.stats.updates) + " updates, " +
             std::to_string(out.stats.fills) + " fills");
  return out;
}

// ---- reporting ----

namespace {

std::string fixed(double v) {
  if (v == 0.0) v = 0.0;  // no "-0.0000"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::optional<double> gain(double baseline, double candidate) {
  if (baseline == 0.0) return std::nullopt;
  return 100.0 * (candidate - baseline) / baseline;
}

}  // namespace

ComparisonTable compare_table(const std::vector<MetricsReport>& reports,
                              const std::map<std::string, double>& final_losses) {
  if (reports.empty()) throw DataError("compare_table needs at least one report");
  for (const auto& r : reports) {
    if (r.trace_id != reports.front().trace_id) {
      throw DataError("reports come from different traces ('" + reports.front().trace_id +
                      "' vs '" + r.trace_id + "')");
    }
  }

  ComparisonTable table;
  std::vector<std::size_t> counts;
  for (const auto& r : reports) {
    auto it = std::find_if(table.rows.begin(), table.rows.end(),
                           [&](const ComparisonRow& row) { return row.policy == r.policy; });
    if (it == table.rows.end()) {
      ComparisonRow row;
      row.policy = r.policy;
      table.rows.push_back(row);
      counts.push_back(0);
      it = table.rows.end() - 1;
    }
    const auto k = static_cast<std::size_t>(it - table.rows.begin());
    ++counts[k];
    it->chr += r.chr_pct;
    it->ppr += r.ppr_pct;
    it->mpr += r.mpr_pct;
    it->tgt += r.tgt_tokens_per_mcycle;
  }
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    auto& row = table.rows[k];
    const double n = static_cast<double>(counts[k]);
    row.chr /= n;
    row.ppr /= n;
    row.mpr /= n;
    row.tgt /= n;
    if (auto it = final_losses.find(row.policy); it != final_losses.end()) {
      row.final_loss = it->second;
    }
  }

  auto find = [&](std::string_view name) -> const ComparisonRow* {
    for (const auto& row : table.rows) {
      if (row.policy == name) return &row;
    }
    return nullptr;
  };
  const std::pair<std::string_view, std::string_view> pairs[] = {
      {"PARM", "MLP"}, {"PARM", "LRU"}, {"MLP", "LRU"}};
  for (const auto& [cand, base] : pairs) {
    const auto* c = find(cand);
    const auto* b = find(base);
    if (!c || !b) continue;
    DerivedRow d;
    d.candidate = c->policy;
    d.baseline = b->policy;
    // PPR falls when pollution improves, hence the flipped sign.
    if (auto g = gain(b->ppr, c->ppr)) d.pollution_reduction = -*g;
    d.chr_gain = gain(b->chr, c->chr);
    d.mpr_gain = gain(b->mpr, c->mpr);
    d.tgt_gain = gain(b->tgt, c->tgt);
    table.derived.push_back(d);
  }
  return table;
}

std::string comparison_csv(const ComparisonTable& table) {
  auto opt = [](const std::optional<double>& v) { return v ? fixed(*v) : std::string("NA"); };
  std::ostringstream out;
  out << "Model,CHR,PPR,MPR,TGT,FinalLoss\n";
  for (const auto& r : table.rows) {
    out << r.policy << ',' << fixed(r.chr) << ',' << fixed(r.ppr) << ',' << fixed(r.mpr) << ','
        << fixed(r.tgt) << ',' << opt(r.final_loss) << '\n';
  }
  out << "\nCandidate,Baseline,PollutionReduction,ChrGain,MprGain,TgtGain\n";
  for (const auto& d : table.derived) {
    out << d.candidate << ',' << d.baseline << ',' << opt(d.pollution_reduction) << ','
        << opt(d.chr_gain) << ',' << opt(d.mpr_gain) << ',' << opt(d.tgt_gain) << '\n';
  }
  return out.str();
}

std::string loss_curve_csv(const std::vector<double>& losses) {
  std::string out = "epoch_or_batch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out += std::to_string(i + 1) + "," + format_real(losses[i]) + "\n";
  }
  return out;
}

std::string report_json(const MetricsReport& report) {
  return nlohmann::json(report).dump(2) + "\n";
}

// ---- experiments ----

void ExperimentConfig::validate() const {
  if (policies.empty()) throw ConfigError("experiment needs at least one policy");
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  cache.validate();
  if (online.enabled) online.validate();
  for (Policy p : policies) {
    if (!is_learned(p)) continue;
    auto it = models.find(p);
    if (it == models.end() || !it->second.model) {
      throw ConfigError("policy " + std::string(to_string(p)) + " requires a model");
    }
  }
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Trace trace = read_trace(cfg.trace);
  const std::string id = trace_fingerprint(trace);

  struct Job {
    Policy policy;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Policy p : cfg.policies) {
    for (std::uint64_t s : cfg.seeds) jobs.push_back({p, s});
  }

  BaselineCache baselines;
  std::vector<MetricsReport> reports(jobs.size());
  std::vector<std::vector<double>> online_curves(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        CacheConfig cc = cfg.cache;
        cc.policy = jobs[k].policy;
        const ReuseModel* model = nullptr;
        if (is_learned(cc.policy)) model = cfg.models.at(cc.policy).model.get();
        if (cc.policy == Policy::Parm && cfg.online.enabled) {
          auto run = online_feedback_loop(trace, cc, *model, cfg.online, jobs[k].seed, baselines, id);
          reports[k] = run.run.report;
          online_curves[k] = std::move(run.loss_curve);
        } else {
          reports[k] = run_policy(trace, cc, model, jobs[k].seed, baselines, id).report;
        }
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(cfg.jobs, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ExperimentResult result;
  result.reports = reports;

  std::map<std::string, double> final_losses;
  for (const auto& [policy, learned] : cfg.models) {
    if (!learned.loss_curve.empty()) {
      final_losses[std::string(to_string(policy))] = learned.loss_curve.back();
    }
  }
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (!online_curves[k].empty() && result.loss_curve.empty()) {
      result.loss_curve = online_curves[k];
      final_losses["PARM"] = online_curves[k].back();
    }
  }
  if (result.loss_curve.empty()) {
    for (Policy p : {Policy::Parm, Policy::Mlp}) {
      auto it = cfg.models.find(p);
      if (it != cfg.models.end() && !it->second.loss_curve.empty()) {
        result.loss_curve = it->second.loss_curve;
        break;
      }
    }
  }
  result.table = compare_table(result.reports, final_losses);

  std::filesystem::create_directories(cfg.output_dir);
  for (const auto& r : result.reports) {
    write_file_atomic(cfg.output_dir / (r.policy + "_" + std::to_string(r.seed) + ".metrics.json"),
                      report_json(r));
  }
  write_file_atomic(cfg.output_dir / "comparison.csv", comparison_csv(result.table));
  write_file_atomic(cfg.output_dir / "loss_curve.csv", loss_curve_csv(result.loss_curve));
  return result;
}

}  // namespace acpc
