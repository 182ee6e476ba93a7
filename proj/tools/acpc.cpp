// acpc: generate / label / train / simulate / compare.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "acpc/cache.hpp"
#include "acpc/error.hpp"
#include "acpc/harness.hpp"
#include "acpc/io.hpp"
#include "acpc/log.hpp"
#include "acpc/mlp.hpp"
#include "acpc/model_io.hpp"
#include "acpc/tcn.hpp"
#include "acpc/trace.hpp"
#include "acpc/train.hpp"

namespace fs = std::filesystem;
using namespace acpc;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

template <typename T>
T load_json_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return j.get<T>();
}

struct GenerateArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

void run_generate(const GenerateArgs& a) {
  auto cfg = load_json_config<GenConfig>(a.config);
  if (a.seed) cfg.seed = *a.seed;
  const Trace trace = generate_trace(cfg);
  write_trace(trace, a.out);
  log::info("wrote " + std::to_string(trace.size()) + " accesses to " + a.out);
}

struct LabelArgs {
  std::string trace, out;
  std::size_t window = 1024;
};

void run_label(const LabelArgs& a) {
  Trace trace = read_trace(fs::path(a.trace));
  compute_reuse_distance(trace);
  compute_reuse_labels(trace, a.window);
  write_trace(trace, a.out);
}

struct TrainArgs {
  std::string trace, config, model, curve, kind = "tcn";
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_json_config<TrainConfig>(a.config);
  if (a.seed) cfg.seed = *a.seed;
  const Trace trace = read_trace(fs::path(a.trace));
  const auto splits = make_splits(trace);

  std::unique_ptr<ReuseModel> init;
  if (a.kind == "tcn") init = std::make_unique<TcnModel>(TcnModel::random(cfg.seed));
  else init = std::make_unique<MlpModel>(MlpModel::random(cfg.seed));

  auto result = train(*init, splits.train, splits.validation, cfg);
  log::info("best epoch " + std::to_string(result.best_epoch) + ", test accuracy " +
            std::to_string(accuracy(*result.model, splits.test)));
  save_model(*result.model, a.model);
  if (!a.curve.empty()) write_file_atomic(a.curve, loss_curve_csv(result.loss_curve));
}

struct SimulateArgs {
  std::string trace, policy, cache, model, out, curve, online_config, model_out, events;
  std::optional<double> alpha;
  std::vector<std::uint64_t> seeds{0};
  bool online = false;
  std::size_t jobs = 1;
};

void run_simulate(const SimulateArgs& a) {
  CacheConfig cache;
  if (!a.cache.empty()) cache = load_json_config<CacheConfig>(a.cache);
  cache.policy = policy_from_string(a.policy);
  if (a.alpha) cache.alpha = *a.alpha;
  cache.validate();
  if (is_learned(cache.policy) && a.model.empty()) {
    throw ConfigError("policy " + std::string(to_string(cache.policy)) + " requires --model");
  }
  OnlineConfig online;
  if (!a.online_config.empty()) online = load_json_config<OnlineConfig>(a.online_config);
  online.enabled = a.online;
  if (a.online && cache.policy != Policy::Parm) {
    throw ConfigError("--online requires --policy parm");
  }
  if (!a.events.empty() && (a.online || a.seeds.size() > 1)) {
    throw ConfigError("--events needs a single seed and no --online");
  }

  std::shared_ptr<const ReuseModel> model;
  if (is_learned(cache.policy)) model = load_model(a.model);

  if (a.seeds.size() > 1) {
    ExperimentConfig exp;
    exp.trace = a.trace;
    exp.policies = {cache.policy};
    exp.cache = cache;
    exp.online = online;
    exp.seeds = a.seeds;
    exp.output_dir = a.out;
    exp.jobs = a.jobs;
    if (model) exp.models[cache.policy] = LearnedModel{model, {}};
    run_experiment(exp);
    return;
  }

  const Trace trace = read_trace(fs::path(a.trace));
  BaselineCache baselines;
  const std::uint64_t seed = a.seeds.front();
  if (a.online) {
    auto run = online_feedback_loop(trace, cache, *model, online, seed, baselines);
    write_file_atomic(a.out, report_json(run.run.report));
    if (!a.curve.empty()) write_file_atomic(a.curve, loss_curve_csv(run.loss_curve));
    if (!a.model_out.empty()) save_model(*run.model, a.model_out);
  } else {
    auto run = run_policy(trace, cache, model.get(), seed, baselines);
    write_file_atomic(a.out, report_json(run.report));
    if (!a.events.empty()) {
      CacheSimulator sim(cache, seed, is_learned(cache.policy) ? model.get() : nullptr);
      sim.record_events(true);
      for (const auto& r : trace) sim.access(r);
      sim.finish();
      std::ostringstream log;
      write_event_log(sim.events(), log);
      write_file_atomic(a.events, log.str());
    }
  }
}

struct CompareArgs {
  std::vector<std::string> inputs;
  std::string out;
};

void run_compare(const CompareArgs& a) {
  std::vector<MetricsReport> reports;
  for (const auto& path : a.inputs) {
    try {
      reports.push_back(nlohmann::json::parse(read_file(path)).get<MetricsReport>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ": invalid JSON: " + e.what());
    }
  }
  write_file_atomic(a.out, comparison_csv(compare_table(reports)));
}

int fail(const std::string& category, const std::string& message, int code) {
  std::cerr << "ERROR:" << category << ": " << message << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pollution-aware cache replacement: traces, predictor training, simulation"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic decode trace");
  g->add_option("--config", gen.config, "GenConfig JSON")->required();
  g->add_option("--out", gen.out, "Output trace CSV")->required();
  g->add_option("--seed", gen.seed, "Overrides the config seed");

  LabelArgs lab;
  auto* l = app.add_subcommand("label", "Recompute reuse distances and window labels");
  l->add_option("--trace", lab.trace, "Input trace CSV")->required();
  l->add_option("--window", lab.window, "Label window in accesses")->capture_default_str();
  l->add_option("--out", lab.out, "Output trace CSV")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a reuse predictor offline");
  t->add_option("--trace", tr.trace, "Labeled trace CSV")->required();
  t->add_option("--config", tr.config, "TrainConfig JSON (defaults if omitted)");
  t->add_option("--model", tr.model, "Output model JSON")->required();
  t->add_option("--curve", tr.curve, "Output loss curve CSV");
  t->add_option("--seed", tr.seed, "Overrides the config seed");
  t->add_option("--kind", tr.kind, "tcn or mlp")
      ->check(CLI::IsMember({"tcn", "mlp"}))
      ->capture_default_str();

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run a trace through the cache hierarchy");
  s->add_option("--trace", sim.trace, "Trace CSV")->required();
  s->add_option("--policy", sim.policy, "lru, random, srrip, mlp or parm")->required();
  s->add_option("--cache", sim.cache, "CacheConfig JSON (defaults if omitted)");
  s->add_option("--model", sim.model, "Model JSON, required for mlp and parm");
  s->add_option("--alpha", sim.alpha, "Overrides the config alpha");
  s->add_option("--seed", sim.seeds, "One or more seeds")->expected(1, -1)->capture_default_str();
  s->add_option("--out", sim.out,
                "Report JSON; with several seeds, an output directory")
      ->required();
  s->add_flag("--online", sim.online, "Enable online learning (parm only)");
  s->add_option("--online-config", sim.online_config, "OnlineConfig JSON");
  s->add_option("--curve", sim.curve, "Online loss curve CSV (single seed)");
  s->add_option("--model-out", sim.model_out, "Updated model JSON after --online (single seed)");
  s->add_option("--events", sim.events, "Per-access event log CSV (single seed, offline only)");
  s->add_option("--jobs", sim.jobs, "Parallel seed runs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Tabulate metrics reports");
  c->add_option("--inputs", cmp.inputs, "Report JSON files")->required()->expected(1, -1);
  c->add_option("--out", cmp.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR:usage: " << e.what() << "\n";
    std::cerr << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kUsage;
  }

  try {
    if (g->parsed()) run_generate(gen);
    else if (l->parsed()) run_label(lab);
    else if (t->parsed()) run_train(tr);
    else if (s->parsed()) run_simulate(sim);
    else if (c->parsed()) run_compare(cmp);
  } catch (const InvariantError& e) {
    return fail(e.category(), e.what(), kInternal);
  } catch (const Error& e) {
    return fail(e.category(), e.what(), kData);
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what(), kData);
  } catch (const nlohmann::json::exception& e) {
    return fail("config", e.what(), kData);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kInternal);
  }
  return kOk;
}
