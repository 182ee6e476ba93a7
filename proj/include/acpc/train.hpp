#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <json.hpp>

#include "acpc/model.hpp"
#include "acpc/trace.hpp"

namespace acpc {

// A contiguous run of featurized accesses with their reuse labels. Example i
// uses the window ending at access i, truncated at the start of the run.
struct Dataset {
  std::vector<FeatureVector> features;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  Window window(std::size_t i, std::size_t max_len) const;
};

// Featurizes a labeled trace.
Dataset make_dataset(std::span<const AccessRecord> labeled);

// Train/validation/test datasets over the 70/15/15 time split, featurized on
// the whole trace so inter-access intervals carry across the boundaries.
struct DatasetSplits {
  Dataset train, validation, test;
};
DatasetSplits make_splits(const Trace& labeled);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 512;
  std::size_t max_epochs = 80;
  double dropout_p = 0.3;
  std::size_t patience = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct TrainResult {
  std::unique_ptr<ReuseModel> model;  // best-validation snapshot
  std::vector<double> loss_curve;     // mean training loss per epoch
  std::vector<double> val_accuracy;   // per epoch, threshold 0.5
  std::size_t best_epoch = 0;         // 1-based; 0 when no epoch ran
};

// Mini-batch Adam with per-epoch shuffles derived from (seed, epoch) and
// early stopping on validation accuracy.
TrainResult train(const ReuseModel& initial, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& cfg);

// Fraction of examples whose eval-mode prediction thresholded at 0.5 matches
// the label.
double accuracy(const ReuseModel& model, const Dataset& data);

struct GradCheckOptions {
  std::size_t samples = 256;
  std::uint64_t seed = 0;
  Mode mode = Mode::Eval;
  double dropout_p = 0.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Parameters whose +/- epsilon step flipped a rectifier; replaced by
  // other draws.
  std::size_t skipped_at_kinks = 0;
};

// Central finite differences against batch_gradient on a random subset of
// parameters. Relative error uses max(|analytic|, |numeric|, 1e-12).
GradCheckResult grad_check(const ReuseModel& model, std::span<const Example> batch,
                           double epsilon, const GradCheckOptions& opts = {});

}  // namespace acpc
