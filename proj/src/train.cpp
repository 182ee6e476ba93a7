#include "acpc/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "acpc/adam.hpp"
#include "acpc/error.hpp"
#include "acpc/log.hpp"
#include "acpc/rng.hpp"

namespace acpc {

Window Dataset::window(std::size_t i, std::size_t max_len) const {
  const std::size_t len = std::min(i + 1, max_len);
  return Window(features.data() + (i + 1 - len), len);
}

Dataset make_dataset(std::span<const AccessRecord> labeled) {
  Dataset d;
  d.features = featurize(labeled);
  d.labels.reserve(labeled.size());
  for (const auto& r : labeled) d.labels.push_back(r.label);
  return d;
}

DatasetSplits make_splits(const Trace& labeled) {
  if (labeled.size() < 20) {
    throw DataError("trace of " + std::to_string(labeled.size()) +
                    " records is too short to split (need >= 20)");
  }
  const auto all = make_dataset(labeled);
  const auto [a, b] = split_boundaries(labeled.size());
  auto slice = [&](std::size_t from, std::size_t to) {
    Dataset d;
    d.features.assign(all.features.begin() + static_cast<std::ptrdiff_t>(from),
                      all.features.begin() + static_cast<std::ptrdiff_t>(to));
    d.labels.assign(all.labels.begin() + static_cast<std::ptrdiff_t>(from),
                    all.labels.begin() + static_cast<std::ptrdiff_t>(to));
    return d;
  };
  return {slice(0, a), slice(a, b), slice(b, labeled.size())};
}

void TrainConfig::validate() const {
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{{"learning_rate", cfg.learning_rate}, {"batch_size", cfg.batch_size},
                     {"max_epochs", cfg.max_epochs},       {"dropout_p", cfg.dropout_p},
                     {"patience", cfg.patience},           {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  if (!j.is_object()) throw ConfigError("TrainConfig must be a JSON object");
  TrainConfig out;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "learning_rate") out.learning_rate = value.get<double>();
      else if (key == "batch_size") out.batch_size = value.get<std::size_t>();
      else if (key == "max_epochs") out.max_epochs = value.get<std::size_t>();
      else if (key == "dropout_p") out.dropout_p = value.get<double>();
      else if (key == "patience") out.patience = value.get<std::size_t>();
      else if (key == "seed") out.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown TrainConfig field '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("TrainConfig field '" + key + "': " + e.what());
    }
  }
  out.validate();
  cfg = out;
}

double accuracy(const ReuseModel& model, const Dataset& data) {
  if (data.size() == 0) throw DataError("accuracy of an empty dataset");
  std::size_t correct = 0;
  const std::size_t ctx = model.context_length();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool positive = model.predict(data.window(i, ctx)) >= 0.5;
    correct += positive == (data.labels[i] != 0);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(const ReuseModel& initial, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0) throw DataError("empty training set");
  if (val_set.size() == 0) throw DataError("empty validation set");

  TrainResult result;
  result.model = initial.clone();
  if (cfg.max_epochs == 0) return result;

  auto model = initial.clone();
  AdamState adam(model->parameters().size());
  std::vector<double> grad(model->parameters().size());
  std::vector<std::size_t> order(train_set.size());
  std::vector<Example> batch;
  batch.reserve(cfg.batch_size);
  const std::size_t ctx = model->context_length();

  double best_acc = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        batch.push_back({train_set.window(idx, ctx), static_cast<double>(train_set.labels[idx]),
                         mix_seed(mix_seed(cfg.seed, epoch), idx)});
      }
      const double loss = batch_gradient(*model, batch, Mode::Train, cfg.dropout_p, grad);
      adam_step(*model, grad, adam, cfg.learning_rate);
      loss_sum += loss * static_cast<double>(batch.size());
    }
    result.loss_curve.push_back(loss_sum / static_cast<double>(order.size()));
    const double acc = accuracy(*model, val_set);
    result.val_accuracy.push_back(acc);
    log::debug("epoch " + std::to_string(epoch + 1) + " loss " +
               std::to_string(result.loss_curve.back()) + " val_acc " + std::to_string(acc));

    if (acc > best_acc) {
      best_acc = acc;
      since_best = 0;
      result.model = model->clone();
      result.best_epoch = epoch + 1;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

GradCheckResult grad_check(const ReuseModel& model, std::span<const Example> batch,
                           double epsilon, const GradCheckOptions& opts) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("grad_check: epsilon must be positive and finite");
  }
  if (batch.empty()) throw ShapeError("grad_check: empty batch");

  auto probe = model.clone();
  auto params = probe->parameters();
  std::vector<double> analytic(params.size());
  batch_gradient(model, batch, opts.mode, opts.dropout_p, analytic);

  auto patterns = [&](const ReuseModel& m) {
    std::vector<std::uint64_t> p;
    for (const auto& ex : batch) {
      p.push_back(m.activation_pattern(ex.window, {opts.mode, opts.dropout_p, ex.mask_seed}));
    }
    return p;
  };
  const auto base = patterns(model);

  std::vector<std::size_t> order(params.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(opts.seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  GradCheckResult result;
  for (std::size_t idx : order) {
    if (result.checked >= opts.samples) break;
    const double orig = params[idx];
    params[idx] = orig + epsilon;
    const double up = batch_loss(*probe, batch, opts.mode, opts.dropout_p);
    const bool up_same = patterns(*probe) == base;
    params[idx] = orig - epsilon;
    const double down = batch_loss(*probe, batch, opts.mode, opts.dropout_p);
    const bool down_same = patterns(*probe) == base;
    params[idx] = orig;
    if (!up_same || !down_same) {
      ++result.skipped_at_kinks;
      continue;
    }
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), 1e-12});
    result.max_relative_error =
        std::max(result.max_relative_error, std::abs(analytic[idx] - numeric) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace acpc
