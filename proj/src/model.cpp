#include "acpc/model.hpp"

#include <algorithm>
#include <numeric>

#include "acpc/error.hpp"
#include "acpc/rng.hpp"

namespace acpc {

double bce_loss(std::span<const double> predicted, std::span<const double> labels) {
  if (predicted.size() != labels.size()) {
    throw ShapeError("bce_loss: " + std::to_string(predicted.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (predicted.empty()) throw ShapeError("bce_loss: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double p = std::clamp(predicted[i], kProbabilityClip, 1.0 - kProbabilityClip);
    sum += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(predicted.size());
}

std::size_t ParamBlock::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string ReuseModel::parameter_name(std::size_t index) const {
  for (const auto& b : blocks()) {
    if (index < b.offset || index >= b.offset + b.size()) continue;
    std::size_t rem = index - b.offset;
    std::vector<std::size_t> coords(b.shape.size());
    for (std::size_t d = b.shape.size(); d-- > 0;) {
      coords[d] = rem % b.shape[d];
      rem /= b.shape[d];
    }
    std::string name = b.name + "[";
    for (std::size_t d = 0; d < coords.size(); ++d) {
      if (d) name += ",";
      name += std::to_string(coords[d]);
    }
    return name + "]";
  }
  return "param[" + std::to_string(index) + "]";
}

double batch_loss(const ReuseModel& model, std::span<const Example> batch, Mode mode,
                  double dropout_p) {
  std::vector<double> predicted, labels;
  predicted.reserve(batch.size());
  labels.reserve(batch.size());
  for (const auto& ex : batch) {
    predicted.push_back(model.predict(ex.window, {mode, dropout_p, ex.mask_seed}));
    labels.push_back(ex.label);
  }
  return bce_loss(predicted, labels);
}

double batch_gradient(const ReuseModel& model, std::span<const Example> batch, Mode mode,
                      double dropout_p, std::span<double> grad) {
  if (batch.empty()) throw ShapeError("batch_gradient: empty batch");
  if (grad.size() != model.parameters().size()) {
    throw ShapeError("batch_gradient: gradient buffer has wrong size");
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> predicted, labels;
  predicted.reserve(batch.size());
  labels.reserve(batch.size());
  for (const auto& ex : batch) {
    predicted.push_back(
        model.accumulate_gradient(ex.window, ex.label, scale, {mode, dropout_p, ex.mask_seed}, grad));
    labels.push_back(ex.label);
  }
  return bce_loss(predicted, labels);
}

namespace detail {

double dropout_factor(std::uint64_t mask_seed, std::size_t layer, std::size_t position,
                      std::size_t unit, double p) {
  if (p <= 0.0) return 1.0;
  const std::uint64_t h = mix_seed(mix_seed(mix_seed(mask_seed, layer), position), unit);
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < p ? 0.0 : 1.0 / (1.0 - p);
}

void check_window(Window window, std::size_t max_len) {
  if (window.empty()) throw ShapeError("empty feature window");
  if (window.size() > max_len) {
    throw ShapeError("window of " + std::to_string(window.size()) + " exceeds maximum " +
                     std::to_string(max_len));
  }
}

}  // namespace detail

}  // namespace acpc
