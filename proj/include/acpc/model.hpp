#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acpc/trace.hpp"

namespace acpc {

// Trailing accesses, oldest first; the last element is the access being
// predicted.
using Window = std::span<const FeatureVector>;

enum class Mode { Eval, Train };

struct ForwardOptions {
  Mode mode = Mode::Eval;
  double dropout_p = 0.0;
  // Seeds the per-unit dropout masks in Train mode.
  std::uint64_t mask_seed = 0;
};

// Lower/upper clip applied to predictions before taking logs.
inline constexpr double kProbabilityClip = 1e-7;

// Mean binary cross-entropy. Sizes must match and be non-zero.
double bce_loss(std::span<const double> predicted, std::span<const double> labels);

// Named contiguous region of a flat parameter vector, row-major.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t size() const;
};

// Incremental predictor over a stream of demand accesses.
class PredictionStream {
 public:
  virtual ~PredictionStream() = default;
  // Appends an access to the trailing window.
  virtual void push(const FeatureVector& x) = 0;
  // Prediction for the most recently pushed access.
  virtual double predict_last() const = 0;
  // Prediction for `x` as if appended after the window; the window is unchanged.
  virtual double peek(const FeatureVector& x) const = 0;
  // Rebuilds cached state after the model's parameters changed.
  virtual void refresh() = 0;
  // The last min(n, context) pushed accesses, oldest first.
  virtual std::vector<FeatureVector> context() const = 0;
};

// A binary reuse classifier over a window of access features with a flat
// parameter vector.
class ReuseModel {
 public:
  virtual ~ReuseModel() = default;

  virtual std::string_view kind() const = 0;
  // Longest window accepted by predict().
  virtual std::size_t max_window() const = 0;
  // Number of trailing accesses that can influence a prediction.
  virtual std::size_t context_length() const = 0;

  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;
  virtual const std::vector<ParamBlock>& blocks() const = 0;
  std::string parameter_name(std::size_t index) const;

  virtual double predict(Window window, const ForwardOptions& opts = {}) const = 0;

  // Adds scale * d(bce)/d(theta) for one example to `grad`; returns the
  // prediction.
  virtual double accumulate_gradient(Window window, double label, double scale,
                                     const ForwardOptions& opts,
                                     std::span<double> grad) const = 0;

  // Hash of which rectifiers are active. Finite-difference checks use it to
  // detect steps that cross a kink.
  virtual std::uint64_t activation_pattern(Window window, const ForwardOptions& opts) const = 0;

  virtual std::unique_ptr<ReuseModel> clone() const = 0;

  // The stream keeps a reference to this model; refresh() it after updates.
  virtual std::unique_ptr<PredictionStream> open_stream() const = 0;
};

struct Example {
  Window window;
  double label = 0.0;
  std::uint64_t mask_seed = 0;
};

// Mean bce over the batch.
double batch_loss(const ReuseModel& model, std::span<const Example> batch, Mode mode,
                  double dropout_p);

// Writes the gradient of the mean bce over the batch into `grad` (overwritten)
// and returns the loss.
double batch_gradient(const ReuseModel& model, std::span<const Example> batch, Mode mode,
                      double dropout_p, std::span<double> grad);

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// d(bce)/d(logit) for a sigmoid output, zero where the clip is active.
inline double bce_logit_gradient(double predicted, double label) {
  if (predicted < kProbabilityClip || predicted > 1.0 - kProbabilityClip) return 0.0;
  return predicted - label;
}

// Inverted-dropout factor (0 or 1/(1-p)) for one unit.
double dropout_factor(std::uint64_t mask_seed, std::size_t layer, std::size_t position,
                      std::size_t unit, double p);

void check_window(Window window, std::size_t max_len);

}  // namespace detail

}  // namespace acpc
