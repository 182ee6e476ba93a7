#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "acpc/model.hpp"

namespace acpc {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected Adam update. Throws NumericError naming the offending
// index if a gradient is not finite; nothing is modified in that case.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double learning_rate);

// Same, but errors name the parameter through the model's block layout.
void adam_step(ReuseModel& model, std::span<const double> grads, AdamState& state,
               double learning_rate);

}  // namespace acpc
