#include "acpc/adam.hpp"

#include <cmath>
#include <optional>

#include "acpc/error.hpp"

namespace acpc {

namespace {

std::optional<std::size_t> first_non_finite(std::span<const double> grads) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) return i;
  }
  return std::nullopt;
}

void apply(std::span<double> params, std::span<const double> grads, AdamState& state,
           double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double learning_rate) {
  if (auto bad = first_non_finite(grads)) {
    throw NumericError("non-finite gradient at parameter " + std::to_string(*bad));
  }
  apply(params, grads, state, learning_rate);
}

void adam_step(ReuseModel& model, std::span<const double> grads, AdamState& state,
               double learning_rate) {
  if (auto bad = first_non_finite(grads)) {
    throw NumericError("non-finite gradient at parameter " + model.parameter_name(*bad));
  }
  apply(model.parameters(), grads, state, learning_rate);
}

}  // namespace acpc
