#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "acpc/model.hpp"

namespace acpc {

// Per-access feed-forward baseline: 16 -> 64 -> 32 -> 1 with rectifiers and a
// sigmoid output. It sees only the newest access of a window.
class MlpModel final : public ReuseModel {
 public:
  static constexpr std::array<std::size_t, 4> kWidths = {kFeatureDim, 64, 32, 1};

  MlpModel();
  static MlpModel random(std::uint64_t seed);

  std::string_view kind() const override { return "mlp"; }
  std::size_t max_window() const override { return SIZE_MAX; }
  std::size_t context_length() const override { return 1; }

  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  const std::vector<ParamBlock>& blocks() const override;

  // weight(layer, out, in) for layer 0..2, row-major [out x in].
  double& weight(std::size_t layer, std::size_t out, std::size_t in);
  double& bias(std::size_t layer, std::size_t out);

  double predict(Window window, const ForwardOptions& opts = {}) const override;
  double accumulate_gradient(Window window, double label, double scale,
                             const ForwardOptions& opts,
                             std::span<double> grad) const override;
  std::uint64_t activation_pattern(Window window, const ForwardOptions& opts) const override;
  std::unique_ptr<ReuseModel> clone() const override;
  std::unique_ptr<PredictionStream> open_stream() const override;

 private:
  struct Tape;
  void forward(const FeatureVector& x, const ForwardOptions& opts, Tape& tape) const;

  std::vector<double> params_;
};

}  // namespace acpc
