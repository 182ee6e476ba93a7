#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "acpc/model.hpp"

namespace acpc {

// Fixed architecture: three dilated causal convolutions (k=3, dilations
// 1/2/4, channels 16->32->32->32, rectifier + inverted dropout after each),
// then fc 32->16 with a rectifier and fc 16->1 with a sigmoid read at the
// last time step.
struct TcnArch {
  static constexpr std::size_t kLayers = 3;
  static constexpr std::size_t kKernel = 3;
  static constexpr std::array<std::size_t, kLayers> kDilations = {1, 2, 4};
  static constexpr std::array<std::size_t, kLayers + 1> kChannels = {kFeatureDim, 32, 32, 32};
  static constexpr std::size_t kHidden = 16;
  static constexpr std::size_t kWindow = 64;

  // 1 + (k-1) * sum(dilations)
  static constexpr std::size_t receptive_field() {
    std::size_t rf = 1;
    for (auto d : kDilations) rf += (kKernel - 1) * d;
    return rf;
  }
};

static_assert(TcnArch::receptive_field() == 15);
static_assert(TcnArch::receptive_field() <= TcnArch::kWindow);

class TcnModel final : public ReuseModel {
 public:
  // All parameters zero.
  TcnModel();
  // He-uniform kernels, small uniform biases.
  static TcnModel random(std::uint64_t seed);

  std::string_view kind() const override { return "tcn"; }
  std::size_t max_window() const override { return TcnArch::kWindow; }
  std::size_t context_length() const override { return TcnArch::receptive_field(); }

  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  const std::vector<ParamBlock>& blocks() const override;

  double& kernel(std::size_t layer, std::size_t out, std::size_t in, std::size_t tap);
  double kernel(std::size_t layer, std::size_t out, std::size_t in, std::size_t tap) const;
  double& conv_bias(std::size_t layer, std::size_t out);
  double conv_bias(std::size_t layer, std::size_t out) const;
  double& fc1_weight(std::size_t out, std::size_t in);
  double& fc1_bias(std::size_t out);
  double& fc2_weight(std::size_t in);
  double& fc2_bias();

  double predict(Window window, const ForwardOptions& opts = {}) const override;
  double accumulate_gradient(Window window, double label, double scale,
                             const ForwardOptions& opts,
                             std::span<double> grad) const override;
  std::uint64_t activation_pattern(Window window, const ForwardOptions& opts) const override;
  std::unique_ptr<ReuseModel> clone() const override;
  std::unique_ptr<PredictionStream> open_stream() const override;

  // Output of conv layer `layer` (post rectifier/dropout) at every position
  // of the window, computed densely. Used to check causality.
  std::vector<std::vector<double>> layer_outputs(Window window, std::size_t layer,
                                                 const ForwardOptions& opts = {}) const;

  // Offsets of each block inside the flat vector.
  struct Layout {
    std::array<std::size_t, TcnArch::kLayers> kernel;
    std::array<std::size_t, TcnArch::kLayers> bias;
    std::size_t fc1_w, fc1_b, fc2_w, fc2_b, total;
  };
  static const Layout& layout();

  // One conv output vector from up to kKernel tap inputs (nullptr = padding).
  void conv_point(std::size_t layer, const std::array<const double*, TcnArch::kKernel>& taps,
                  double* z_out) const;
  // fc head over the last conv output; fills the hidden activations.
  double head_logit(const double* features, double* hidden) const;

 private:
  struct Tape;
  void forward(Window window, const ForwardOptions& opts, Tape& tape) const;

  std::vector<double> params_;
};

}  // namespace acpc
