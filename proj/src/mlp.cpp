#include "acpc/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "acpc/error.hpp"
#include "acpc/rng.hpp"

namespace acpc {

namespace {

constexpr auto kW = MlpModel::kWidths;
constexpr std::size_t kLayers = kW.size() - 1;

std::vector<ParamBlock> make_blocks() {
  std::vector<ParamBlock> blocks;
  std::size_t off = 0;
  for (std::size_t l = 0; l < kLayers; ++l) {
    ParamBlock w{"fc" + std::to_string(l) + ".weight", off, {kW[l + 1], kW[l]}};
    off += w.size();
    ParamBlock b{"fc" + std::to_string(l) + ".bias", off, {kW[l + 1]}};
    off += b.size();
    blocks.push_back(std::move(w));
    blocks.push_back(std::move(b));
  }
  return blocks;
}

const std::vector<ParamBlock>& mlp_blocks() {
  static const std::vector<ParamBlock> blocks = make_blocks();
  return blocks;
}

std::size_t total_params() {
  const auto& b = mlp_blocks();
  return b.back().offset + b.back().size();
}

class MlpStream final : public PredictionStream {
 public:
  explicit MlpStream(const MlpModel& model) : model_(model) {}
  void push(const FeatureVector& x) override {
    last_ = x;
    has_ = true;
  }
  double predict_last() const override {
    return has_ ? model_.predict(Window(&last_, 1)) : 0.5;
  }
  double peek(const FeatureVector& x) const override { return model_.predict(Window(&x, 1)); }
  void refresh() override {}
  std::vector<FeatureVector> context() const override {
    if (!has_) return {};
    return {last_};
  }

 private:
  const MlpModel& model_;
  FeatureVector last_{};
  bool has_ = false;
};

}  // namespace

struct MlpModel::Tape {
  std::array<std::vector<double>, kLayers> z;  // pre-activations
  std::array<std::vector<double>, kLayers> a;  // outputs (a[last] unused)
  std::array<std::vector<double>, kLayers> mask;
  const FeatureVector* input = nullptr;
  double yhat = 0.5;
};

MlpModel::MlpModel() : params_(total_params(), 0.0) {}

MlpModel MlpModel::random(std::uint64_t seed) {
  MlpModel m;
  Rng rng(seed);
  const auto& blocks = mlp_blocks();
  for (std::size_t l = 0; l < kLayers; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(kW[l]));
    const auto& w = blocks[2 * l];
    const auto& b = blocks[2 * l + 1];
    for (std::size_t i = 0; i < w.size(); ++i) m.params_[w.offset + i] = (2.0 * rng.uniform() - 1.0) * bound;
    for (std::size_t i = 0; i < b.size(); ++i) m.params_[b.offset + i] = (2.0 * rng.uniform() - 1.0) * 0.05;
  }
  return m;
}

const std::vector<ParamBlock>& MlpModel::blocks() const { return mlp_blocks(); }

double& MlpModel::weight(std::size_t layer, std::size_t out, std::size_t in) {
  return params_[mlp_blocks()[2 * layer].offset + out * kW[layer] + in];
}

double& MlpModel::bias(std::size_t layer, std::size_t out) {
  return params_[mlp_blocks()[2 * layer + 1].offset + out];
}

void MlpModel::forward(const FeatureVector& x, const ForwardOptions& opts, Tape& tape) const {
  const auto& blocks = mlp_blocks();
  const bool train = opts.mode == Mode::Train;
  tape.input = &x;
  const double* in = x.data();
  for (std::size_t l = 0; l < kLayers; ++l) {
    const double* w = params_.data() + blocks[2 * l].offset;
    const double* b = params_.data() + blocks[2 * l + 1].offset;
    tape.z[l].assign(kW[l + 1], 0.0);
    tape.a[l].assign(kW[l + 1], 0.0);
    tape.mask[l].assign(kW[l + 1], 1.0);
    for (std::size_t o = 0; o < kW[l + 1]; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < kW[l]; ++i) acc += w[o * kW[l] + i] * in[i];
      tape.z[l][o] = acc;
      if (l + 1 < kLayers) {
        const double m = train ? detail::dropout_factor(opts.mask_seed, l, 0, o, opts.dropout_p) : 1.0;
        tape.mask[l][o] = m;
        tape.a[l][o] = std::max(acc, 0.0) * m;
      }
    }
    in = tape.a[l].data();
  }
  tape.yhat = detail::sigmoid(tape.z[kLayers - 1][0]);
}

double MlpModel::predict(Window window, const ForwardOptions& opts) const {
  if (window.empty()) throw ShapeError("empty feature window");
  Tape tape;
  forward(window.back(), opts, tape);
  return tape.yhat;
}

double MlpModel::accumulate_gradient(Window window, double label, double scale,
                                     const ForwardOptions& opts,
                                     std::span<double> grad) const {
  if (window.empty()) throw ShapeError("empty feature window");
  if (grad.size() != params_.size()) throw ShapeError("gradient buffer has wrong size");
  Tape tape;
  forward(window.back(), opts, tape);
  const double dlogit = scale * detail::bce_logit_gradient(tape.yhat, label);
  if (dlogit == 0.0) return tape.yhat;

  const auto& blocks = mlp_blocks();
  std::vector<double> dz{dlogit};
  for (std::size_t l = kLayers; l-- > 0;) {
    const double* in = l == 0 ? tape.input->data() : tape.a[l - 1].data();
    const double* w = params_.data() + blocks[2 * l].offset;
    double* gw = grad.data() + blocks[2 * l].offset;
    double* gb = grad.data() + blocks[2 * l + 1].offset;
    std::vector<double> din(kW[l], 0.0);
    for (std::size_t o = 0; o < kW[l + 1]; ++o) {
      if (dz[o] == 0.0) continue;
      gb[o] += dz[o];
      for (std::size_t i = 0; i < kW[l]; ++i) {
        gw[o * kW[l] + i] += dz[o] * in[i];
        din[i] += w[o * kW[l] + i] * dz[o];
      }
    }
    if (l == 0) break;
    dz.assign(kW[l], 0.0);
    for (std::size_t i = 0; i < kW[l]; ++i) {
      if (tape.z[l - 1][i] > 0.0) dz[i] = din[i] * tape.mask[l - 1][i];
    }
  }
  return tape.yhat;
}

std::uint64_t MlpModel::activation_pattern(Window window, const ForwardOptions& opts) const {
  if (window.empty()) throw ShapeError("empty feature window");
  Tape tape;
  forward(window.back(), opts, tape);
  std::uint64_t h = 0x9E3779B97F4A7C15ULL;
  for (std::size_t l = 0; l + 1 < kLayers; ++l) {
    for (double z : tape.z[l]) h = mix_seed(h, z > 0.0);
  }
  return h;
}

std::unique_ptr<ReuseModel> MlpModel::clone() const { return std::make_unique<MlpModel>(*this); }

std::unique_ptr<PredictionStream> MlpModel::open_stream() const {
  return std::make_unique<MlpStream>(*this);
}

}  // namespace acpc
