#include "acpc/tcn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "acpc/error.hpp"
#include "acpc/rng.hpp"

namespace acpc {

namespace {

constexpr std::size_t kLayers = TcnArch::kLayers;
constexpr std::size_t kK = TcnArch::kKernel;
constexpr auto kDil = TcnArch::kDilations;
constexpr auto kCh = TcnArch::kChannels;
constexpr std::size_t kHidden = TcnArch::kHidden;
constexpr std::size_t kRf = TcnArch::receptive_field();
constexpr std::size_t kMaxCh = 32;

static_assert(*std::max_element(kCh.begin(), kCh.end()) <= kMaxCh);

// Lags (distance back from the output position) at which each conv layer's
// output is needed to produce the final output; index kLayers holds the
// input lags.
struct Cone {
  std::array<std::vector<std::size_t>, kLayers + 1> lags;
  // slot[l][lag] = index into lags[l] or -1
  std::array<std::array<int, kRf>, kLayers + 1> slot;

  Cone() {
    for (auto& s : slot) s.fill(-1);
    lags[kLayers - 1] = {0};
    for (std::size_t l = kLayers; l-- > 0;) {
      std::vector<std::size_t> below;
      for (std::size_t q : lags[l]) {
        for (std::size_t j = 0; j < kK; ++j) below.push_back(q + (kK - 1 - j) * kDil[l]);
      }
      std::sort(below.begin(), below.end());
      below.erase(std::unique(below.begin(), below.end()), below.end());
      // layer l reads from layer l-1, or from the input when l == 0
      lags[l == 0 ? kLayers : l - 1] = below;
    }
    for (std::size_t l = 0; l <= kLayers; ++l) {
      for (std::size_t s = 0; s < lags[l].size(); ++s) slot[l][lags[l][s]] = static_cast<int>(s);
    }
  }
};

const Cone& cone() {
  static const Cone c;
  return c;
}

std::vector<ParamBlock> make_blocks() {
  std::vector<ParamBlock> blocks;
  std::size_t off = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    ParamBlock b{std::move(name), off, std::move(shape)};
    off += b.size();
    blocks.push_back(std::move(b));
  };
  for (std::size_t l = 0; l < kLayers; ++l) {
    add("conv" + std::to_string(l) + ".kernel", {kCh[l + 1], kCh[l], kK});
    add("conv" + std::to_string(l) + ".bias", {kCh[l + 1]});
  }
  add("fc1.weight", {kHidden, kCh[kLayers]});
  add("fc1.bias", {kHidden});
  add("fc2.weight", {1, kHidden});
  add("fc2.bias", {1});
  return blocks;
}

const std::vector<ParamBlock>& tcn_blocks() {
  static const std::vector<ParamBlock> blocks = make_blocks();
  return blocks;
}

TcnModel::Layout make_layout() {
  const auto& b = tcn_blocks();
  TcnModel::Layout lay{};
  for (std::size_t l = 0; l < kLayers; ++l) {
    lay.kernel[l] = b[2 * l].offset;
    lay.bias[l] = b[2 * l + 1].offset;
  }
  lay.fc1_w = b[2 * kLayers].offset;
  lay.fc1_b = b[2 * kLayers + 1].offset;
  lay.fc2_w = b[2 * kLayers + 2].offset;
  lay.fc2_b = b[2 * kLayers + 3].offset;
  lay.total = b.back().offset + b.back().size();
  return lay;
}

inline std::size_t kidx(std::size_t l, std::size_t o, std::size_t i, std::size_t j) {
  return (o * kCh[l] + i) * kK + j;
}

}  // namespace

const TcnModel::Layout& TcnModel::layout() {
  static const Layout lay = make_layout();
  return lay;
}

TcnModel::TcnModel() : params_(layout().total, 0.0) {}

TcnModel TcnModel::random(std::uint64_t seed) {
  TcnModel m;
  Rng rng(seed);
  const auto& lay = layout();
  auto fill = [&](std::size_t offset, std::size_t count, double bound) {
    for (std::size_t i = 0; i < count; ++i) {
      m.params_[offset + i] = (2.0 * rng.uniform() - 1.0) * bound;
    }
  };
  for (std::size_t l = 0; l < kLayers; ++l) {
    const double fan_in = static_cast<double>(kCh[l] * kK);
    fill(lay.kernel[l], kCh[l + 1] * kCh[l] * kK, std::sqrt(6.0 / fan_in));
    fill(lay.bias[l], kCh[l + 1], 0.05);
  }
  fill(lay.fc1_w, kHidden * kCh[kLayers], std::sqrt(6.0 / static_cast<double>(kCh[kLayers])));
  fill(lay.fc1_b, kHidden, 0.05);
  fill(lay.fc2_w, kHidden, std::sqrt(6.0 / static_cast<double>(kHidden + 1)));
  fill(lay.fc2_b, 1, 0.05);
  return m;
}

const std::vector<ParamBlock>& TcnModel::blocks() const { return tcn_blocks(); }

double& TcnModel::kernel(std::size_t layer, std::size_t out, std::size_t in, std::size_t tap) {
  return params_[layout().kernel[layer] + kidx(layer, out, in, tap)];
}
double TcnModel::kernel(std::size_t layer, std::size_t out, std::size_t in,
                        std::size_t tap) const {
  return params_[layout().kernel[layer] + kidx(layer, out, in, tap)];
}
double& TcnModel::conv_bias(std::size_t layer, std::size_t out) {
  return params_[layout().bias[layer] + out];
}
double TcnModel::conv_bias(std::size_t layer, std::size_t out) const {
  return params_[layout().bias[layer] + out];
}
double& TcnModel::fc1_weight(std::size_t out, std::size_t in) {
  return params_[layout().fc1_w + out * kCh[kLayers] + in];
}
double& TcnModel::fc1_bias(std::size_t out) { return params_[layout().fc1_b + out]; }
double& TcnModel::fc2_weight(std::size_t in) { return params_[layout().fc2_w + in]; }
double& TcnModel::fc2_bias() { return params_[layout().fc2_b]; }

void TcnModel::conv_point(std::size_t layer,
                          const std::array<const double*, TcnArch::kKernel>& taps,
                          double* z_out) const {
  const double* kern = params_.data() + layout().kernel[layer];
  const double* bias = params_.data() + layout().bias[layer];
  const std::size_t cin = kCh[layer];
  for (std::size_t o = 0; o < kCh[layer + 1]; ++o) {
    double acc = bias[o];
    const double* row = kern + o * cin * kK;
    for (std::size_t j = 0; j < kK; ++j) {
      const double* x = taps[j];
      if (!x) continue;
      for (std::size_t i = 0; i < cin; ++i) acc += row[i * kK + j] * x[i];
    }
    z_out[o] = acc;
  }
}

double TcnModel::head_logit(const double* features, double* hidden) const {
  const auto& lay = layout();
  const double* w1 = params_.data() + lay.fc1_w;
  const double* b1 = params_.data() + lay.fc1_b;
  const double* w2 = params_.data() + lay.fc2_w;
  double logit = params_[lay.fc2_b];
  for (std::size_t h = 0; h < kHidden; ++h) {
    double acc = b1[h];
    for (std::size_t c = 0; c < kCh[kLayers]; ++c) acc += w1[h * kCh[kLayers] + c] * features[c];
    hidden[h] = acc;
  }
  for (std::size_t h = 0; h < kHidden; ++h) {
    logit += w2[h] * std::max(hidden[h], 0.0);
  }
  return logit;
}

struct TcnModel::Tape {
  std::size_t length = 0;
  Window window;
  // [slot * channels + c]
  std::array<std::vector<double>, kLayers> z, a, mask;
  std::array<double, kHidden> hidden_z{};
  double yhat = 0.5;

  const double* input_at(std::size_t lag) const {
    return lag < length ? window[length - 1 - lag].data() : nullptr;
  }
  const double* layer_at(std::size_t l, std::size_t lag) const {
    if (lag >= length) return nullptr;
    return a[l].data() + static_cast<std::size_t>(cone().slot[l][lag]) * kCh[l + 1];
  }
};

void TcnModel::forward(Window window, const ForwardOptions& opts, Tape& tape) const {
  detail::check_window(window, TcnArch::kWindow);
  tape.window = window;
  tape.length = window.size();
  const bool train = opts.mode == Mode::Train;
  const auto& cn = cone();
  for (std::size_t l = 0; l < kLayers; ++l) {
    const std::size_t c = kCh[l + 1];
    const std::size_t slots = cn.lags[l].size();
    tape.z[l].assign(slots * c, 0.0);
    tape.a[l].assign(slots * c, 0.0);
    tape.mask[l].assign(slots * c, 1.0);
    for (std::size_t s = 0; s < slots; ++s) {
      const std::size_t lag = cn.lags[l][s];
      if (lag >= tape.length) continue;  // padding
      std::array<const double*, kK> taps{};
      for (std::size_t j = 0; j < kK; ++j) {
        const std::size_t src = lag + (kK - 1 - j) * kDil[l];
        taps[j] = l == 0 ? tape.input_at(src) : tape.layer_at(l - 1, src);
      }
      double* z = tape.z[l].data() + s * c;
      conv_point(l, taps, z);
      for (std::size_t o = 0; o < c; ++o) {
        const double m = train ? detail::dropout_factor(opts.mask_seed, l, lag, o, opts.dropout_p) : 1.0;
        tape.mask[l][s * c + o] = m;
        tape.a[l][s * c + o] = std::max(z[o], 0.0) * m;
      }
    }
  }
  const double logit = head_logit(tape.layer_at(kLayers - 1, 0), tape.hidden_z.data());
  tape.yhat = detail::sigmoid(logit);
}

double TcnModel::predict(Window window, const ForwardOptions& opts) const {
  Tape tape;
  forward(window, opts, tape);
  return tape.yhat;
}

double TcnModel::accumulate_gradient(Window window, double label, double scale,
                                     const ForwardOptions& opts,
                                     std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ShapeError("gradient buffer has wrong size");
  Tape tape;
  forward(window, opts, tape);
  const double dlogit = scale * detail::bce_logit_gradient(tape.yhat, label);
  if (dlogit == 0.0) return tape.yhat;

  const auto& lay = layout();
  const auto& cn = cone();
  const std::size_t clast = kCh[kLayers];
  const double* a_last = tape.layer_at(kLayers - 1, 0);

  grad[lay.fc2_b] += dlogit;
  std::array<double, kHidden> dh{};
  for (std::size_t h = 0; h < kHidden; ++h) {
    const double hz = tape.hidden_z[h];
    grad[lay.fc2_w + h] += dlogit * std::max(hz, 0.0);
    dh[h] = hz > 0.0 ? dlogit * params_[lay.fc2_w + h] : 0.0;
  }

  // da[l] matches tape.a[l] in layout
  std::array<std::vector<double>, kLayers> da;
  for (std::size_t l = 0; l < kLayers; ++l) da[l].assign(tape.a[l].size(), 0.0);
  for (std::size_t h = 0; h < kHidden; ++h) {
    if (dh[h] == 0.0) continue;
    grad[lay.fc1_b + h] += dh[h];
    for (std::size_t c = 0; c < clast; ++c) {
      grad[lay.fc1_w + h * clast + c] += dh[h] * a_last[c];
      da[kLayers - 1][c] += params_[lay.fc1_w + h * clast + c] * dh[h];
    }
  }

  for (std::size_t l = kLayers; l-- > 0;) {
    const std::size_t cout = kCh[l + 1];
    const std::size_t cin = kCh[l];
    const double* kern = params_.data() + lay.kernel[l];
    double* gkern = grad.data() + lay.kernel[l];
    double* gbias = grad.data() + lay.bias[l];
    for (std::size_t s = 0; s < cn.lags[l].size(); ++s) {
      const std::size_t lag = cn.lags[l][s];
      if (lag >= tape.length) continue;
      std::array<const double*, kK> in{};
      std::array<double*, kK> din{};
      for (std::size_t j = 0; j < kK; ++j) {
        const std::size_t src = lag + (kK - 1 - j) * kDil[l];
        if (src >= tape.length) continue;
        if (l == 0) {
          in[j] = tape.input_at(src);
        } else {
          const auto slot = static_cast<std::size_t>(cn.slot[l - 1][src]);
          in[j] = tape.a[l - 1].data() + slot * cin;
          din[j] = da[l - 1].data() + slot * cin;
        }
      }
      for (std::size_t o = 0; o < cout; ++o) {
        const std::size_t idx = s * cout + o;
        if (tape.z[l][idx] <= 0.0) continue;
        const double dz = da[l][idx] * tape.mask[l][idx];
        if (dz == 0.0) continue;
        gbias[o] += dz;
        for (std::size_t j = 0; j < kK; ++j) {
          if (!in[j]) continue;
          for (std::size_t i = 0; i < cin; ++i) {
            gkern[kidx(l, o, i, j)] += dz * in[j][i];
            if (din[j]) din[j][i] += kern[kidx(l, o, i, j)] * dz;
          }
        }
      }
    }
  }
  return tape.yhat;
}

std::uint64_t TcnModel::activation_pattern(Window window, const ForwardOptions& opts) const {
  Tape tape;
  forward(window, opts, tape);
  std::uint64_t h = 0x9E3779B97F4A7C15ULL;
  for (std::size_t l = 0; l < kLayers; ++l) {
    for (double z : tape.z[l]) h = mix_seed(h, z > 0.0);
  }
  for (double z : tape.hidden_z) h = mix_seed(h, z > 0.0);
  return h;
}

std::unique_ptr<ReuseModel> TcnModel::clone() const { return std::make_unique<TcnModel>(*this); }

std::vector<std::vector<double>> TcnModel::layer_outputs(Window window, std::size_t layer,
                                                         const ForwardOptions& opts) const {
  detail::check_window(window, TcnArch::kWindow);
  if (layer >= kLayers) throw ShapeError("no such conv layer");
  const std::size_t n = window.size();
  const bool train = opts.mode == Mode::Train;
  std::vector<std::vector<double>> prev(n);
  for (std::size_t p = 0; p < n; ++p) prev[p].assign(window[p].begin(), window[p].end());
  for (std::size_t l = 0; l <= layer; ++l) {
    std::vector<std::vector<double>> cur(n, std::vector<double>(kCh[l + 1], 0.0));
    for (std::size_t p = 0; p < n; ++p) {
      std::array<const double*, kK> taps{};
      for (std::size_t j = 0; j < kK; ++j) {
        const std::size_t back = (kK - 1 - j) * kDil[l];
        if (back <= p) taps[j] = prev[p - back].data();
      }
      conv_point(l, taps, cur[p].data());
      for (std::size_t o = 0; o < kCh[l + 1]; ++o) {
        const double m =
            train ? detail::dropout_factor(opts.mask_seed, l, n - 1 - p, o, opts.dropout_p) : 1.0;
        cur[p][o] = std::max(cur[p][o], 0.0) * m;
      }
    }
    prev = std::move(cur);
  }
  return prev;
}

namespace {

// Eval-mode streaming evaluation: each pushed access computes one new
// position per layer from ring buffers of earlier positions.
class TcnStream final : public PredictionStream {
 public:
  explicit TcnStream(const TcnModel& model) : model_(model) {}

  void push(const FeatureVector& x) override {
    Position out;
    compute(x, out);
    const std::size_t r = count_ % kRing;
    inputs_[r] = x;
    for (std::size_t l = 0; l < kLayers; ++l) layers_[l][r] = out[l];
    ++count_;
    recent_.push_back(x);
    if (recent_.size() > TcnArch::kWindow) recent_.pop_front();
  }

  double predict_last() const override {
    if (count_ == 0) return 0.5;
    return head(layers_[kLayers - 1][(count_ - 1) % kRing].data());
  }

  double peek(const FeatureVector& x) const override {
    Position out;
    compute(x, out);
    return head(out[kLayers - 1].data());
  }

  void refresh() override {
    std::deque<FeatureVector> replay;
    replay.swap(recent_);
    count_ = 0;
    for (const auto& x : replay) push(x);
  }

  std::vector<FeatureVector> context() const override {
    const std::size_t n = std::min(recent_.size(), kRf);
    return {recent_.end() - static_cast<std::ptrdiff_t>(n), recent_.end()};
  }

 private:
  static constexpr std::size_t kRing = 16;
  static_assert(kRing > (kK - 1) * 4);
  using Position = std::array<std::array<double, kMaxCh>, kLayers>;

  // Layer outputs at position count_ given input x there.
  void compute(const FeatureVector& x, Position& out) const {
    for (std::size_t l = 0; l < kLayers; ++l) {
      std::array<const double*, kK> taps{};
      for (std::size_t j = 0; j < kK; ++j) {
        const std::size_t back = (kK - 1 - j) * kDil[l];
        if (back == 0) {
          taps[j] = l == 0 ? x.data() : out[l - 1].data();
        } else if (back <= count_) {
          const std::size_t r = (count_ - back) % kRing;
          taps[j] = l == 0 ? inputs_[r].data() : layers_[l - 1][r].data();
        }
      }
      std::array<double, kMaxCh> z{};
      model_.conv_point(l, taps, z.data());
      for (std::size_t o = 0; o < kCh[l + 1]; ++o) out[l][o] = std::max(z[o], 0.0) * 1.0;
    }
  }

  double head(const double* features) const {
    std::array<double, kHidden> hidden{};
    return detail::sigmoid(model_.head_logit(features, hidden.data()));
  }

  const TcnModel& model_;
  std::size_t count_ = 0;
  std::array<FeatureVector, kRing> inputs_{};
  std::array<std::array<std::array<double, kMaxCh>, kRing>, kLayers> layers_{};
  std::deque<FeatureVector> recent_;
};

}  // namespace

std::unique_ptr<PredictionStream> TcnModel::open_stream() const {
  return std::make_unique<TcnStream>(*this);
}

}  // namespace acpc
