#pragma once

// 1D-F-CNN layers and the forward-pass engine. Each weighted layer runs under
// its own PrecisionMode:
//
//   FP32  plain float multiply-accumulate.
//   BF16  operands narrowed to BF16, products widened and accumulated in
//         FP32, output narrowed to BF16 once per element.
//   INT8  inputs quantized with PACT (unsigned n-bit codes), weights with
//         PwQ (unsigned n-bit codes). Both are recentred by 2^(n-1) to fit
//         the signed 8-bit MAC; the zero-point terms are restored in
//         integers and the sum is rescaled once per output element.
//   FXP8  inputs as fxp8(pact(x)/alpha), weights as fxp8(w/k); signed MAC
//         into a 32-bit accumulator, rescaled once per output element.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "s8uv/error.hpp"
#include "s8uv/numerics.hpp"
#include "s8uv/quant.hpp"
#include "s8uv/rng.hpp"
#include "s8uv/tensor.hpp"

namespace s8uv::nn {

using numerics::NumericWarnings;
using numerics::PrecisionKind;
using numerics::PrecisionMode;

enum class Padding : std::uint8_t { None = 0, Same = 1 };

struct Conv1D {
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  Padding padding = Padding::None;
  friend bool operator==(const Conv1D&, const Conv1D&) = default;
};
struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};
struct MaxPool1D {
  std::size_t window = 2;
  std::size_t stride = 2;
  friend bool operator==(const MaxPool1D&, const MaxPool1D&) = default;
};
struct Dropout {
  float rate = 0.2f;
  friend bool operator==(const Dropout&, const Dropout&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};
struct Dense {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  friend bool operator==(const Dense&, const Dense&) = default;
};
struct Softmax {
  friend bool operator==(const Softmax&, const Softmax&) = default;
};

/// Alternative order doubles as the on-disk layer-kind tag.
using LayerSpec = std::variant<Conv1D, ReLU, MaxPool1D, Dropout, Flatten, Dense, Softmax>;

inline std::string layer_name(const LayerSpec& s) {
  static constexpr const char* names[] = {"conv1d", "relu", "maxpool", "dropout", "flatten", "dense", "softmax"};
  return names[s.index()];
}

struct Layer {
  LayerSpec spec;
  std::vector<float> weights;  // conv: [out][in][kernel], dense: [out][in]
  std::vector<float> bias;     // [out]
  PrecisionMode precision = PrecisionMode::fp32();
  quant::WeightQuantConfig weight_quant{};
  quant::PactParams act_quant{};

  bool has_weights() const noexcept {
    return std::holds_alternative<Conv1D>(spec) || std::holds_alternative<Dense>(spec);
  }

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct ModelSpec {
  Shape input{1, 1};
  std::vector<Layer> layers;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline Layer conv_layer(std::size_t in_ch, std::size_t out_ch, std::vector<float> w, std::vector<float> b,
                        Padding padding = Padding::None) {
  Layer l;
  l.spec = Conv1D{in_ch, out_ch, 3, 1, padding};
  l.weights = std::move(w);
  l.bias = std::move(b);
  return l;
}

inline Layer dense_layer(std::size_t in_dim, std::size_t out_dim, std::vector<float> w, std::vector<float> b) {
  Layer l;
  l.spec = Dense{in_dim, out_dim};
  l.weights = std::move(w);
  l.bias = std::move(b);
  return l;
}

inline Layer plain_layer(LayerSpec spec) {
  Layer l;
  l.spec = spec;
  return l;
}

// ---------------------------------------------------------------------------
// Shape algebra

inline std::size_t expected_weight_count(const LayerSpec& s) {
  if (auto* c = std::get_if<Conv1D>(&s)) return c->out_ch * c->in_ch * c->kernel;
  if (auto* d = std::get_if<Dense>(&s)) return d->out_dim * d->in_dim;
  return 0;
}

inline std::size_t expected_bias_count(const LayerSpec& s) {
  if (auto* c = std::get_if<Conv1D>(&s)) return c->out_ch;
  if (auto* d = std::get_if<Dense>(&s)) return d->out_dim;
  return 0;
}

inline Shape output_shape(const LayerSpec& spec, Shape in) {
  return std::visit(
      [&](const auto& s) -> Shape {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv1D>) {
          if (s.kernel != 3 || s.stride != 1) fail(ErrorCode::ShapeMismatch, "conv1d supports kernel 3, stride 1 only");
          if (s.in_ch == 0 || s.out_ch == 0) fail(ErrorCode::ShapeMismatch, "conv1d channel counts must be positive");
          if (in.channels != s.in_ch)
            fail(ErrorCode::ShapeMismatch, "conv1d expects " + std::to_string(s.in_ch) + " input channels, got " +
                                               std::to_string(in.channels));
          if (s.padding == Padding::Same) return {s.out_ch, in.length};
          if (in.length < s.kernel)
            fail(ErrorCode::LengthTooShort, "conv1d needs length >= 3, got " + std::to_string(in.length));
          return {s.out_ch, in.length - s.kernel + 1};
        } else if constexpr (std::is_same_v<T, MaxPool1D>) {
          if (s.window != 2 || s.stride != 2) fail(ErrorCode::ShapeMismatch, "maxpool supports window 2, stride 2 only");
          if (in.length < 2) fail(ErrorCode::LengthTooShort, "maxpool needs length >= 2");
          return {in.channels, in.length / 2};
        } else if constexpr (std::is_same_v<T, Dropout>) {
          if (!(s.rate >= 0.0f && s.rate < 1.0f)) fail(ErrorCode::ShapeMismatch, "dropout rate must be in [0,1)");
          return in;
        } else if constexpr (std::is_same_v<T, Flatten>) {
          return {1, in.size()};
        } else if constexpr (std::is_same_v<T, Dense>) {
          if (in.channels != 1 || in.length != s.in_dim)
            fail(ErrorCode::ShapeMismatch,
                 "dense expects 1x" + std::to_string(s.in_dim) + " input, got " + to_string(in));
          if (s.out_dim == 0) fail(ErrorCode::ShapeMismatch, "dense output size must be positive");
          return {1, s.out_dim};
        } else {
          return in;
        }
      },
      spec);
}

/// Input shape followed by every layer's output shape. Also checks that
/// weight and bias blobs match their layer.
inline std::vector<Shape> infer_shapes(const ModelSpec& m) {
  std::vector<Shape> shapes{m.input};
  if (m.input.channels == 0 || m.input.length == 0) fail(ErrorCode::InvalidChain, "model input shape must be positive");
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const Layer& l = m.layers[i];
    try {
      shapes.push_back(output_shape(l.spec, shapes.back()));
    } catch (const Error& e) {
      fail(ErrorCode::InvalidChain, "layer " + std::to_string(i) + " (" + layer_name(l.spec) + "): " + e.what());
    }
    if (l.weights.size() != expected_weight_count(l.spec) || l.bias.size() != expected_bias_count(l.spec))
      fail(ErrorCode::InvalidChain, "layer " + std::to_string(i) + " (" + layer_name(l.spec) + "): parameter count mismatch");
  }
  return shapes;
}

inline std::vector<int> weighted_layer_ids(const ModelSpec& m) {
  std::vector<int> ids;
  for (std::size_t i = 0; i < m.layers.size(); ++i)
    if (m.layers[i].has_weights()) ids.push_back(static_cast<int>(i));
  return ids;
}

// ---------------------------------------------------------------------------
// Multiply-accumulate datapath shared by conv and dense

namespace detail {

class Datapath {
 public:
  Datapath(const PrecisionMode& mode, std::span<const float> weights, std::span<const float> input,
           const quant::WeightQuantConfig& wq, const quant::PactParams& pact, NumericWarnings* warnings)
      : kind_(mode.kind()) {
    switch (kind_) {
      case PrecisionKind::FP32:
        wf_.assign(weights.begin(), weights.end());
        xf_.assign(input.begin(), input.end());
        break;
      case PrecisionKind::BF16:
        wf_.resize(weights.size());
        xf_.resize(input.size());
        std::transform(weights.begin(), weights.end(), wf_.begin(), numerics::bf16_round);
        std::transform(input.begin(), input.end(), xf_.begin(), numerics::bf16_round);
        break;
      case PrecisionKind::INT8: {
        quant::validate(wq);
        quant::validate(pact);
        if (wq.n != 8 || pact.n != 8) fail(ErrorCode::InvalidBitWidth, "INT8 mode needs 8-bit weight and activation codes");
        const auto codes = quant::quantize_weights(weights, wq);
        wi_.resize(codes.size());
        std::transform(codes.begin(), codes.end(), wi_.begin(),
                       [](std::uint32_t c) { return static_cast<std::int8_t>(static_cast<int>(c) - kZeroPoint); });
        xi_.resize(input.size());
        std::transform(input.begin(), input.end(), xi_.begin(), [&](float v) {
          return static_cast<std::int8_t>(static_cast<int>(quant::pact_quantize(v, pact, warnings).code) - kZeroPoint);
        });
        const double act_step = pact.step();
        scale_aw_ = act_step * wq.k * wq.step();
        scale_a_ = act_step * wq.k * wq.w_lo;
        break;
      }
      case PrecisionKind::FXP8: {
        quant::validate(wq);
        quant::validate(pact);
        const auto fmt = mode.fxp_format();
        wi_.resize(weights.size());
        std::transform(weights.begin(), weights.end(), wi_.begin(), [&](float v) {
          return numerics::fxp8_encode(v / wq.k, fmt, warnings);
        });
        xi_.resize(input.size());
        std::transform(input.begin(), input.end(), xi_.begin(), [&](float v) {
          if (std::isnan(v)) {
            if (warnings) ++warnings->nonfinite_encoded;
            return std::int8_t{0};
          }
          return numerics::fxp8_encode(quant::pact_clip(v, pact.alpha) / pact.alpha, fmt);
        });
        scale_aw_ = static_cast<double>(pact.alpha) * wq.k * std::ldexp(1.0, -2 * fmt.frac_bits);
        break;
      }
    }
  }

  /// One output element: sum over r < taps of W[row*taps + r] * X[index(r)], plus bias.
  template <class Index>
  float neuron(std::size_t row, std::size_t taps, Index&& index, float bias) const {
    const std::size_t base = row * taps;
    switch (kind_) {
      case PrecisionKind::FP32: {
        float acc = 0.0f;
        for (std::size_t r = 0; r < taps; ++r) acc += wf_[base + r] * xf_[index(r)];
        return acc + bias;
      }
      case PrecisionKind::BF16: {
        float acc = 0.0f;
        for (std::size_t r = 0; r < taps; ++r)
          acc = numerics::mac_bf16(acc, numerics::fp32_to_bf16(wf_[base + r]), numerics::fp32_to_bf16(xf_[index(r)]));
        return numerics::bf16_round(acc + numerics::bf16_round(bias));
      }
      case PrecisionKind::INT8: {
        std::int32_t acc = 0;
        std::int64_t sum_a = 0;
        std::int64_t sum_w = 0;
        for (std::size_t r = 0; r < taps; ++r) {
          const std::int8_t a = xi_[index(r)];
          const std::int8_t w = wi_[base + r];
          acc = numerics::mac_int(acc, a, w);
          sum_a += a;
          sum_w += w;
        }
        const auto n = static_cast<std::int64_t>(taps);
        const std::int64_t sum_aw = acc + kZeroPoint * sum_a + kZeroPoint * sum_w + n * kZeroPoint * kZeroPoint;
        const std::int64_t sum_codes_a = sum_a + n * kZeroPoint;
        return static_cast<float>(scale_aw_ * static_cast<double>(sum_aw) + scale_a_ * static_cast<double>(sum_codes_a) +
                                  bias);
      }
      case PrecisionKind::FXP8: {
        std::int32_t acc = 0;
        for (std::size_t r = 0; r < taps; ++r) acc = numerics::mac_int(acc, xi_[index(r)], wi_[base + r]);
        return static_cast<float>(scale_aw_ * static_cast<double>(acc) + bias);
      }
    }
    return 0.0f;
  }

  static constexpr std::int64_t kZeroPoint = 128;

 private:
  PrecisionKind kind_;
  std::vector<float> wf_, xf_;
  std::vector<std::int8_t> wi_, xi_;
  double scale_aw_ = 0.0;
  double scale_a_ = 0.0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Layer forward passes

struct QuantParams {
  quant::WeightQuantConfig weight{};
  quant::PactParams activation{};
};

inline Tensor1D conv1d_forward(const Tensor1D& x, const Conv1D& spec, std::span<const float> w,
                               std::span<const float> b, const PrecisionMode& mode, const QuantParams& q = {},
                               NumericWarnings* warnings = nullptr) {
  const Shape out_shape = output_shape(spec, x.shape());
  if (w.size() != spec.out_ch * spec.in_ch * spec.kernel || b.size() != spec.out_ch)
    fail(ErrorCode::ShapeMismatch, "conv1d parameter sizes do not match the layer");

  const Tensor1D* src = &x;
  Tensor1D padded;
  if (spec.padding == Padding::Same) {
    padded = Tensor1D(x.channels(), x.length() + 2);
    for (std::size_t c = 0; c < x.channels(); ++c)
      std::copy(x.channel(c).begin(), x.channel(c).end(), padded.channel(c).begin() + 1);
    src = &padded;
  }

  const detail::Datapath dp(mode, w, src->data(), q.weight, q.activation, warnings);
  const std::size_t in_len = src->length();
  const std::size_t k = spec.kernel;
  Tensor1D y(out_shape.channels, out_shape.length);
  for (std::size_t o = 0; o < spec.out_ch; ++o) {
    for (std::size_t t = 0; t < out_shape.length; ++t) {
      y.at(o, t) = dp.neuron(o, spec.in_ch * k, [&](std::size_t r) { return (r / k) * in_len + t + r % k; }, b[o]);
    }
  }
  return y;
}

inline Tensor1D dense_forward(const Tensor1D& x, const Dense& spec, std::span<const float> w, std::span<const float> b,
                              const PrecisionMode& mode, const QuantParams& q = {},
                              NumericWarnings* warnings = nullptr) {
  const Shape out_shape = output_shape(spec, x.shape());
  if (w.size() != spec.out_dim * spec.in_dim || b.size() != spec.out_dim)
    fail(ErrorCode::ShapeMismatch, "dense parameter sizes do not match the layer");
  const detail::Datapath dp(mode, w, x.data(), q.weight, q.activation, warnings);
  Tensor1D y(1, out_shape.length);
  for (std::size_t j = 0; j < spec.out_dim; ++j)
    y.at(0, j) = dp.neuron(j, spec.in_dim, [](std::size_t r) { return r; }, b[j]);
  return y;
}

inline Tensor1D maxpool_forward(const Tensor1D& x) {
  const Shape s = output_shape(MaxPool1D{}, x.shape());
  Tensor1D y(s.channels, s.length);
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t i = 0; i < s.length; ++i) y.at(c, i) = std::max(x.at(c, 2 * i), x.at(c, 2 * i + 1));
  return y;
}

inline Tensor1D relu_forward(Tensor1D x) {
  for (float& v : x.data()) v = v > 0.0f ? v : (std::isnan(v) ? v : 0.0f);
  return x;
}

/// Inference-time dropout is the identity: training used inverted dropout.
inline Tensor1D dropout_inference(Tensor1D x, float rate) {
  if (!(rate >= 0.0f && rate < 1.0f)) fail(ErrorCode::ShapeMismatch, "dropout rate must be in [0,1)");
  return x;
}

inline Tensor1D flatten(Tensor1D x) {
  const std::size_t n = x.size();
  return Tensor1D(1, n, std::move(x.data()));
}

struct SoftmaxOptions {
  bool cordic = false;
  int cordic_iters = 16;
};

inline std::vector<float> softmax_forward(std::span<const float> logits, const SoftmaxOptions& opt = {}) {
  if (logits.empty()) return {};
  double mx = logits[0];
  for (float v : logits) mx = std::max(mx, static_cast<double>(v));
  std::vector<double> e(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = static_cast<double>(logits[i]) - mx;
    e[i] = opt.cordic ? numerics::cordic_exp(z, opt.cordic_iters) : std::exp(z);
    sum += e[i];
  }
  std::vector<float> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(e[i] / sum);
  return out;
}

// ---------------------------------------------------------------------------
// Whole-model forward

struct ForwardOptions {
  bool keep_snapshots = true;
  SoftmaxOptions softmax{};
};

struct ForwardResult {
  Tensor1D output;
  std::vector<Tensor1D> snapshots;  // output of every layer, in order
  NumericWarnings warnings;
};

inline Tensor1D layer_forward(const Layer& l, const Tensor1D& x, const ForwardOptions& opt,
                              NumericWarnings* warnings) {
  const QuantParams q{l.weight_quant, l.act_quant};
  return std::visit(
      [&](const auto& s) -> Tensor1D {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv1D>) {
          return conv1d_forward(x, s, l.weights, l.bias, l.precision, q, warnings);
        } else if constexpr (std::is_same_v<T, Dense>) {
          return dense_forward(x, s, l.weights, l.bias, l.precision, q, warnings);
        } else if constexpr (std::is_same_v<T, ReLU>) {
          return relu_forward(x);
        } else if constexpr (std::is_same_v<T, MaxPool1D>) {
          output_shape(s, x.shape());
          return maxpool_forward(x);
        } else if constexpr (std::is_same_v<T, Dropout>) {
          return dropout_inference(x, s.rate);
        } else if constexpr (std::is_same_v<T, Flatten>) {
          return flatten(x);
        } else {
          return Tensor1D(x.channels(), x.length(), softmax_forward(x.data(), opt.softmax));
        }
      },
      l.spec);
}

inline ForwardResult model_forward(const ModelSpec& m, const Tensor1D& x, const ForwardOptions& opt = {}) {
  if (x.shape() != m.input)
    fail(ErrorCode::ShapeMismatch, "model expects input " + to_string(m.input) + ", got " + to_string(x.shape()));
  ForwardResult res;
  Tensor1D cur = x;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    try {
      cur = layer_forward(m.layers[i], cur, opt, &res.warnings);
    } catch (const Error& e) {
      fail(e.code(), "layer " + std::to_string(i) + " (" + layer_name(m.layers[i].spec) + "): " + e.detail());
    }
    if (opt.keep_snapshots) res.snapshots.push_back(cur);
  }
  res.output = std::move(cur);
  return res;
}

inline std::size_t argmax(std::span<const float> v) {
  return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

// ---------------------------------------------------------------------------
// Precision and quantizer setup

inline void set_all_precision(ModelSpec& m, const PrecisionMode& mode) {
  for (auto& l : m.layers)
    if (l.has_weights()) l.precision = mode;
}

inline void apply_assignment(ModelSpec& m, const quant::PrecisionAssignment& a) {
  const auto ids = weighted_layer_ids(m);
  for (int id : ids)
    if (!a.modes.count(id))
      fail(ErrorCode::InvariantViolation, "precision assignment misses weighted layer " + std::to_string(id));
  for (const auto& [id, mode] : a.modes) {
    if (id < 0 || static_cast<std::size_t>(id) >= m.layers.size() || !m.layers[id].has_weights())
      fail(ErrorCode::InvariantViolation, "precision assignment names non-weighted layer " + std::to_string(id));
    m.layers[id].precision = mode;
  }
}

struct CalibrationOptions {
  int bits = 8;
  double weight_percentile = 0.999;
  double activation_percentile = 1.0;
};

/// Fills every weighted layer's PwQ config from its weights and its PACT
/// alpha from the FP32 activations the layer sees on `inputs`.
inline void calibrate_quantization(ModelSpec& m, std::span<const Tensor1D> inputs, const CalibrationOptions& opt = {}) {
  ModelSpec ref = m;
  set_all_precision(ref, PrecisionMode::fp32());
  const auto ids = weighted_layer_ids(m);
  std::vector<std::vector<float>> seen(m.layers.size());
  for (const auto& x : inputs) {
    const auto res = model_forward(ref, x);
    for (int id : ids) {
      const Tensor1D& in = id == 0 ? x : res.snapshots[static_cast<std::size_t>(id) - 1];
      for (float v : in.data())
        if (v > 0.0f && std::isfinite(v)) seen[id].push_back(v);
    }
  }
  for (int id : ids) {
    Layer& l = m.layers[id];
    l.weight_quant = quant::make_weight_config(l.weights, opt.bits, opt.weight_percentile);
    float alpha = 1.0f;
    if (!seen[id].empty()) {
      auto& v = seen[id];
      std::sort(v.begin(), v.end());
      const auto rank = static_cast<std::size_t>(std::ceil(opt.activation_percentile * static_cast<double>(v.size())));
      alpha = v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
    }
    l.act_quant = quant::PactParams{alpha, opt.bits};
  }
}

// ---------------------------------------------------------------------------
// Architectures

struct CnnConfig {
  std::size_t input_length = 1038;
  std::vector<std::size_t> conv_channels{64, 128, 274};
  std::size_t hidden = 64;
  std::size_t classes = 2;
  float dropout = 0.2f;
};

/// Three conv blocks (conv3 -> ReLU -> maxpool2 -> dropout), flatten,
/// dense -> ReLU -> dense -> softmax. Weights drawn uniform in
/// +-sqrt(6/fan_in) from `seed`.
inline ModelSpec make_cnn(const CnnConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  auto draw = [&](std::size_t count, std::size_t fan_in) {
    std::vector<float> v(count);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
    return v;
  };
  ModelSpec m;
  m.input = {1, cfg.input_length};
  std::size_t ch = 1;
  for (std::size_t out : cfg.conv_channels) {
    m.layers.push_back(conv_layer(ch, out, draw(out * ch * 3, ch * 3), std::vector<float>(out, 0.0f)));
    m.layers.push_back(plain_layer(ReLU{}));
    m.layers.push_back(plain_layer(MaxPool1D{}));
    m.layers.push_back(plain_layer(Dropout{cfg.dropout}));
    ch = out;
  }
  m.layers.push_back(plain_layer(Flatten{}));
  Shape flat = infer_shapes(m).back();
  m.layers.push_back(dense_layer(flat.length, cfg.hidden, draw(cfg.hidden * flat.length, flat.length),
                                 std::vector<float>(cfg.hidden, 0.0f)));
  m.layers.push_back(plain_layer(ReLU{}));
  m.layers.push_back(dense_layer(cfg.hidden, cfg.classes, draw(cfg.classes * cfg.hidden, cfg.hidden),
                                 std::vector<float>(cfg.classes, 0.0f)));
  m.layers.push_back(plain_layer(Softmax{}));
  infer_shapes(m);
  return m;
}

}  // namespace s8uv::nn
