#pragma once

// Post-training quantization: piecewise weight quantization (scale, clip,
// round, reconstruct), PACT activation quantization, per-layer sensitivity
// scoring and the precision assignment policy built on it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s8uv/error.hpp"
#include "s8uv/numerics.hpp"

namespace s8uv::quant {

using numerics::PrecisionKind;
using numerics::PrecisionMode;
using numerics::round_half_even;

inline double levels(int n) noexcept { return std::ldexp(1.0, n) - 1.0; }

struct WeightQuantConfig {
  int n = 8;
  float w_lo = -1.0f;
  float w_hi = 1.0f;
  float k = 1.0f;

  std::uint32_t max_code() const noexcept { return static_cast<std::uint32_t>(levels(n)); }
  /// Reconstruction step (W_h - W_l) / (2^n - 1).
  double step() const noexcept { return (static_cast<double>(w_hi) - w_lo) / levels(n); }

  friend bool operator==(const WeightQuantConfig&, const WeightQuantConfig&) = default;
};

inline void validate(const WeightQuantConfig& cfg) {
  if (cfg.n != 4 && cfg.n != 8 && cfg.n != 16)
    fail(ErrorCode::InvalidBitWidth, "weight bit width must be 4, 8 or 16, got " + std::to_string(cfg.n));
  if (!(cfg.k > 0.0f) || !std::isfinite(cfg.k)) fail(ErrorCode::InvalidScale, "scale k must be > 0");
  if (!(cfg.w_lo < cfg.w_hi)) fail(ErrorCode::InvalidClipRange, "clip range requires w_lo < w_hi");
}

struct PactParams {
  float alpha = 1.0f;
  int n = 8;

  std::uint32_t max_code() const noexcept { return static_cast<std::uint32_t>(levels(n)); }
  double step() const noexcept { return static_cast<double>(alpha) / levels(n); }

  friend bool operator==(const PactParams&, const PactParams&) = default;
};

inline void validate(const PactParams& p) {
  if (!(p.alpha > 0.0f) || !std::isfinite(p.alpha)) fail(ErrorCode::InvalidAlpha, "PACT alpha must be > 0");
  if (p.n < 2 || p.n > 16) fail(ErrorCode::InvalidBitWidth, "PACT bit width must be in [2,16]");
}

// ---------------------------------------------------------------------------
// Weights

/// k = mean(|w|) * (2^n - 1) / 2^(n-1)
inline float weight_scale(std::span<const float> w, int n) {
  if (w.empty()) fail(ErrorCode::EmptyTensor, "weight_scale on an empty tensor");
  double sum = 0.0;
  for (float v : w) sum += std::fabs(static_cast<double>(v));
  const double mean = sum / static_cast<double>(w.size());
  return static_cast<float>(mean * levels(n) / std::ldexp(1.0, n - 1));
}

inline std::uint32_t quantize_weight(float w, const WeightQuantConfig& cfg) {
  const double v = static_cast<double>(w) / cfg.k;
  if (std::isnan(v)) return 0;
  const double c = std::clamp(v, static_cast<double>(cfg.w_lo), static_cast<double>(cfg.w_hi));
  const double code = round_half_even((c - cfg.w_lo) * levels(cfg.n) / (static_cast<double>(cfg.w_hi) - cfg.w_lo));
  return static_cast<std::uint32_t>(std::clamp(code, 0.0, levels(cfg.n)));
}

inline std::vector<std::uint32_t> quantize_weights(std::span<const float> w, const WeightQuantConfig& cfg) {
  validate(cfg);
  std::vector<std::uint32_t> codes(w.size());
  std::transform(w.begin(), w.end(), codes.begin(), [&](float v) { return quantize_weight(v, cfg); });
  return codes;
}

/// Reconstruction in the clipped (scale-normalized) domain.
inline float dequantize_weight(std::uint32_t code, const WeightQuantConfig& cfg) {
  if (code > cfg.max_code())
    fail(ErrorCode::CodeOutOfRange, "code " + std::to_string(code) + " exceeds 2^n-1 for n=" + std::to_string(cfg.n));
  return static_cast<float>(static_cast<double>(code) * cfg.step() + cfg.w_lo);
}

inline std::vector<float> dequantize_weights(std::span<const std::uint32_t> codes, const WeightQuantConfig& cfg) {
  validate(cfg);
  std::vector<float> out(codes.size());
  std::transform(codes.begin(), codes.end(), out.begin(), [&](std::uint32_t c) { return dequantize_weight(c, cfg); });
  return out;
}

/// The weight-domain value the datapath effectively multiplies by: k * Q(W).
inline float reconstruct_weight(float w, const WeightQuantConfig& cfg) {
  return static_cast<float>(static_cast<double>(cfg.k) * dequantize_weight(quantize_weight(w, cfg), cfg));
}

/// Nearest-rank percentile of |w| / k.
inline double abs_percentile(std::span<const float> w, float k, double p) {
  if (w.empty()) fail(ErrorCode::EmptyTensor, "percentile of an empty tensor");
  std::vector<double> mags(w.size());
  std::transform(w.begin(), w.end(), mags.begin(), [&](float v) { return std::fabs(static_cast<double>(v) / k); });
  std::sort(mags.begin(), mags.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(mags.size())));
  return mags[std::clamp<std::size_t>(rank, 1, mags.size()) - 1];
}

/// Scale from the mean magnitude, symmetric clip bounds at the 99.9th
/// percentile of |w|/k.
inline WeightQuantConfig make_weight_config(std::span<const float> w, int n, double percentile = 0.999) {
  WeightQuantConfig cfg;
  cfg.n = n;
  cfg.k = weight_scale(w, n);
  if (!(cfg.k > 0.0f)) fail(ErrorCode::InvalidScale, "all-zero weights give a zero scale");
  const auto bound = static_cast<float>(abs_percentile(w, cfg.k, percentile));
  cfg.w_lo = -bound;
  cfg.w_hi = bound;
  validate(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Activations (PACT)

/// 0.5 * (|x| - |x - alpha| + alpha), evaluated in its closed piecewise form
/// so the result is exact for every finite x (the absolute-value form loses
/// tiny x against alpha in floating point).
inline float pact_clip(float x, float alpha) {
  if (!(alpha > 0.0f)) fail(ErrorCode::InvalidAlpha, "PACT alpha must be > 0");
  if (std::isnan(x)) return x;
  if (x <= 0.0f) return 0.0f;
  if (x >= alpha) return alpha;
  return x;
}

struct PactQuantized {
  std::uint32_t code = 0;
  float value = 0.0f;
};

inline PactQuantized pact_quantize(float x, const PactParams& p, numerics::NumericWarnings* warnings = nullptr) {
  validate(p);
  if (!std::isfinite(x)) {
    if (warnings) ++warnings->nonfinite_encoded;
    return {};
  }
  const double y = pact_clip(x, p.alpha);
  const double code = std::clamp(round_half_even(y * levels(p.n) / p.alpha), 0.0, levels(p.n));
  PactQuantized q;
  q.code = static_cast<std::uint32_t>(code);
  q.value = static_cast<float>(code * p.step());
  return q;
}

// ---------------------------------------------------------------------------
// Sensitivity

struct SensitivityEntry {
  int layer_id = 0;
  double s_sc16 = 0.0;
  double s_sc8 = 0.0;
  double s_l = 0.0;
  double grad_norm = 0.0;
  std::size_t n_l = 0;
};

using SensitivityReport = std::vector<SensitivityEntry>;

/// ||k*Q(w) - w||_2 for one quantizer configuration.
inline double quantization_error_norm(std::span<const float> w, const WeightQuantConfig& cfg) {
  validate(cfg);
  double sq = 0.0;
  for (float v : w) {
    const double d = static_cast<double>(reconstruct_weight(v, cfg)) - v;
    sq += d * d;
  }
  return std::sqrt(sq);
}

inline SensitivityEntry layer_sensitivity(int layer_id, std::span<const float> w, double grad_norm,
                                          const WeightQuantConfig& base_cfg, const WeightQuantConfig& cfg_16,
                                          const WeightQuantConfig& cfg_8) {
  if (w.empty()) fail(ErrorCode::EmptyTensor, "sensitivity of an empty layer");
  if (!(grad_norm >= 0.0)) fail(ErrorCode::ParseError, "gradient norm must be >= 0");
  const double base = quantization_error_norm(w, base_cfg);
  const double n_l = static_cast<double>(w.size());
  SensitivityEntry e;
  e.layer_id = layer_id;
  e.grad_norm = grad_norm;
  e.n_l = w.size();
  e.s_sc16 = (base - quantization_error_norm(w, cfg_16)) * grad_norm / n_l;
  e.s_sc8 = (base - quantization_error_norm(w, cfg_8)) * grad_norm / n_l;
  e.s_l = std::max(e.s_sc16, e.s_sc8);
  return e;
}

/// Central-difference estimate of ||dL/dw||_2 for a caller-supplied loss.
/// Meant for desk-scale layers; every element costs two loss evaluations.
template <class Loss>
double finite_difference_grad_norm(std::vector<float> w, Loss&& loss, double step = 1e-3) {
  double sq = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const float orig = w[i];
    w[i] = static_cast<float>(orig + step);
    const double up = loss(std::span<const float>(w));
    w[i] = static_cast<float>(orig - step);
    const double down = loss(std::span<const float>(w));
    w[i] = orig;
    const double g = (up - down) / (2.0 * step);
    sq += g * g;
  }
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Precision assignment

struct AssignmentPolicy {
  std::optional<double> threshold;
  std::optional<std::size_t> budget;
  PrecisionMode high = PrecisionMode::bf16();
  PrecisionMode low = PrecisionMode::int8();
};

struct PrecisionAssignment {
  std::map<int, PrecisionMode> modes;
  AssignmentPolicy policy;
};

inline PrecisionAssignment assign_precisions(const SensitivityReport& report, const AssignmentPolicy& policy) {
  if (policy.threshold.has_value() == policy.budget.has_value())
    fail(ErrorCode::ParseError, "policy needs exactly one of threshold or budget");
  PrecisionAssignment out;
  out.policy = policy;
  for (const auto& e : report) {
    if (!out.modes.emplace(e.layer_id, policy.low).second)
      fail(ErrorCode::ParseError, "duplicate layer id " + std::to_string(e.layer_id) + " in sensitivity report");
  }
  if (policy.threshold) {
    for (const auto& e : report)
      if (e.s_l > *policy.threshold) out.modes[e.layer_id] = policy.high;
    return out;
  }
  if (*policy.budget > report.size())
    fail(ErrorCode::PolicyBudgetExceedsLayerCount,
         "budget " + std::to_string(*policy.budget) + " exceeds " + std::to_string(report.size()) + " layers");
  std::vector<const SensitivityEntry*> order;
  for (const auto& e : report) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const SensitivityEntry* a, const SensitivityEntry* b) {
    if (a->s_l != b->s_l) return a->s_l > b->s_l;
    return a->layer_id < b->layer_id;
  });
  for (std::size_t i = 0; i < *policy.budget; ++i) out.modes[order[i]->layer_id] = policy.high;
  return out;
}

// ---------------------------------------------------------------------------
// Calibration file: `layer_id grad_norm` per line, '#' starts a comment.

inline std::map<int, double> parse_calibration(std::istream& in) {
  std::map<int, double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    int id = 0;
    double g = 0.0;
    if (!(ss >> id)) {
      std::string rest;
      ss.clear();
      if (ss >> rest) fail(ErrorCode::ParseError, "calibration line " + std::to_string(lineno) + ": bad layer id");
      continue;
    }
    std::string extra;
    if (!(ss >> g) || (ss >> extra) || !(g >= 0.0) || !std::isfinite(g))
      fail(ErrorCode::ParseError, "calibration line " + std::to_string(lineno) + ": expected `layer_id grad_norm`");
    if (!out.emplace(id, g).second)
      fail(ErrorCode::ParseError, "calibration line " + std::to_string(lineno) + ": duplicate layer id");
  }
  return out;
}

}  // namespace s8uv::quant
