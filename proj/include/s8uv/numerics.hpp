#pragma once

// Scalar arithmetic of the multi-precision datapath: BF16 and FXP8 formats,
// the checked integer MAC, and the shift-add CORDIC activation unit.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "s8uv/error.hpp"

namespace s8uv::numerics {

/// Round half to even, independent of the floating-point environment.
inline double round_half_even(double x) noexcept {
  if (!std::isfinite(x)) return x;
  const double lo = std::floor(x);
  const double diff = x - lo;
  if (diff > 0.5) return lo + 1.0;
  if (diff < 0.5) return lo;
  return std::fmod(lo, 2.0) == 0.0 ? lo : lo + 1.0;
}

/// Counts values that had no fixed-point encoding (NaN/inf) and were
/// replaced by code 0.
struct NumericWarnings {
  std::size_t nonfinite_encoded = 0;

  void merge(const NumericWarnings& other) noexcept { nonfinite_encoded += other.nonfinite_encoded; }
};

// ---------------------------------------------------------------------------
// BF16

struct Bf16 {
  std::uint16_t bits = 0;

  friend constexpr bool operator==(Bf16, Bf16) = default;
};

inline Bf16 fp32_to_bf16(float x) noexcept {
  const auto u = std::bit_cast<std::uint32_t>(x);
  if (std::isnan(x)) {
    // keep sign and top payload bits, force the quiet bit
    return Bf16{static_cast<std::uint16_t>((u >> 16) | 0x0040u)};
  }
  const std::uint32_t lsb = (u >> 16) & 1u;
  const std::uint32_t rounded = u + 0x7FFFu + lsb;  // carries into the exponent on overflow -> inf
  return Bf16{static_cast<std::uint16_t>(rounded >> 16)};
}

constexpr float bf16_to_fp32(Bf16 b) noexcept {
  return std::bit_cast<float>(static_cast<std::uint32_t>(b.bits) << 16);
}

/// Narrow-then-widen: the value a BF16 register would hold.
inline float bf16_round(float x) noexcept { return bf16_to_fp32(fp32_to_bf16(x)); }

// ---------------------------------------------------------------------------
// FXP8: 8-bit two's complement with a configurable binary point.

struct Fxp8Format {
  int frac_bits = 6;

  constexpr bool valid() const noexcept { return frac_bits >= 0 && frac_bits <= 7; }
  double lsb() const noexcept { return std::ldexp(1.0, -frac_bits); }
  double min_value() const noexcept { return -std::ldexp(1.0, 7 - frac_bits); }
  double max_value() const noexcept { return std::ldexp(1.0, 7 - frac_bits) - lsb(); }

  friend constexpr bool operator==(Fxp8Format, Fxp8Format) = default;
};

inline void validate(Fxp8Format fmt) {
  if (!fmt.valid()) fail(ErrorCode::InvalidFormat, "fxp8 frac_bits must be in [0,7], got " + std::to_string(fmt.frac_bits));
}

inline std::int8_t fxp8_encode(float x, Fxp8Format fmt, NumericWarnings* warnings = nullptr) {
  validate(fmt);
  if (!std::isfinite(x)) {
    if (warnings) ++warnings->nonfinite_encoded;
    return 0;
  }
  const double scaled = round_half_even(std::ldexp(static_cast<double>(x), fmt.frac_bits));
  if (scaled > 127.0) return 127;
  if (scaled < -128.0) return -128;
  return static_cast<std::int8_t>(scaled);
}

inline float fxp8_decode(std::int8_t code, Fxp8Format fmt) {
  validate(fmt);
  return static_cast<float>(std::ldexp(static_cast<double>(code), -fmt.frac_bits));
}

// ---------------------------------------------------------------------------
// Accumulation

/// 32-bit integer accumulator for INT8/FXP8, 32-bit float for BF16/FP32.
using AccumValue = std::variant<std::int32_t, float>;

/// acc + a*b with the 32-bit accumulator limit enforced.
inline std::int32_t mac_int(std::int32_t acc, std::int8_t a, std::int8_t b) {
  std::int32_t out = 0;
  const std::int32_t product = static_cast<std::int32_t>(a) * static_cast<std::int32_t>(b);
  if (__builtin_add_overflow(acc, product, &out)) {
    fail(ErrorCode::AccumulatorOverflow,
         "accumulator " + std::to_string(acc) + " + " + std::to_string(product) + " exceeds 32 bits");
  }
  return out;
}

/// BF16 operands, product widened to FP32 (exact for 8-bit significands),
/// accumulated in FP32.
inline float mac_bf16(float acc, Bf16 a, Bf16 b) noexcept {
  return acc + bf16_to_fp32(a) * bf16_to_fp32(b);
}

// ---------------------------------------------------------------------------
// Precision modes

enum class PrecisionKind : std::uint8_t { FP32 = 0, BF16 = 1, INT8 = 2, FXP8 = 3 };

constexpr std::string_view to_string(PrecisionKind k) noexcept {
  switch (k) {
    case PrecisionKind::FP32: return "fp32";
    case PrecisionKind::BF16: return "bf16";
    case PrecisionKind::INT8: return "int8";
    case PrecisionKind::FXP8: return "fxp8";
  }
  return "?";
}

inline std::optional<PrecisionKind> parse_precision(std::string_view s) noexcept {
  if (s == "fp32") return PrecisionKind::FP32;
  if (s == "bf16") return PrecisionKind::BF16;
  if (s == "int8") return PrecisionKind::INT8;
  if (s == "fxp8") return PrecisionKind::FXP8;
  return std::nullopt;
}

/// Arithmetic selection for one layer. The FXP8 format is carried only in
/// FXP8 mode; INT8 quantizer parameters live with the layer they belong to.
class PrecisionMode {
 public:
  constexpr PrecisionMode() = default;

  static constexpr PrecisionMode fp32() { return PrecisionMode(PrecisionKind::FP32, std::nullopt); }
  static constexpr PrecisionMode bf16() { return PrecisionMode(PrecisionKind::BF16, std::nullopt); }
  static constexpr PrecisionMode int8() { return PrecisionMode(PrecisionKind::INT8, std::nullopt); }
  static PrecisionMode fxp8(Fxp8Format fmt = {}) {
    validate(fmt);
    return PrecisionMode(PrecisionKind::FXP8, fmt);
  }
  static PrecisionMode of(PrecisionKind kind, Fxp8Format fmt = {}) {
    return kind == PrecisionKind::FXP8 ? fxp8(fmt) : PrecisionMode(kind, std::nullopt);
  }

  constexpr PrecisionKind kind() const noexcept { return kind_; }
  constexpr bool is_integer() const noexcept {
    return kind_ == PrecisionKind::INT8 || kind_ == PrecisionKind::FXP8;
  }
  Fxp8Format fxp_format() const {
    if (!fxp_) fail(ErrorCode::InvalidFormat, "fxp format requested from a non-FXP8 mode");
    return *fxp_;
  }

  friend constexpr bool operator==(const PrecisionMode&, const PrecisionMode&) = default;

 private:
  constexpr PrecisionMode(PrecisionKind k, std::optional<Fxp8Format> f) : kind_(k), fxp_(f) {}

  PrecisionKind kind_ = PrecisionKind::FP32;
  std::optional<Fxp8Format> fxp_;
};

// ---------------------------------------------------------------------------
// CORDIC, hyperbolic rotation mode.
//
// Micro-rotations i = 1..iters with i = 4, 13, 40 executed twice, as the
// hyperbolic sequence requires for convergence. The datapath is 64-bit
// fixed point with 48 fractional bits, so each step is a shift and an add.
// Arguments beyond |z| <= 1 are halved first and rebuilt with the
// double-angle identities afterwards.

namespace detail {

inline constexpr int kCordicFracBits = 48;
inline constexpr double kCordicOne = static_cast<double>(std::int64_t{1} << kCordicFracBits);
inline constexpr double kCordicReducedBound = 1.0;

constexpr bool cordic_repeats(int i) noexcept { return i == 4 || i == 13 || i == 40; }

inline std::int64_t to_fixed(double v) noexcept { return static_cast<std::int64_t>(std::llround(v * kCordicOne)); }
inline double from_fixed(std::int64_t v) noexcept { return static_cast<double>(v) / kCordicOne; }

inline double cordic_gain(int iters) noexcept {
  double k = 1.0;
  for (int i = 1; i <= iters; ++i) {
    const double step = std::sqrt(1.0 - std::ldexp(1.0, -2 * i));
    k *= step;
    if (cordic_repeats(i)) k *= step;
  }
  return k;
}

inline void check_iters(int iters) {
  if (iters < 4) fail(ErrorCode::IterationCountTooSmall, "CORDIC needs at least 4 iterations, got " + std::to_string(iters));
  if (iters > 60) fail(ErrorCode::IterationCountTooSmall, "CORDIC iterations beyond 60 exceed the datapath width");
}

/// Core rotation on an already-reduced argument.
inline std::pair<double, double> cordic_core(double z, int iters) {
  std::int64_t x = to_fixed(1.0 / cordic_gain(iters));
  std::int64_t y = 0;
  std::int64_t zr = to_fixed(z);
  for (int i = 1; i <= iters; ++i) {
    const std::int64_t angle = to_fixed(std::atanh(std::ldexp(1.0, -i)));
    const int passes = cordic_repeats(i) ? 2 : 1;
    for (int p = 0; p < passes; ++p) {
      const std::int64_t xs = x >> i;
      const std::int64_t ys = y >> i;
      if (zr >= 0) {
        x += ys;
        y += xs;
        zr -= angle;
      } else {
        x -= ys;
        y -= xs;
        zr += angle;
      }
    }
  }
  return {from_fixed(x), from_fixed(y)};
}

inline int halvings_needed(double& z) noexcept {
  int m = 0;
  while (std::fabs(z) > kCordicReducedBound) {
    z *= 0.5;
    ++m;
  }
  return m;
}

}  // namespace detail

struct CoshSinh {
  double cosh = 1.0;
  double sinh = 0.0;
};

inline CoshSinh cordic_hyperbolic(float z, int iters) {
  detail::check_iters(iters);
  if (std::isnan(z)) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  if (std::isinf(z)) return {std::numeric_limits<double>::infinity(), static_cast<double>(z)};
  double r = z;
  const int m = detail::halvings_needed(r);
  auto [c, s] = detail::cordic_core(r, iters);
  for (int k = 0; k < m; ++k) {
    const double c2 = c * c + s * s;
    const double s2 = 2.0 * c * s;
    c = c2;
    s = s2;
  }
  return {c, s};
}

inline double cordic_tanh(float z, int iters) {
  detail::check_iters(iters);
  if (std::isnan(z)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(z)) return z > 0 ? 1.0 : -1.0;
  double r = z;
  const int m = detail::halvings_needed(r);
  const auto [c, s] = detail::cordic_core(r, iters);
  double t = s / c;
  for (int k = 0; k < m; ++k) t = (2.0 * t) / (1.0 + t * t);
  return std::clamp(t, -1.0, 1.0);
}

inline double cordic_sigmoid(float z, int iters) {
  const double t = cordic_tanh(static_cast<float>(0.5 * static_cast<double>(z)), iters);
  if (std::isnan(t)) return t;
  return std::clamp(0.5 * (1.0 + t), 0.0, 1.0);
}

/// exp(z) = 2^q * (cosh r + sinh r) with z = q ln2 + r, |r| <= ln2/2.
inline double cordic_exp(double z, int iters) {
  detail::check_iters(iters);
  if (std::isnan(z)) return z;
  if (z == -std::numeric_limits<double>::infinity()) return 0.0;
  if (z == std::numeric_limits<double>::infinity()) return z;
  constexpr double ln2 = 0.69314718055994530942;
  const double q = std::nearbyint(z / ln2);
  const double r = z - q * ln2;
  const auto [c, s] = detail::cordic_core(r, iters);
  return std::ldexp(c + s, static_cast<int>(std::clamp(q, -2000.0, 2000.0)));
}

}  // namespace s8uv::numerics
