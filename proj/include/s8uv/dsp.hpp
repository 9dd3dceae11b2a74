#pragma once

// Acoustic front end: 0.8 s segmentation, peak normalization, framed
// spectral features (MFCC, pooled mel, Welch log-PSD), zero-crossing rate
// and SNR-controlled Gaussian noise.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "s8uv/error.hpp"
#include "s8uv/rng.hpp"

namespace s8uv::dsp {

inline constexpr double kSegmentSeconds = 0.8;
inline constexpr std::uint32_t kCanonicalRate = 16000;

struct AudioSegment {
  std::vector<float> samples;
  std::uint32_t sample_rate_hz = kCanonicalRate;
  bool silent = false;  // set by normalize on an all-zero segment
};

enum class FeatureKind : std::uint8_t { MFCC20 = 0, Mel128 = 1, LogPSD = 2, ZCR = 3, RawAudio = 4 };

constexpr std::string_view to_string(FeatureKind k) noexcept {
  switch (k) {
    case FeatureKind::MFCC20: return "mfcc";
    case FeatureKind::Mel128: return "mel";
    case FeatureKind::LogPSD: return "psd";
    case FeatureKind::ZCR: return "zcr";
    case FeatureKind::RawAudio: return "raw";
  }
  return "?";
}

inline FeatureKind parse_feature_kind(std::string_view s) {
  for (auto k : {FeatureKind::MFCC20, FeatureKind::Mel128, FeatureKind::LogPSD, FeatureKind::ZCR, FeatureKind::RawAudio})
    if (s == to_string(k)) return k;
  fail(ErrorCode::ParseError, "unknown feature kind '" + std::string(s) + "' (mfcc|mel|psd|zcr|raw)");
}

struct FeatureVector {
  FeatureKind kind = FeatureKind::Mel128;
  std::vector<float> values;
};

struct NoiseSpec {
  double snr_db = std::numeric_limits<double>::infinity();  // +inf: clean
  std::uint64_t seed = 0;
};

enum class Pooling : std::uint8_t { Mean, Sequence };

struct FrontEndConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_mfcc = 20;
  std::size_t mfcc_mels = 40;
  std::size_t n_mels = 128;
  double log_floor = 1e-10;
  Pooling pooling = Pooling::Mean;
};

inline std::size_t segment_length(std::uint32_t rate) {
  return static_cast<std::size_t>(std::llround(kSegmentSeconds * rate));
}

// ---------------------------------------------------------------------------
// Segmentation and normalization

inline std::vector<AudioSegment> segment(std::span<const float> audio, std::uint32_t rate) {
  if (rate == 0) fail(ErrorCode::UnsupportedAudio, "sample rate must be positive");
  const std::size_t len = segment_length(rate);
  if (audio.size() < len)
    fail(ErrorCode::AudioTooShort,
         std::to_string(audio.size()) + " samples, one 0.8 s window needs " + std::to_string(len));
  std::vector<AudioSegment> out;
  for (std::size_t off = 0; off + len <= audio.size(); off += len)
    out.push_back({std::vector<float>(audio.begin() + off, audio.begin() + off + len), rate, false});
  return out;
}

inline AudioSegment normalize(AudioSegment seg) {
  float peak = 0.0f;
  for (float v : seg.samples) peak = std::max(peak, std::fabs(v));
  if (peak == 0.0f) {
    seg.silent = true;
    return seg;
  }
  for (float& v : seg.samples) v /= peak;
  return seg;
}

// ---------------------------------------------------------------------------
// Spectral primitives

/// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) fail(ErrorCode::InvalidFormat, "fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len)
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
  }
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Periodic Hann window.
inline std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters with unit peak on the HTK mel scale spanning
/// [0, rate/2]; rows of length nfft/2+1.
inline std::vector<std::vector<double>> mel_filterbank(std::size_t n_mels, std::size_t nfft, std::uint32_t rate) {
  if (n_mels == 0) fail(ErrorCode::InvalidFormat, "mel filterbank needs at least one filter");
  const std::size_t bins = nfft / 2 + 1;
  const double top = hz_to_mel(rate / 2.0);
  std::vector<double> edge(n_mels + 2);
  for (std::size_t i = 0; i < edge.size(); ++i)
    edge[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < n_mels; ++m)
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(nfft);
      const double lo = edge[m], mid = edge[m + 1], hi = edge[m + 2];
      if (f > lo && f < mid) fb[m][k] = (f - lo) / (mid - lo);
      else if (f == mid) fb[m][k] = 1.0;
      else if (f > mid && f < hi) fb[m][k] = (hi - f) / (hi - mid);
    }
  return fb;
}

/// Orthonormal DCT-II.
inline std::vector<double> dct2(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                           (2.0 * static_cast<double>(n)));
    out[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
  }
  return out;
}

struct FrameGrid {
  std::size_t frame = 0;
  std::size_t hop = 0;
  std::size_t count = 0;
  std::size_t nfft = 0;
};

inline FrameGrid frame_grid(std::size_t samples, std::uint32_t rate, const FrontEndConfig& cfg) {
  FrameGrid g;
  g.frame = static_cast<std::size_t>(std::llround(cfg.frame_ms * 1e-3 * rate));
  g.hop = static_cast<std::size_t>(std::llround(cfg.hop_ms * 1e-3 * rate));
  if (g.frame == 0 || g.hop == 0) fail(ErrorCode::SegmentTooShort, "frame or hop rounds to zero samples");
  if (samples < g.frame)
    fail(ErrorCode::SegmentTooShort,
         std::to_string(samples) + " samples, one frame needs " + std::to_string(g.frame));
  g.count = 1 + (samples - g.frame) / g.hop;
  g.nfft = next_pow2(g.frame);
  return g;
}

/// |X_k|^2 of each Hann-windowed, zero-padded frame, k = 0..nfft/2.
inline std::vector<std::vector<double>> power_frames(const AudioSegment& seg, const FrontEndConfig& cfg) {
  const auto g = frame_grid(seg.samples.size(), seg.sample_rate_hz, cfg);
  const auto win = hann(g.frame);
  std::vector<std::vector<double>> out(g.count);
  std::vector<std::complex<double>> buf(g.nfft);
  for (std::size_t f = 0; f < g.count; ++f) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < g.frame; ++i) buf[i] = win[i] * seg.samples[f * g.hop + i];
    fft(buf);
    out[f].resize(g.nfft / 2 + 1);
    for (std::size_t k = 0; k < out[f].size(); ++k) out[f][k] = std::norm(buf[k]);
  }
  return out;
}

/// Natural-log mel energies per frame.
inline std::vector<std::vector<double>> log_mel_frames(const AudioSegment& seg, std::size_t n_mels,
                                                       const FrontEndConfig& cfg) {
  const auto frames = power_frames(seg, cfg);
  const auto fb = mel_filterbank(n_mels, (frames.front().size() - 1) * 2, seg.sample_rate_hz);
  std::vector<std::vector<double>> out(frames.size(), std::vector<double>(n_mels));
  for (std::size_t f = 0; f < frames.size(); ++f)
    for (std::size_t m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < frames[f].size(); ++k) e += fb[m][k] * frames[f][k];
      out[f][m] = std::log(std::max(e, cfg.log_floor));
    }
  return out;
}

namespace detail {

inline std::vector<float> pool(const std::vector<std::vector<double>>& frames, Pooling p) {
  const std::size_t width = frames.front().size();
  std::vector<float> out;
  if (p == Pooling::Sequence) {
    out.reserve(frames.size() * width);
    for (const auto& f : frames)
      for (double v : f) out.push_back(static_cast<float>(v));
    return out;
  }
  std::vector<double> acc(width, 0.0);
  for (const auto& f : frames)
    for (std::size_t i = 0; i < width; ++i) acc[i] += f[i];
  out.resize(width);
  for (std::size_t i = 0; i < width; ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(frames.size()));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Features

inline FeatureVector mfcc(const AudioSegment& seg, const FrontEndConfig& cfg = {}) {
  if (cfg.n_mfcc == 0 || cfg.n_mfcc > cfg.mfcc_mels)
    fail(ErrorCode::InvalidFormat, "n_mfcc must be in [1, mfcc_mels]");
  auto frames = log_mel_frames(seg, cfg.mfcc_mels, cfg);
  for (auto& f : frames) {
    auto c = dct2(f);
    c.resize(cfg.n_mfcc);
    f = std::move(c);
  }
  return {FeatureKind::MFCC20, detail::pool(frames, cfg.pooling)};
}

inline FeatureVector mel_pooled(const AudioSegment& seg, const FrontEndConfig& cfg = {}) {
  return {FeatureKind::Mel128, detail::pool(log_mel_frames(seg, cfg.n_mels, cfg), cfg.pooling)};
}

/// log10 of the Welch average of Hann-windowed periodograms, one-sided
/// density scaling, nfft/2+1 bins.
inline FeatureVector log_psd(const AudioSegment& seg, const FrontEndConfig& cfg = {}) {
  const auto frames = power_frames(seg, cfg);
  const auto g = frame_grid(seg.samples.size(), seg.sample_rate_hz, cfg);
  const auto win = hann(g.frame);
  double wss = 0.0;
  for (double w : win) wss += w * w;
  const double scale = 1.0 / (static_cast<double>(seg.sample_rate_hz) * wss);
  const std::size_t bins = frames.front().size();
  std::vector<float> out(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    double acc = 0.0;
    for (const auto& f : frames) acc += f[k];
    double p = acc / static_cast<double>(frames.size()) * scale;
    if (k != 0 && k != bins - 1) p *= 2.0;
    out[k] = static_cast<float>(std::log10(std::max(p, cfg.log_floor)));
  }
  return {FeatureKind::LogPSD, out};
}

/// Fraction of adjacent pairs whose signs strictly differ; zeros never count.
inline FeatureVector zcr(const AudioSegment& seg) {
  const auto& x = seg.samples;
  if (x.size() < 2) fail(ErrorCode::SegmentTooShort, "zero-crossing rate needs at least two samples");
  std::size_t c = 0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    if ((x[i] > 0.0f && x[i + 1] < 0.0f) || (x[i] < 0.0f && x[i + 1] > 0.0f)) ++c;
  return {FeatureKind::ZCR, {static_cast<float>(static_cast<double>(c) / static_cast<double>(x.size() - 1))}};
}

inline FeatureVector extract(const AudioSegment& seg, FeatureKind kind, const FrontEndConfig& cfg = {}) {
  switch (kind) {
    case FeatureKind::MFCC20: return mfcc(seg, cfg);
    case FeatureKind::Mel128: return mel_pooled(seg, cfg);
    case FeatureKind::LogPSD: return log_psd(seg, cfg);
    case FeatureKind::ZCR: return zcr(seg);
    case FeatureKind::RawAudio: return {FeatureKind::RawAudio, seg.samples};
  }
  fail(ErrorCode::InvalidFormat, "unknown feature kind");
}

/// Per-vector min-max scaling to [0,1]; a constant vector maps to zeros.
inline std::vector<float> minmax_scale(std::vector<float> v) {
  if (v.empty()) return v;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, span = static_cast<double>(*hi) - a;
  for (float& x : v) x = span > 0.0 ? static_cast<float>((x - a) / span) : 0.0f;
  return v;
}

// ---------------------------------------------------------------------------
// Noise

inline double mean_power(std::span<const float> x) {
  double p = 0.0;
  for (float v : x) p += static_cast<double>(v) * v;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

/// Gaussian noise from mt19937_64(seed) via Box-Muller, scaled against the
/// realized noise power so the mixture hits the requested SNR.
inline AudioSegment add_noise(AudioSegment seg, const NoiseSpec& spec) {
  if (std::isnan(spec.snr_db) || spec.snr_db == -std::numeric_limits<double>::infinity())
    fail(ErrorCode::InvalidScale, "SNR must be a number or +inf");
  if (spec.snr_db == std::numeric_limits<double>::infinity()) return seg;
  const double ps = mean_power(seg.samples);
  if (ps == 0.0) fail(ErrorCode::SilentSignal, "SNR is undefined for a zero-power segment");
  Rng rng(spec.seed);
  std::vector<double> g(seg.samples.size());
  double pg = 0.0;
  for (double& v : g) {
    v = rng.gaussian();
    pg += v * v;
  }
  pg /= static_cast<double>(g.size());
  const double gain = std::sqrt(ps / (pg * std::pow(10.0, spec.snr_db / 10.0)));
  for (std::size_t i = 0; i < g.size(); ++i) seg.samples[i] = static_cast<float>(seg.samples[i] + gain * g[i]);
  return seg;
}

}  // namespace s8uv::dsp
