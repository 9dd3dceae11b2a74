#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "error_code.hpp"
#include "s8uv/dataset.hpp"
#include "s8uv/dsp.hpp"
#include "s8uv/synth.hpp"
#include "s8uv/wav.hpp"

using namespace s8uv;
using namespace s8uv::dsp;

namespace {

AudioSegment sine(double hz, std::size_t n = 12800, std::uint32_t rate = 16000, double amp = 1.0) {
  AudioSegment s;
  s.sample_rate_hz = rate;
  s.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    s.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate));
  return s;
}

AudioSegment noise(std::uint32_t seed, std::size_t n = 12800) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> d(0.0f, 0.3f);
  AudioSegment s;
  s.samples.resize(n);
  for (auto& v : s.samples) v = d(gen);
  return s;
}

double htk_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double htk_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

/// Triangle response of filter m (of n) at frequency f, from edges spaced
/// evenly in mel between 0 and rate/2.
double triangle(std::size_t m, std::size_t n, double f, double rate) {
  const double top = htk_mel(rate / 2);
  const double lo = htk_hz(top * m / (n + 1)), mid = htk_hz(top * (m + 1) / (n + 1)), hi = htk_hz(top * (m + 2) / (n + 1));
  if (f <= lo || f >= hi) return 0.0;
  return f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
}

}  // namespace

TEST(Segmentation, Windows) {
  const std::vector<float> two_s(32000, 0.1f);
  const auto segs = segment(two_s, 16000);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0].samples.size(), 12800u);
  EXPECT_EQ(segs[1].samples.size(), 12800u);
  EXPECT_EQ(segment(std::vector<float>(12800), 16000).size(), 1u);
  EXPECT_EQ(code_of([] { segment(std::vector<float>(12640), 16000); }), ErrorCode::AudioTooShort);
  std::vector<float> ramp(25600);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<float>(i);
  EXPECT_EQ(segment(ramp, 16000)[1].samples.front(), 12800.0f);
}

TEST(Segmentation, Normalize) {
  AudioSegment s;
  s.samples = {0.5f, -0.25f};
  EXPECT_EQ(normalize(s).samples, (std::vector<float>{1.0f, -0.5f}));
  AudioSegment z;
  z.samples = std::vector<float>(10, 0.0f);
  const auto nz = normalize(z);
  EXPECT_TRUE(nz.silent);
  EXPECT_EQ(nz.samples, z.samples);
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    const auto n = normalize(noise(seed, 500));
    float peak = 0.0f;
    for (float v : n.samples) peak = std::max(peak, std::fabs(v));
    EXPECT_NEAR(peak, 1.0f, 1e-7);
  }
}

TEST(Spectral, FftMatchesDftAndParseval) {
  std::mt19937 gen(1);
  std::normal_distribution<double> d;
  for (std::size_t n : {1u, 2u, 8u, 64u, 512u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {d(gen), d(gen)};
    auto y = x;
    fft(y);
    double et = 0.0, ef = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> ref;
      for (std::size_t i = 0; i < n; ++i)
        ref += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n));
      EXPECT_LT(std::abs(ref - y[k]), 1e-9 * static_cast<double>(n));
      et += std::norm(x[k]);
      ef += std::norm(y[k]);
    }
    EXPECT_NEAR(ef / static_cast<double>(n), et, 1e-4 * et);
  }
  std::vector<std::complex<double>> bad(6);
  EXPECT_EQ(code_of([&] { fft(bad); }), ErrorCode::InvalidFormat);
  EXPECT_EQ(next_pow2(400), 512u);
  EXPECT_EQ(next_pow2(512), 512u);
}

TEST(Spectral, HannIsPeriodic) {
  const auto w = hann(400);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_NEAR(w[200], 1.0, 1e-15);
  for (std::size_t i = 1; i < 400; ++i) EXPECT_NEAR(w[i], w[400 - i], 1e-12);
}

TEST(Spectral, FilterbankPartitionAndShape) {
  for (std::size_t n : {40u, 128u}) {
    const auto fb = mel_filterbank(n, 512, 16000);
    ASSERT_EQ(fb.size(), n);
    const double first_centre = htk_hz(htk_mel(8000.0) / (n + 1));
    const double last_centre = htk_hz(htk_mel(8000.0) * n / (n + 1));
    for (std::size_t k = 0; k < 257; ++k) {
      double s = 0.0;
      for (std::size_t m = 0; m < n; ++m) {
        const double f = k * 16000.0 / 512.0;
        EXPECT_NEAR(fb[m][k], triangle(m, n, f, 16000), 1e-9) << m << " " << k;
        s += fb[m][k];
      }
      const double f = k * 16000.0 / 512.0;
      if (f >= first_centre && f <= last_centre) {
        EXPECT_GT(s, 0.0);
        EXPECT_LE(s, 1.0001);
      }
    }
  }
}

TEST(Spectral, SineEnergyLandsInItsMelBand) {
  const auto seg = sine(1000.0);
  FrontEndConfig cfg;
  const auto frames = power_frames(seg, cfg);
  ASSERT_EQ(frames.size(), 78u);
  ASSERT_EQ(frames[0].size(), 257u);
  for (std::size_t n : {40u, 128u}) {
    const auto fb = mel_filterbank(n, 512, 16000);
    std::size_t expect = 0;
    for (std::size_t m = 0; m < n; ++m)
      if (triangle(m, n, 1000.0, 16000) > triangle(expect, n, 1000.0, 16000)) expect = m;
    std::vector<double> e(n, 0.0);
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t k = 0; k < 257; ++k) e[m] += fb[m][k] * frames[10][k];
    EXPECT_EQ(static_cast<std::size_t>(std::max_element(e.begin(), e.end()) - e.begin()), expect) << n;
  }
}

TEST(Spectral, DctBasisRows) {
  for (std::size_t n : {8u, 40u}) {
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> delta(n, 0.0);
      delta[j] = 1.0;
      const auto c = dct2(delta);
      for (std::size_t k = 0; k < n; ++k) {
        const double norm = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
        const double basis = norm * std::cos(std::numbers::pi * static_cast<double>(k) *
                                             (static_cast<double>(j) + 0.5) / static_cast<double>(n));
        ASSERT_NEAR(c[k], basis, 1e-6);
      }
    }
  }
}

TEST(Features, MfccOfSilence) {
  AudioSegment s;
  s.samples.assign(12800, 0.0f);
  const auto f = mfcc(s);
  ASSERT_EQ(f.values.size(), 20u);
  EXPECT_NEAR(f.values[0], std::sqrt(40.0) * std::log(1e-10), 1e-4);
  for (std::size_t i = 1; i < 20; ++i) EXPECT_NEAR(f.values[i], 0.0, 1e-6);
  FrontEndConfig seq;
  seq.pooling = Pooling::Sequence;
  EXPECT_EQ(mfcc(s, seq).values.size(), 78u * 20);
  EXPECT_EQ(mel_pooled(s).values.size(), 128u);
}

TEST(Features, MeanPoolingAveragesFrames) {
  const auto seg = noise(3);
  FrontEndConfig seq;
  seq.pooling = Pooling::Sequence;
  const auto frames = mel_pooled(seg, seq).values;
  const auto pooled = mel_pooled(seg).values;
  for (std::size_t m = 0; m < 128; ++m) {
    double acc = 0.0;
    for (std::size_t f = 0; f < 78; ++f) acc += frames[f * 128 + m];
    EXPECT_NEAR(pooled[m], acc / 78.0, 1e-4);
  }
}

TEST(Features, LogPsdPeak) {
  const auto p = log_psd(sine(1000.0)).values;
  ASSERT_EQ(p.size(), 257u);
  const std::size_t peak = 32;  // 1000 Hz / (16000 / 512)
  EXPECT_EQ(static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()), peak);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k + 3 > peak && k < peak + 3) continue;
    EXPECT_GE(10.0 * (p[peak] - p[k]), 20.0) << k;
  }
  // density scaling: integrating the one-sided PSD gives the signal power
  const auto white = noise(9, 12800);
  const auto q = log_psd(white).values;
  double integral = 0.0;
  for (float v : q) integral += std::pow(10.0, v) * 16000.0 / 512.0;
  EXPECT_NEAR(integral, mean_power(white.samples), 0.05 * mean_power(white.samples));
}

TEST(Features, Zcr) {
  AudioSegment c;
  c.samples.assign(100, 0.5f);
  EXPECT_EQ(zcr(c).values[0], 0.0f);
  AudioSegment alt;
  for (int i = 0; i < 101; ++i) alt.samples.push_back(i % 2 ? -1.0f : 1.0f);
  EXPECT_EQ(zcr(alt).values[0], 1.0f);
  AudioSegment zeros;
  zeros.samples = {1, 0, -1, 0, 1};
  EXPECT_EQ(zcr(zeros).values[0], 0.0f);
  for (std::uint32_t s = 0; s < 10; ++s) {
    const float z = zcr(noise(s, 300)).values[0];
    EXPECT_GE(z, 0.0f);
    EXPECT_LE(z, 1.0f);
  }
  AudioSegment one;
  one.samples = {1};
  EXPECT_EQ(code_of([&] { zcr(one); }), ErrorCode::SegmentTooShort);
}

TEST(Features, DeterministicAndKinds) {
  const auto seg = noise(4);
  for (auto k : {FeatureKind::MFCC20, FeatureKind::Mel128, FeatureKind::LogPSD, FeatureKind::ZCR, FeatureKind::RawAudio}) {
    const auto a = extract(seg, k), b = extract(seg, k);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.kind, k);
    EXPECT_EQ(parse_feature_kind(to_string(k)), k);
  }
  EXPECT_EQ(code_of([] { parse_feature_kind("cqt"); }), ErrorCode::ParseError);
  AudioSegment tiny;
  tiny.samples.assign(100, 0.1f);
  EXPECT_EQ(code_of([&] { mfcc(tiny); }), ErrorCode::SegmentTooShort);
}

TEST(Features, MinMax) {
  EXPECT_EQ(minmax_scale({2, 4, 3}), (std::vector<float>{0, 1, 0.5f}));
  EXPECT_EQ(minmax_scale({7, 7}), (std::vector<float>{0, 0}));
  EXPECT_TRUE(minmax_scale({}).empty());
}

TEST(Noise, HitsRequestedSnr) {
  for (double snr : {-10.0, 0.0, 10.0, 20.0}) {
    for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
      const auto clean = sine(440.0);
      const auto noisy = add_noise(clean, {snr, seed});
      double pn = 0.0;
      for (std::size_t i = 0; i < clean.samples.size(); ++i) {
        const double e = static_cast<double>(noisy.samples[i]) - clean.samples[i];
        pn += e * e;
      }
      pn /= static_cast<double>(clean.samples.size());
      EXPECT_NEAR(10.0 * std::log10(mean_power(clean.samples) / pn), snr, 0.1);
    }
  }
}

TEST(Noise, CleanDeterministicAndErrors) {
  const auto clean = sine(300.0);
  EXPECT_EQ(add_noise(clean, {}).samples, clean.samples);
  EXPECT_EQ(add_noise(clean, {5.0, 42}).samples, add_noise(clean, {5.0, 42}).samples);
  EXPECT_NE(add_noise(clean, {5.0, 42}).samples, add_noise(clean, {5.0, 43}).samples);
  AudioSegment silent;
  silent.samples.assign(100, 0.0f);
  EXPECT_EQ(code_of([&] { add_noise(silent, {10.0, 1}); }), ErrorCode::SilentSignal);
  EXPECT_EQ(code_of([&] { add_noise(clean, {std::nan(""), 1}); }), ErrorCode::InvalidScale);
  EXPECT_EQ(code_of([&] { add_noise(clean, {-INFINITY, 1}); }), ErrorCode::InvalidScale);
}

TEST(Wav, RoundTripAndErrors) {
  const std::vector<float> x{0.0f, 0.5f, -0.5f, 1.0f, -1.0f, 0.25f, 2.0f};
  const auto bytes = wav::encode(x, 16000);
  ASSERT_EQ(bytes.size(), 44u + 2 * x.size());
  const auto a = wav::decode(bytes, 16000u);
  EXPECT_EQ(a.sample_rate_hz, 16000u);
  ASSERT_EQ(a.samples.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_EQ(a.samples[i], static_cast<float>(std::nearbyint(std::clamp(x[i], -1.0f, 1.0f) * 32767.0) / 32768.0));
  EXPECT_EQ(code_of([&] { wav::decode(bytes, 8000u); }), ErrorCode::SampleRateMismatch);
  auto stereo = bytes;
  stereo[22] = 2;
  EXPECT_EQ(code_of([&] { wav::decode(stereo); }), ErrorCode::UnsupportedAudio);
  auto eight = bytes;
  eight[34] = 8;
  EXPECT_EQ(code_of([&] { wav::decode(eight); }), ErrorCode::UnsupportedAudio);
  auto junk = bytes;
  junk[0] = 'X';
  EXPECT_EQ(code_of([&] { wav::decode(junk); }), ErrorCode::UnsupportedAudio);
}

TEST(DatasetFile, RoundTripAndCorruption) {
  Dataset d;
  d.kind = FeatureKind::MFCC20;
  d.add({1, 2, 3}, 1);
  d.add({4, 5, 6}, 0);
  EXPECT_EQ(code_of([&] { d.add({1, 2}, 0); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { d.add({1, 2, 3}, 2); }), ErrorCode::InvalidFormat);
  const auto bytes = encode_dataset(d);
  EXPECT_EQ(bytes.size(), 4u + 2 + 1 + 4 + 4 + 2 * 13 + 4);
  EXPECT_EQ(decode_dataset(bytes), d);

  auto magic = bytes;
  magic[1] = 'x';
  EXPECT_EQ(code_of([&] { decode_dataset(magic); }), ErrorCode::BadMagic);
  auto crc = bytes;
  crc[20] ^= 0x10;
  EXPECT_EQ(code_of([&] { decode_dataset(crc); }), ErrorCode::ChecksumMismatch);
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    const std::vector<std::uint8_t> prefix(bytes.begin(), bytes.begin() + static_cast<long>(len));
    ASSERT_EQ(code_of([&] { decode_dataset(prefix); }), ErrorCode::TruncatedFile) << len;
  }
  auto count = bytes;
  count[14] = 0xFF;  // record count high byte
  const auto c = code_of([&] { decode_dataset(count); });
  EXPECT_TRUE(c == ErrorCode::TruncatedFile || c == ErrorCode::ChecksumMismatch);
}

TEST(Synthetic, DeterministicAndBalanced) {
  const auto a = synth::golden_dataset(6, 123);
  EXPECT_EQ(a, synth::golden_dataset(6, 123));
  EXPECT_EQ(a.kind, FeatureKind::RawAudio);
  EXPECT_EQ(a.record_length, 12800u);
  EXPECT_EQ(a.raw_sample_rate(), 16000u);
  EXPECT_EQ(a.labels, (std::vector<std::uint8_t>{0, 1, 0, 1, 0, 1}));
  for (const auto& r : a.records) {
    float peak = 0.0f;
    for (float v : r) peak = std::max(peak, std::fabs(v));
    EXPECT_NEAR(peak, 1.0f, 1e-6);
  }
  EXPECT_NE(a.records[0], synth::golden_dataset(6, 124).records[0]);
}
