#pragma once

// Procedural two-class acoustic set.
//   UAV:        harmonic stack, fundamental 150-400 Hz plus 4 harmonics with
//               1/h roll-off and seeded amplitude jitter, over a faint noise floor
//   background: broadband Gaussian noise through a seeded one-pole tilt filter
// Every segment is peak-normalized. Record i uses derive_seed(seed, i) and
// label i % 2, so any prefix of the set is balanced to within one record.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "s8uv/dataset.hpp"
#include "s8uv/dsp.hpp"
#include "s8uv/rng.hpp"

namespace s8uv::synth {

inline constexpr std::uint64_t kGoldenTrainSeed = 0x5EED0001;
inline constexpr std::uint64_t kGoldenEvalSeed = 0x5EED0002;
inline constexpr std::size_t kGoldenEvalCount = 200;

inline dsp::AudioSegment uav_segment(std::uint64_t seed, std::uint32_t rate = dsp::kCanonicalRate) {
  Rng rng(seed);
  const std::size_t n = dsp::segment_length(rate);
  const double f0 = rng.uniform(150.0, 400.0);
  std::vector<double> amp(5), phase(5);
  for (std::size_t h = 0; h < 5; ++h) {
    amp[h] = rng.uniform(0.6, 1.4) / static_cast<double>(h + 1);
    phase[h] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const double floor_gain = rng.uniform(0.01, 0.05);
  dsp::AudioSegment seg;
  seg.sample_rate_hz = rate;
  seg.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double v = 0.0;
    for (std::size_t h = 0; h < 5; ++h)
      v += amp[h] * std::sin(2.0 * std::numbers::pi * f0 * static_cast<double>(h + 1) * t + phase[h]);
    seg.samples[i] = static_cast<float>(v + floor_gain * rng.gaussian());
  }
  return dsp::normalize(std::move(seg));
}

inline dsp::AudioSegment background_segment(std::uint64_t seed, std::uint32_t rate = dsp::kCanonicalRate) {
  Rng rng(seed);
  const std::size_t n = dsp::segment_length(rate);
  const double pole = rng.uniform(-0.6, 0.95);
  dsp::AudioSegment seg;
  seg.sample_rate_hz = rate;
  seg.samples.resize(n);
  double y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y = rng.gaussian() + pole * y;
    seg.samples[i] = static_cast<float>(y);
  }
  return dsp::normalize(std::move(seg));
}

inline dsp::AudioSegment labelled_segment(std::uint64_t seed, std::size_t index, std::uint8_t& label,
                                          std::uint32_t rate = dsp::kCanonicalRate) {
  label = static_cast<std::uint8_t>(index % 2);
  const auto s = derive_seed(seed, index);
  return label ? uav_segment(s, rate) : background_segment(s, rate);
}

/// Raw-audio dataset of `count` segments.
inline dsp::Dataset golden_dataset(std::size_t count, std::uint64_t seed, std::uint32_t rate = dsp::kCanonicalRate) {
  dsp::Dataset d;
  d.kind = dsp::FeatureKind::RawAudio;
  d.record_length = dsp::segment_length(rate);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint8_t label = 0;
    auto seg = labelled_segment(seed, i, label, rate);
    d.add(std::move(seg.samples), label);
  }
  return d;
}

}  // namespace s8uv::synth
