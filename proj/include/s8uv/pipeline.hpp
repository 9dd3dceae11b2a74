#pragma once

// Feature extraction, inference and evaluation over datasets. Records are
// processed concurrently; results land in per-index slots and are reduced in
// record order.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "s8uv/dataset.hpp"
#include "s8uv/dsp.hpp"
#include "s8uv/metrics.hpp"
#include "s8uv/nn.hpp"
#include "s8uv/rng.hpp"

namespace s8uv::app {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. If any call throws,
/// the exception of the lowest failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = std::numeric_limits<std::size_t>::max();
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

struct PipelineConfig {
  dsp::FeatureKind feature = dsp::FeatureKind::Mel128;
  dsp::FrontEndConfig front_end{};
  bool minmax = true;
  unsigned threads = 1;
};

inline std::vector<float> features_for(const dsp::AudioSegment& seg, const PipelineConfig& cfg) {
  auto v = dsp::extract(seg, cfg.feature, cfg.front_end).values;
  if (cfg.minmax && cfg.feature != dsp::FeatureKind::RawAudio) v = dsp::minmax_scale(std::move(v));
  return v;
}

inline dsp::AudioSegment raw_record(const dsp::Dataset& raw, std::size_t i) {
  return {raw.records[i], raw.raw_sample_rate(), false};
}

/// Raw-audio dataset -> feature dataset, optionally with noise at `snr_db`
/// using derive_seed(seed, i) for record i.
inline dsp::Dataset extract_dataset(const dsp::Dataset& raw, const PipelineConfig& cfg,
                                    double snr_db = std::numeric_limits<double>::infinity(), std::uint64_t seed = 0) {
  raw.raw_sample_rate();
  std::vector<std::vector<float>> out(raw.size());
  parallel_for(raw.size(), cfg.threads, [&](std::size_t i) {
    auto seg = dsp::add_noise(raw_record(raw, i), {snr_db, derive_seed(seed, i)});
    out[i] = features_for(seg, cfg);
  });
  dsp::Dataset d;
  d.kind = cfg.feature;
  for (std::size_t i = 0; i < raw.size(); ++i) d.add(std::move(out[i]), raw.labels[i]);
  return d;
}

inline nn::Tensor1D model_input(const nn::ModelSpec& m, std::span<const float> values) {
  if (values.size() != m.input.size())
    fail(ErrorCode::ShapeMismatch, "feature length " + std::to_string(values.size()) + " does not match model input " +
                                       nn::to_string(m.input));
  return nn::Tensor1D(m.input.channels, m.input.length, std::vector<float>(values.begin(), values.end()));
}

struct Prediction {
  std::uint8_t label = 0;
  std::uint8_t predicted = 0;
  float p_uav = 0.0f;
};

inline std::vector<Prediction> predict(const nn::ModelSpec& m, const dsp::Dataset& features, unsigned threads = 1) {
  if (features.kind == dsp::FeatureKind::RawAudio)
    fail(ErrorCode::InvalidFormat, "inference needs a feature dataset, not raw audio");
  nn::ForwardOptions opt;
  opt.keep_snapshots = false;
  std::vector<Prediction> out(features.size());
  parallel_for(features.size(), threads, [&](std::size_t i) {
    const auto res = nn::model_forward(m, model_input(m, features.records[i]), opt);
    const auto& y = res.output.data();
    out[i].label = features.labels[i];
    out[i].predicted = static_cast<std::uint8_t>(nn::argmax(y) == 1 ? 1 : 0);
    out[i].p_uav = y.size() > 1 ? y[1] : y[0];
  });
  return out;
}

inline EvalReport evaluate(const nn::ModelSpec& m, const dsp::Dataset& features, unsigned threads = 1) {
  ConfusionMatrix cm;
  for (const auto& p : predict(m, features, threads)) cm.add(p.label, p.predicted);
  return metrics(cm);
}

inline std::vector<SnrPoint> snr_sweep(const nn::ModelSpec& m, const dsp::Dataset& raw, std::span<const double> snrs,
                                       std::uint64_t seed, const PipelineConfig& cfg) {
  std::vector<SnrPoint> out;
  for (double snr : snrs) out.push_back({snr, evaluate(m, extract_dataset(raw, cfg, snr, seed), cfg.threads)});
  return out;
}

}  // namespace s8uv::app
