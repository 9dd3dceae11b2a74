#pragma once

// Structured channel pruning at the conv-to-dense interface. Removing an
// output channel of the last conv stage removes its filter row and bias, and
// every flatten position it fed in the following dense layer.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s8uv/error.hpp"
#include "s8uv/nn.hpp"

namespace s8uv::prune {

using nn::ModelSpec;

struct PruneConfig {
  std::optional<std::size_t> target_flatten;
  std::optional<std::size_t> target_channels;
};

struct RemovedChannel {
  std::size_t index = 0;
  double score = 0.0;
};

struct PruneRecord {
  std::size_t original_channels = 0;
  std::vector<std::size_t> retained;
  std::vector<RemovedChannel> removed;  // ascending channel index
};

/// L1 norm of each output channel's filter; w is [out_ch][in_ch][kernel].
inline std::vector<double> channel_importance(std::span<const float> w, std::size_t out_ch) {
  if (w.empty() || out_ch == 0) fail(ErrorCode::EmptyTensor, "channel importance of an empty filter bank");
  if (w.size() % out_ch != 0) fail(ErrorCode::ShapeMismatch, "weight count is not a multiple of out_ch");
  const std::size_t per = w.size() / out_ch;
  std::vector<double> score(out_ch, 0.0);
  for (std::size_t c = 0; c < out_ch; ++c)
    for (std::size_t i = 0; i < per; ++i) score[c] += std::fabs(static_cast<double>(w[c * per + i]));
  return score;
}

/// Channels x temporal length entering the first Flatten layer.
inline std::size_t flatten_dim(const ModelSpec& m) {
  const auto shapes = nn::infer_shapes(m);
  for (std::size_t i = 0; i < m.layers.size(); ++i)
    if (std::holds_alternative<nn::Flatten>(m.layers[i].spec)) return shapes[i].size();
  fail(ErrorCode::InvalidChain, "model has no flatten layer");
}

namespace detail {

struct Interface {
  std::size_t conv = 0;
  std::size_t flatten = 0;
  std::size_t dense = 0;
  nn::Shape at_flatten{};
};

inline Interface locate_interface(const ModelSpec& m) {
  const auto shapes = nn::infer_shapes(m);
  Interface it;
  const auto f = std::find_if(m.layers.begin(), m.layers.end(),
                              [](const nn::Layer& l) { return std::holds_alternative<nn::Flatten>(l.spec); });
  if (f == m.layers.end()) fail(ErrorCode::NoFlattenLayer, "pruning needs a flatten layer");
  it.flatten = static_cast<std::size_t>(f - m.layers.begin());
  it.at_flatten = shapes[it.flatten];

  std::size_t i = it.flatten;
  while (i > 0) {
    --i;
    const auto& s = m.layers[i].spec;
    if (std::holds_alternative<nn::Conv1D>(s)) break;
    if (!std::holds_alternative<nn::ReLU>(s) && !std::holds_alternative<nn::MaxPool1D>(s) &&
        !std::holds_alternative<nn::Dropout>(s))
      fail(ErrorCode::InvalidChain, "only relu/maxpool/dropout may sit between the last conv and flatten");
    if (i == 0) fail(ErrorCode::InvalidChain, "no conv layer before flatten");
  }
  if (it.flatten == 0 || !std::holds_alternative<nn::Conv1D>(m.layers[i].spec))
    fail(ErrorCode::InvalidChain, "no conv layer before flatten");
  it.conv = i;

  std::size_t j = it.flatten + 1;
  while (j < m.layers.size() && (std::holds_alternative<nn::ReLU>(m.layers[j].spec) ||
                                 std::holds_alternative<nn::Dropout>(m.layers[j].spec)))
    ++j;
  if (j >= m.layers.size() || !std::holds_alternative<nn::Dense>(m.layers[j].spec))
    fail(ErrorCode::InvalidChain, "flatten must feed a dense layer");
  it.dense = j;
  return it;
}

}  // namespace detail

inline std::pair<ModelSpec, PruneRecord> prune_channels(const ModelSpec& m, const PruneConfig& cfg) {
  if (cfg.target_flatten.has_value() == cfg.target_channels.has_value())
    fail(ErrorCode::TargetUnachievable, "set exactly one of target_flatten / target_channels");
  const auto it = detail::locate_interface(m);
  const std::size_t channels = it.at_flatten.channels;
  const std::size_t temporal = it.at_flatten.length;

  std::size_t keep = 0;
  if (cfg.target_flatten) {
    if (*cfg.target_flatten == 0 || *cfg.target_flatten % temporal != 0)
      fail(ErrorCode::TargetUnachievable, "flatten target " + std::to_string(*cfg.target_flatten) +
                                              " is not a positive multiple of temporal length " +
                                              std::to_string(temporal));
    keep = *cfg.target_flatten / temporal;
  } else {
    keep = *cfg.target_channels;
  }
  if (keep == 0 || keep > channels)
    fail(ErrorCode::TargetUnachievable,
         "cannot keep " + std::to_string(keep) + " of " + std::to_string(channels) + " channels");

  const nn::Layer& conv_layer = m.layers[it.conv];
  const auto& conv = std::get<nn::Conv1D>(conv_layer.spec);
  const auto score = channel_importance(conv_layer.weights, conv.out_ch);

  // lowest score goes first; among equal scores the higher index goes first
  std::vector<std::size_t> order(channels);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] < score[b];
    return a > b;
  });

  PruneRecord rec;
  rec.original_channels = channels;
  std::vector<bool> drop(channels, false);
  for (std::size_t r = 0; r < channels - keep; ++r) drop[order[r]] = true;
  for (std::size_t c = 0; c < channels; ++c) {
    if (drop[c])
      rec.removed.push_back({c, score[c]});
    else
      rec.retained.push_back(c);
  }

  ModelSpec out = m;
  if (rec.removed.empty()) return {out, rec};

  nn::Layer& pc = out.layers[it.conv];
  const std::size_t per = conv.in_ch * conv.kernel;
  pc.weights.clear();
  pc.bias.clear();
  for (std::size_t c : rec.retained) {
    pc.weights.insert(pc.weights.end(), conv_layer.weights.begin() + c * per, conv_layer.weights.begin() + (c + 1) * per);
    pc.bias.push_back(conv_layer.bias[c]);
  }
  std::get<nn::Conv1D>(pc.spec).out_ch = keep;

  const nn::Layer& dense_layer = m.layers[it.dense];
  const auto& dense = std::get<nn::Dense>(dense_layer.spec);
  nn::Layer& pd = out.layers[it.dense];
  pd.weights.clear();
  pd.weights.reserve(dense.out_dim * keep * temporal);
  for (std::size_t j = 0; j < dense.out_dim; ++j) {
    const auto row = dense_layer.weights.begin() + static_cast<std::ptrdiff_t>(j * dense.in_dim);
    for (std::size_t c : rec.retained)
      pd.weights.insert(pd.weights.end(), row + static_cast<std::ptrdiff_t>(c * temporal),
                        row + static_cast<std::ptrdiff_t>((c + 1) * temporal));
  }
  std::get<nn::Dense>(pd.spec).in_dim = keep * temporal;

  nn::infer_shapes(out);
  return {out, rec};
}

/// `channel_index importance_score` per removed channel.
inline std::string to_text(const PruneRecord& rec) {
  std::string out;
  char line[64];
  for (const auto& r : rec.removed) {
    std::snprintf(line, sizeof line, "%zu %.9g\n", r.index, r.score);
    out += line;
  }
  return out;
}

}  // namespace s8uv::prune
