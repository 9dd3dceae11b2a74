#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "error_code.hpp"
#include "s8uv/prune.hpp"

using namespace s8uv;
using namespace s8uv::prune;

namespace {

nn::ModelSpec toy(std::uint64_t seed) {
  nn::CnnConfig c;
  c.input_length = 30;
  c.conv_channels = {3, 4, 6};
  c.hidden = 4;
  return nn::make_cnn(c, seed);
}

PruneConfig by_flatten(std::size_t n) { return {n, std::nullopt}; }
PruneConfig by_channels(std::size_t n) { return {std::nullopt, n}; }

// Last conv and first dense of a make_cnn chain.
constexpr std::size_t kConv = 8;
constexpr std::size_t kDense = 13;

}  // namespace

TEST(Importance, L1PerChannel) {
  const auto s = channel_importance(std::vector<float>{1, -2, 3, 0, 0, 0.5f}, 2);
  EXPECT_EQ(s, (std::vector<double>{6.0, 0.5}));
  EXPECT_EQ(code_of([] { channel_importance(std::vector<float>{}, 1); }), ErrorCode::EmptyTensor);
  EXPECT_EQ(code_of([] { channel_importance(std::vector<float>{1, 2, 3}, 2); }), ErrorCode::ShapeMismatch);
}

TEST(Prune, CanonicalInterface) {
  const auto m = nn::make_cnn(nn::CnnConfig{}, 1);
  EXPECT_EQ(flatten_dim(m), 35072u);
  const auto [p, rec] = prune_channels(m, by_flatten(8704));
  EXPECT_EQ(flatten_dim(p), 8704u);
  EXPECT_EQ(std::get<nn::Conv1D>(p.layers[kConv].spec).out_ch, 68u);
  EXPECT_EQ(std::get<nn::Dense>(p.layers[kDense].spec).in_dim, 8704u);
  EXPECT_EQ(rec.original_channels, 274u);
  EXPECT_EQ(rec.retained.size(), 68u);
  EXPECT_EQ(rec.removed.size(), 206u);

  std::set<std::size_t> all(rec.retained.begin(), rec.retained.end());
  for (const auto& r : rec.removed) EXPECT_TRUE(all.insert(r.index).second);
  EXPECT_EQ(all.size(), 274u);
  EXPECT_EQ(*all.rbegin(), 273u);

  const auto score = channel_importance(m.layers[kConv].weights, 274);
  double min_kept = 1e300;
  for (auto c : rec.retained) min_kept = std::min(min_kept, score[c]);
  for (const auto& r : rec.removed) {
    EXPECT_LE(r.score, min_kept);
    EXPECT_EQ(r.score, score[r.index]);
  }
}

TEST(Prune, TensorsMatchSliceOracle) {
  const auto m = toy(2);
  const auto [p, rec] = prune_channels(m, by_channels(2));
  // 30 -> 28 -> 14 -> 12 -> 6 -> 4 -> 2
  const std::size_t len = nn::infer_shapes(m)[kDense - 1].length;  // entering flatten
  ASSERT_EQ(len, 2u);
  const auto& ow = m.layers[kConv].weights;
  const auto& pw = p.layers[kConv].weights;
  const std::size_t per = 4 * 3;
  for (std::size_t i = 0; i < rec.retained.size(); ++i) {
    const std::size_t c = rec.retained[i];
    for (std::size_t j = 0; j < per; ++j) EXPECT_EQ(pw[i * per + j], ow[c * per + j]);
    EXPECT_EQ(p.layers[kConv].bias[i], m.layers[kConv].bias[c]);
  }
  const std::size_t old_in = 6 * len, new_in = 2 * len;
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t i = 0; i < rec.retained.size(); ++i)
      for (std::size_t t = 0; t < len; ++t)
        EXPECT_EQ(p.layers[kDense].weights[j * new_in + i * len + t],
                  m.layers[kDense].weights[j * old_in + rec.retained[i] * len + t]);
  EXPECT_EQ(p.layers[kDense].bias, m.layers[kDense].bias);
  // untouched layers
  EXPECT_EQ(p.layers[0], m.layers[0]);
  EXPECT_EQ(p.layers[15], m.layers[15]);
}

TEST(Prune, DeadChannelsRemoveExactly) {
  auto m = toy(3);
  auto& conv = m.layers[kConv];
  const std::size_t per = 4 * 3;
  for (std::size_t c : {1u, 4u}) {
    std::fill(conv.weights.begin() + c * per, conv.weights.begin() + (c + 1) * per, 0.0f);
    conv.bias[c] = -1.0f;  // ReLU output is exactly zero
  }
  const auto [p, rec] = prune_channels(m, by_channels(4));
  ASSERT_EQ(rec.removed.size(), 2u);
  EXPECT_EQ(rec.removed[0].index, 1u);
  EXPECT_EQ(rec.removed[1].index, 4u);
  std::mt19937 gen(1);
  std::uniform_real_distribution<float> d(0, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<float> x(30);
    for (auto& v : x) v = d(gen);
    const auto in = nn::Tensor1D::row(x);
    EXPECT_EQ(nn::model_forward(p, in).output, nn::model_forward(m, in).output);
  }
}

TEST(Prune, TiesDropHigherIndexFirst) {
  auto m = toy(4);
  auto& w = m.layers[kConv].weights;
  std::fill(w.begin(), w.end(), 0.5f);
  const auto [p, rec] = prune_channels(m, by_channels(4));
  EXPECT_EQ(rec.retained, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Prune, NoOpAndIdempotence) {
  const auto m = toy(5);
  const auto [same, r0] = prune_channels(m, by_channels(6));
  EXPECT_EQ(same, m);
  EXPECT_TRUE(r0.removed.empty());
  const auto [once, r1] = prune_channels(m, by_flatten(6));
  const auto [twice, r2] = prune_channels(once, by_flatten(6));
  EXPECT_EQ(twice, once);
  EXPECT_TRUE(r2.removed.empty());
}

TEST(Prune, Errors) {
  const auto m = toy(6);
  EXPECT_EQ(code_of([&] { prune_channels(m, by_flatten(7)); }), ErrorCode::TargetUnachievable);
  EXPECT_EQ(code_of([&] { prune_channels(m, by_flatten(0)); }), ErrorCode::TargetUnachievable);
  EXPECT_EQ(code_of([&] { prune_channels(m, by_flatten(14)); }), ErrorCode::TargetUnachievable);
  EXPECT_EQ(code_of([&] { prune_channels(m, by_channels(0)); }), ErrorCode::TargetUnachievable);
  EXPECT_EQ(code_of([&] { prune_channels(m, {}); }), ErrorCode::TargetUnachievable);
  EXPECT_EQ(code_of([&] { prune_channels(m, PruneConfig{6, 3}); }),
            ErrorCode::TargetUnachievable);

  nn::ModelSpec flat_free;
  flat_free.input = {1, 4};
  flat_free.layers.push_back(nn::dense_layer(4, 2, std::vector<float>(8, 1), std::vector<float>(2, 0)));
  EXPECT_EQ(code_of([&] { prune_channels(flat_free, by_channels(1)); }), ErrorCode::NoFlattenLayer);
}

TEST(Prune, RecordText) {
  PruneRecord rec;
  rec.removed = {{3, 0.25}, {7, 1.5}};
  EXPECT_EQ(to_text(rec), "3 0.25\n7 1.5\n");
}
