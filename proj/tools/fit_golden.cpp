// Fits the frozen golden model by random-search hill climbing on the
// synthetic training set, calibrates its quantizers and writes the container.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <vector>

#include "s8uv/model_io.hpp"
#include "s8uv/pipeline.hpp"
#include "s8uv/synth.hpp"

using namespace s8uv;

namespace {

nn::CnnConfig golden_arch() {
  nn::CnnConfig c;
  c.input_length = 128;
  c.conv_channels = {4, 8, 8};
  c.hidden = 8;
  c.classes = 2;
  return c;
}

double loss_of(const nn::ModelSpec& m, const dsp::Dataset& d, double* acc = nullptr) {
  nn::ForwardOptions opt;
  opt.keep_snapshots = false;
  double loss = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto y = nn::model_forward(m, app::model_input(m, d.records[i]), opt).output.data();
    loss -= std::log(std::max(1e-12, static_cast<double>(y[d.labels[i]])));
    hits += nn::argmax(y) == d.labels[i];
  }
  if (acc) *acc = static_cast<double>(hits) / static_cast<double>(d.size());
  return loss / static_cast<double>(d.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"fit the golden model fixture"};
  std::string out = "tests/fixtures/golden_model.s8uv";
  std::size_t train = 400;
  std::size_t iters = 4000;
  std::uint64_t seed = 7;
  cli.add_option("--out", out);
  cli.add_option("--train", train);
  cli.add_option("--iters", iters);
  cli.add_option("--seed", seed);
  CLI11_PARSE(cli, argc, argv);

  app::PipelineConfig pc;
  pc.threads = app::default_threads();
  const auto train_set = app::extract_dataset(synth::golden_dataset(train, synth::kGoldenTrainSeed), pc);
  const auto eval_set =
      app::extract_dataset(synth::golden_dataset(synth::kGoldenEvalCount, synth::kGoldenEvalSeed), pc);

  auto model = nn::make_cnn(golden_arch(), seed);
  const auto ids = nn::weighted_layer_ids(model);
  Rng rng(seed ^ 0xF17ull);
  double best = loss_of(model, train_set);
  double sigma = 0.05;
  for (std::size_t it = 0; it < iters; ++it) {
    auto trial = model;
    auto& layer = trial.layers[ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(ids.size()) - 1))]];
    const double fan = static_cast<double>(layer.weights.size()) / static_cast<double>(layer.bias.size());
    const double step = sigma * std::sqrt(6.0 / fan);
    for (float& w : layer.weights)
      if (rng.uniform01() < 0.2) w += static_cast<float>(step * rng.gaussian());
    for (float& b : layer.bias)
      if (rng.uniform01() < 0.2) b += static_cast<float>(step * rng.gaussian());
    const double l = loss_of(trial, train_set);
    if (l < best) {
      best = l;
      model = std::move(trial);
      sigma = std::min(0.5, sigma * 1.1);
    } else {
      sigma = std::max(0.002, sigma * 0.99);
    }
    if (best < 1e-3) break;
    if (it % 200 == 0) {
      double acc = 0.0;
      loss_of(model, train_set, &acc);
      std::printf("iter %zu loss %.5f train_acc %.4f sigma %.4f\n", it, best, acc, sigma);
      std::fflush(stdout);
    }
  }

  std::vector<nn::Tensor1D> calib;
  for (const auto& r : train_set.records) calib.push_back(app::model_input(model, r));
  nn::calibrate_quantization(model, calib);
  nn::set_all_precision(model, numerics::PrecisionMode::fp32());

  for (auto kind : {numerics::PrecisionKind::FP32, numerics::PrecisionKind::BF16, numerics::PrecisionKind::INT8,
                    numerics::PrecisionKind::FXP8}) {
    auto m = model;
    nn::set_all_precision(m, numerics::PrecisionMode::of(kind, {}));
    const auto r = app::evaluate(m, eval_set, pc.threads);
    std::printf("%-5s eval accuracy %.4f\n", std::string(numerics::to_string(kind)).c_str(), r.accuracy);
  }
  nn::save_model(model, out);
  std::printf("wrote %s\n", out.c_str());
}
