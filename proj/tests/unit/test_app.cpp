#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "error_code.hpp"
#include "s8uv/cli.hpp"
#include "s8uv/model_io.hpp"
#include "s8uv/pipeline.hpp"
#include "s8uv/synth.hpp"

using namespace s8uv;
using namespace s8uv::app;
namespace fs = std::filesystem;

namespace {

const fs::path kFixture = fs::path(S8UV_FIXTURE_DIR) / "golden_model.s8uv";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("s8uv_test_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_dispatch(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& p) { return io::read_text(p); }

}  // namespace

TEST(Metrics, SymmetricMatrix) {
  const auto r = metrics({9, 1, 1, 9});
  EXPECT_DOUBLE_EQ(r.accuracy, 0.9);
  EXPECT_DOUBLE_EQ(r.precision, 0.9);
  EXPECT_DOUBLE_EQ(r.recall, 0.9);
  EXPECT_NEAR(r.f1, 0.9, 1e-15);
  EXPECT_DOUBLE_EQ(r.far, 0.1);
  EXPECT_DOUBLE_EQ(r.mdr, 0.1);
  EXPECT_FALSE(r.degenerate.any());
}

TEST(Metrics, DegenerateAndEmpty) {
  const auto r = metrics({0, 0, 0, 10});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.far, 0.0);
  EXPECT_EQ(r.f1, 0.0);
  EXPECT_TRUE(r.degenerate.precision);
  EXPECT_TRUE(r.degenerate.recall);
  EXPECT_TRUE(r.degenerate.mdr);
  EXPECT_FALSE(r.degenerate.far);
  EXPECT_EQ(code_of([] { metrics({}); }), ErrorCode::EmptyMatrix);
}

TEST(Metrics, HandArithmetic) {
  const auto r = metrics({88, 11, 12, 89});
  EXPECT_NEAR(r.precision, 0.888888889, 1e-9);
  EXPECT_DOUBLE_EQ(r.recall, 0.88);
  EXPECT_NEAR(r.f1, 0.884422111, 1e-9);  // 176 / 199
  EXPECT_DOUBLE_EQ(r.accuracy, 177.0 / 200.0);
  EXPECT_DOUBLE_EQ(r.far, 0.11);
  EXPECT_DOUBLE_EQ(r.mdr, 0.12);
}

TEST(Metrics, Algebra) {
  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    ConfusionMatrix cm{static_cast<std::uint64_t>(rng.uniform_int(0, 50)), static_cast<std::uint64_t>(rng.uniform_int(0, 50)),
                       static_cast<std::uint64_t>(rng.uniform_int(0, 50)), static_cast<std::uint64_t>(rng.uniform_int(0, 50))};
    if (cm.total() == 0) continue;
    const auto r = metrics(cm);
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total()));
    if (r.precision + r.recall > 0) {
      EXPECT_NEAR(r.f1, 2 * r.precision * r.recall / (r.precision + r.recall), 1e-15);
    }
    if (cm.fp + cm.tn > 0) {
      EXPECT_NEAR(r.far + static_cast<double>(cm.tn) / static_cast<double>(cm.fp + cm.tn), 1.0, 1e-15);
    }
    for (double v : {r.accuracy, r.precision, r.recall, r.f1, r.far, r.mdr}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  ConfusionMatrix a;
  a.add(1, 1);
  a.add(1, 0);
  a.add(0, 1);
  a.add(0, 0);
  EXPECT_EQ(a, (ConfusionMatrix{1, 1, 1, 1}));
}

TEST(Pipeline, ParallelForRethrowsLowestIndex) {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
  for (int h : hits) EXPECT_EQ(h, 1);
  try {
    parallel_for(100, 4, [](std::size_t i) {
      if (i == 17 || i == 60 || i == 99) throw std::runtime_error(std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "17");
  }
}

TEST(Pipeline, ThreadCountDoesNotChangeResults) {
  const auto raw = synth::golden_dataset(12, 77);
  PipelineConfig one, four;
  four.threads = 4;
  const auto a = extract_dataset(raw, one, 5.0, 3);
  const auto b = extract_dataset(raw, four, 5.0, 3);
  EXPECT_EQ(a, b);
  const auto m = nn::load_model(kFixture);
  const auto pa = predict(m, a, 1), pb = predict(m, b, 4);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].predicted, pb[i].predicted);
    EXPECT_EQ(pa[i].p_uav, pb[i].p_uav);
  }
}

TEST(Pipeline, SweepCleanEqualsPlainAndIsDeterministic) {
  const auto m = nn::load_model(kFixture);
  const auto raw = synth::golden_dataset(20, synth::kGoldenEvalSeed);
  PipelineConfig pc;
  const std::vector<double> snrs{std::numeric_limits<double>::infinity(), 0.0};
  const auto curve = snr_sweep(m, raw, snrs, 11, pc);
  const auto plain = evaluate(m, extract_dataset(raw, pc));
  EXPECT_EQ(curve[0].report.cm, plain.cm);
  const auto again = snr_sweep(m, raw, snrs, 11, pc);
  EXPECT_EQ(again[1].report.cm, curve[1].report.cm);
  EXPECT_EQ(detail::curve_csv(again), detail::curve_csv(curve));
  EXPECT_EQ(code_of([&] { evaluate(m, raw); }), ErrorCode::InvalidFormat);
  dsp::Dataset wrong;
  wrong.add(std::vector<float>(20, 0.5f), 1);
  EXPECT_EQ(code_of([&] { evaluate(m, wrong); }), ErrorCode::ShapeMismatch);
}

TEST(CliHelpers, ParsingAndExitCodes) {
  const auto s = detail::parse_snr_list("-10, 0,20,inf,clean");
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[0], -10.0);
  EXPECT_TRUE(std::isinf(s[3]) && std::isinf(s[4]));
  EXPECT_EQ(detail::num(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(exit_code_for(ErrorCode::InvariantViolation), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::AccumulatorOverflow), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::ChecksumMismatch), 2);
  quant::SensitivityReport rep{{0, 0.5, 0.25, 0.5, 2.0, 24}, {4, 0.125, 0.125, -0.5, 1.0, 96}};
  std::istringstream in(detail::sensitivity_text(rep));
  const auto back = detail::parse_sensitivity(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].layer_id, 4);
  EXPECT_EQ(back[1].s_l, -0.5);
  EXPECT_EQ(back[1].s_sc16, 0.125);
  EXPECT_EQ(back[0].n_l, 24u);
}

TEST(Cli, Selftest) {
  const auto r = run({"selftest"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, SimulatePrintsClosedForm) {
  TempDir d("sim");
  io::write_text(d / "p.txt", "0 3\n1 4\n");
  const auto r = run({"simulate", "--profile", d / "p.txt", "--mode", "reusable", "--clock", "100e6", "--out", d / ""});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("total_cycles=8\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("bus/DMA/host transfers excluded"), std::string::npos);
  EXPECT_TRUE(fs::exists(d / "cycles.txt"));
  const auto j = nlohmann::json::parse(slurp(d / "cycles.json"));
  EXPECT_EQ(j["total_cycles"], 8);
}

TEST(Cli, ConfigFileSuppliesDefaults) {
  TempDir d("cfg");
  io::write_text(d / "p.txt", "0 3\n1 4\n");
  io::write_text(d / "run.cfg", "# defaults\nmode=parallel\nprofile=" + (d / "p.txt") + "\ncolour=blue\n");
  const auto r = run({"simulate", "--config", d / "run.cfg", "--out", d / ""});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("total_cycles=4\n"), std::string::npos) << r.out;
  EXPECT_NE(r.err.find("colour"), std::string::npos) << r.err;
  // explicit flags win over the file
  const auto e = run({"simulate", "--config", d / "run.cfg", "--mode", "reusable", "--out", d / ""});
  EXPECT_NE(e.out.find("total_cycles=8\n"), std::string::npos) << e.out;
}

TEST(Cli, PruneCanonicalModel) {
  TempDir d("prune");
  nn::save_model(nn::make_cnn(nn::CnnConfig{}, 1), d / "canon.s8uv");
  const auto r = run({"prune", "--model", d / "canon.s8uv", "--target-flatten", "8704", "--out", d / ""});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("flatten_dim 35072 -> 8704"), std::string::npos) << r.out;
  EXPECT_EQ(prune::flatten_dim(nn::load_model(d / "model.s8uv")), 8704u);
  std::istringstream removed(slurp(d / "prune.txt"));
  std::size_t lines = 0;
  for (std::string l; std::getline(removed, l);) ++lines;
  EXPECT_EQ(lines, 206u);
}

TEST(Cli, MalformedInvocationsNeverExitZero) {
  TempDir d("bad");
  io::write_text(d / "p.txt", "0 3\n1 4\n");
  io::write_text(d / "junk.s8uv", "not a model");
  auto corrupt = io::read_file(kFixture);
  corrupt[corrupt.size() / 2] ^= 0x5A;
  io::write_file(d / "corrupt.s8uv", corrupt);
  const std::string fixture = kFixture.string();

  const std::vector<std::pair<std::vector<std::string>, int>> cases{
      {{}, 1},
      {{"bogus"}, 1},
      {{"simulate"}, 1},
      {{"simulate", "--profile", d / "p.txt", "--mode", "sideways"}, 1},
      {{"simulate", "--profile", d / "p.txt", "--clock", "abc"}, 1},
      {{"simulate", "--profile", d / "p.txt", "--unknown-flag"}, 1},
      {{"simulate", "--profile", d / "missing.txt"}, 2},
      {{"simulate", "--profile", d / "p.txt", "--clock", "0", "--out", d / ""}, 2},
      {{"extract", "--synthetic", "abc"}, 1},
      {{"extract"}, 1},
      {{"extract", "--synthetic", "2", "--feature", "cqt", "--out", d / ""}, 2},
      {{"prune", "--model", d / "missing.s8uv", "--target-flatten", "56"}, 2},
      {{"prune", "--model", d / "junk.s8uv", "--target-flatten", "56"}, 2},
      {{"prune", "--model", d / "corrupt.s8uv", "--target-flatten", "56"}, 2},
      {{"prune", "--model", fixture, "--target-flatten", "57", "--out", d / ""}, 2},
      {{"eval", "--model", fixture}, 1},
      {{"sweep", "--model", fixture}, 1},
      {{"quantize", "--model", fixture, "--precision", "int8", "--budget", "1"}, 1},
      {{"augment", "--dataset", d / "missing.s8fv", "--snr", "10"}, 2},
      {{"augment", "--snr", "10"}, 1},
      {{"selftest", "--config", d / "missing.cfg"}, 2},
  };
  for (const auto& [args, expect] : cases) {
    const auto r = run(args);
    std::string joined;
    for (const auto& a : args) joined += a + " ";
    EXPECT_EQ(r.code, expect) << joined << "\n" << r.err;
    EXPECT_FALSE(r.err.empty()) << joined;
  }
}

TEST(Cli, EndToEndIsByteDeterministic) {
  auto pipeline = [](const TempDir& d) {
    const std::string o = d / "";
    EXPECT_EQ(run({"extract", "--synthetic", "24", "--seed", "5", "--out", o}).code, 0);
    EXPECT_EQ(run({"quantize", "--model", kFixture.string(), "--calib", d / "features.s8fv", "--precision", "int8",
                   "--out", o})
                  .code,
              0);
    fs::rename(d / "model.s8uv", d / "quantized.s8uv");
    EXPECT_EQ(run({"prune", "--model", d / "quantized.s8uv", "--target-flatten", "56", "--out", o}).code, 0);
    EXPECT_EQ(run({"infer", "--model", d / "model.s8uv", "--features", d / "features.s8fv", "--out", o}).code, 0);
    EXPECT_EQ(run({"eval", "--model", d / "model.s8uv", "--features", d / "features.s8fv", "--out", o}).code, 0);
    EXPECT_EQ(run({"extract", "--synthetic", "10", "--seed", "6", "--feature", "raw", "--out", o}).code, 0);
    const auto rep = run({"report", "--model", d / "model.s8uv", "--dataset", d / "raw.s8fv", "--snr", "0,inf",
                          "--seed", "3", "--out", o});
    EXPECT_EQ(rep.code, 0) << rep.err;
  };
  TempDir a("e2e_a"), b("e2e_b");
  pipeline(a);
  pipeline(b);
  for (const char* f : {"features.s8fv", "model.s8uv", "prune.txt", "predictions.csv", "report.txt", "metrics.csv",
                        "curve_snr.csv", "cycles.txt", "cycles.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(io::read_file(a / f), io::read_file(b / f)) << f;
  }
  const auto report = slurp(a / "report.txt");
  EXPECT_EQ(report.find(a.path.string()), std::string::npos);
  const auto header = slurp(a / "curve_snr.csv").substr(0, 25);
  EXPECT_EQ(header, "snr_db,accuracy,far,mdr\n0");
  EXPECT_EQ(slurp(a / "metrics.csv").substr(0, 41), "accuracy,precision,recall,f1,far,mdr,tp,f");
}
