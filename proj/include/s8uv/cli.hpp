#pragma once

// Batch command line. Exit codes: 0 success, 1 usage, 2 data error,
// 3 internal invariant violation.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "s8uv/dataset.hpp"
#include "s8uv/model_io.hpp"
#include "s8uv/pipeline.hpp"
#include "s8uv/prune.hpp"
#include "s8uv/quant.hpp"
#include "s8uv/sim.hpp"
#include "s8uv/synth.hpp"
#include "s8uv/wav.hpp"

namespace s8uv::app {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInvariant = 3 };

inline int exit_code_for(ErrorCode c) noexcept {
  switch (c) {
    case ErrorCode::InvariantViolation:
    case ErrorCode::AccumulatorOverflow: return kExitInvariant;
    default: return kExitData;
  }
}

namespace detail {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char b[40];
  std::snprintf(b, sizeof b, "%.9g", v);
  return b;
}

inline std::string fixed6(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.6f", v);
  return b;
}

inline std::vector<double> parse_snr_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok == "inf" || tok == "clean" || tok == "+inf") {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size() || !std::isfinite(v)) fail(ErrorCode::ParseError, "bad SNR value '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) fail(ErrorCode::ParseError, "empty SNR list");
  return out;
}

inline std::map<std::string, std::string> read_config(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorCode::IoError, "cannot open config " + p.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ParseError, "config line " + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline bool has_flag(const std::vector<std::string>& args, const std::string& name) {
  for (const auto& a : args)
    if (a == name || a.rfind(name + "=", 0) == 0) return true;
  return false;
}

inline std::optional<std::string> flag_value(const std::vector<std::string>& args, const std::string& name) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == name && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind(name + "=", 0) == 0) return args[i].substr(name.size() + 1);
  }
  return std::nullopt;
}

/// Appends `--key value` for config keys the subcommand knows and the
/// command line did not set.
inline void inject_config(CLI::App& sub, std::vector<std::string>& args, std::ostream& err) {
  const auto path = flag_value(args, "--config");
  if (!path) return;
  for (const auto& [key, value] : read_config(*path)) {
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub.get_option_no_throw(flag);
    if (!opt) {
      err << "warning: config key '" << key << "' is not used by " << sub.get_name() << "\n";
      continue;
    }
    if (has_flag(args, flag)) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "1" || value == "true" || value == "yes" || value == "on") args.push_back(flag);
      continue;
    }
    args.push_back(flag);
    args.push_back(value);
  }
}

inline void apply_precision(nn::ModelSpec& m, const std::string& precision, int frac_bits) {
  if (precision.empty() || precision == "stored") return;
  const auto kind = numerics::parse_precision(precision);
  if (!kind) throw UsageError("unknown precision '" + precision + "' (fp32|bf16|int8|fxp8|stored)");
  nn::set_all_precision(m, numerics::PrecisionMode::of(*kind, numerics::Fxp8Format{frac_bits}));
}

inline dsp::Pooling parse_pooling(const std::string& s) {
  if (s == "mean") return dsp::Pooling::Mean;
  if (s == "sequence") return dsp::Pooling::Sequence;
  throw UsageError("unknown pooling '" + s + "' (mean|sequence)");
}

inline std::string metrics_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "accuracy,precision,recall,f1,far,mdr,tp,fp,fn,tn\n";
  os << fixed6(r.accuracy) << "," << fixed6(r.precision) << "," << fixed6(r.recall) << "," << fixed6(r.f1) << ","
     << fixed6(r.far) << "," << fixed6(r.mdr) << "," << r.cm.tp << "," << r.cm.fp << "," << r.cm.fn << "," << r.cm.tn
     << "\n";
  return os.str();
}

inline std::string curve_csv(const std::vector<SnrPoint>& curve) {
  std::ostringstream os;
  os << "snr_db,accuracy,far,mdr\n";
  for (const auto& p : curve)
    os << num(p.snr_db) << "," << fixed6(p.report.accuracy) << "," << fixed6(p.report.far) << ","
       << fixed6(p.report.mdr) << "\n";
  return os.str();
}

inline std::string degenerate_text(const DegenerateDenominator& d) {
  std::string s;
  auto add = [&](bool f, const char* name) {
    if (!f) return;
    if (!s.empty()) s += ",";
    s += name;
  };
  add(d.precision, "precision");
  add(d.recall, "recall");
  add(d.far, "far");
  add(d.mdr, "mdr");
  return s.empty() ? "none" : s;
}

inline std::string report_text(const EvalReport& r, const std::string& precision, std::size_t records,
                               dsp::FeatureKind feature) {
  std::ostringstream os;
  os << "UAV acoustic detection report\n\n";
  os << "records            " << records << "\n";
  os << "feature            " << dsp::to_string(feature) << "\n";
  os << "precision          " << (precision.empty() ? "stored" : precision) << "\n\n";
  os << "confusion          tp=" << r.cm.tp << " fp=" << r.cm.fp << " fn=" << r.cm.fn << " tn=" << r.cm.tn << "\n";
  os << "accuracy           " << fixed6(r.accuracy) << "\n";
  os << "precision_score    " << fixed6(r.precision) << "\n";
  os << "recall             " << fixed6(r.recall) << "\n";
  os << "f1                 " << fixed6(r.f1) << "\n";
  os << "false_alarm_rate   " << fixed6(r.far) << "\n";
  os << "missed_detection   " << fixed6(r.mdr) << "\n";
  os << "degenerate         " << degenerate_text(r.degenerate) << "\n";
  if (!r.curve.empty()) {
    os << "\nSNR sweep (snr_db accuracy far mdr)\n";
    for (const auto& p : r.curve)
      os << "  " << num(p.snr_db) << " " << fixed6(p.report.accuracy) << " " << fixed6(p.report.far) << " "
         << fixed6(p.report.mdr) << "\n";
  }
  if (r.cycles) {
    const auto& c = *r.cycles;
    os << "\ncycle model (" << sim::to_string(c.mode) << ", compute cycles only; bus/DMA/host transfers excluded)\n";
    os << "total_cycles       " << c.total_cycles << "\n";
    if (c.clock_hz > 0.0) {
      os << "clock_hz           " << num(c.clock_hz) << "\n";
      os << "latency_s          " << num(c.latency_s) << "\n";
    }
    if (c.energy_j) os << "energy_j           " << num(*c.energy_j) << "\n";
    for (const auto& l : c.layers)
      os << "  layer " << l.layer_id << ": mac=" << l.mac_cycles << " serial=" << l.serial_cycles
         << " af=" << l.af_cycles << " hidden=" << l.hidden_cycles << "\n";
  }
  return os.str();
}

inline nlohmann::json cycles_json(const sim::CycleReport& r) {
  nlohmann::json j;
  j["mode"] = std::string(sim::to_string(r.mode));
  j["total_cycles"] = r.total_cycles;
  j["overhead_cycles"] = r.overhead_cycles;
  j["clock_hz"] = r.clock_hz;
  j["latency_s"] = r.latency_s;
  j["energy_j"] = r.energy_j ? nlohmann::json(*r.energy_j) : nlohmann::json(nullptr);
  j["scope"] = "compute cycles only; bus/DMA/host transfers excluded";
  j["notes"] = r.notes;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : r.layers)
    j["layers"].push_back({{"layer_id", l.layer_id},
                           {"mac_cycles", l.mac_cycles},
                           {"serial_cycles", l.serial_cycles},
                           {"af_cycles", l.af_cycles},
                           {"hidden_cycles", l.hidden_cycles}});
  return j;
}

inline void write_cycles(const std::filesystem::path& out, const sim::CycleReport& r) {
  io::write_text(out / "cycles.txt", sim::to_key_value(r));
  io::write_text(out / "cycles.json", cycles_json(r).dump(2) + "\n");
}

inline std::string sensitivity_text(const quant::SensitivityReport& rep) {
  std::ostringstream os;
  os << "# layer_id s_sc16 s_sc8 s_l grad_norm n_l\n";
  for (const auto& e : rep)
    os << e.layer_id << " " << num(e.s_sc16) << " " << num(e.s_sc8) << " " << num(e.s_l) << " " << num(e.grad_norm)
       << " " << e.n_l << "\n";
  return os.str();
}

inline quant::SensitivityReport parse_sensitivity(std::istream& in) {
  quant::SensitivityReport rep;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    quant::SensitivityEntry e;
    if (!(ss >> e.layer_id >> e.s_sc16 >> e.s_sc8 >> e.s_l >> e.grad_norm >> e.n_l))
      fail(ErrorCode::ParseError, "sensitivity line " + std::to_string(lineno) + ": expected 6 fields");
    rep.push_back(e);
  }
  return rep;
}

inline dsp::Dataset load_features(const std::string& features, const std::string& raw, const PipelineConfig& pc,
                                  std::uint64_t seed) {
  if (features.empty() == raw.empty()) throw UsageError("give exactly one of --features or --dataset");
  if (!features.empty()) {
    auto d = dsp::load_dataset(features);
    if (d.kind == dsp::FeatureKind::RawAudio) return extract_dataset(d, pc, std::numeric_limits<double>::infinity(), seed);
    return d;
  }
  return extract_dataset(dsp::load_dataset(raw), pc, std::numeric_limits<double>::infinity(), seed);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Built-in invariant suite

inline bool selftest(std::ostream& out) {
  bool ok = true;
  auto check = [&](const char* name, bool pass) {
    out << (pass ? "PASS " : "FAIL ") << name << "\n";
    ok = ok && pass;
  };

  {
    Rng rng(1);
    bool eq = true;
    for (int t = 0; t < 100; ++t) {
      sim::LayerCycleProfile p;
      const auto L = rng.uniform_int(2, 6);
      for (int l = 0; l < L; ++l) p.layers.push_back({l, static_cast<std::uint64_t>(rng.uniform_int(1, 64)), 1});
      for (auto mode : {sim::ScheduleMode::Parallel, sim::ScheduleMode::Reusable})
        eq = eq && sim::simulate_schedule(p, mode).total_cycles == sim::closed_form_cycles(p, mode);
    }
    check("event schedule equals closed-form cycle counts", eq);
  }
  {
    bool rt = true;
    for (std::uint32_t b = 0; b < 0x10000; ++b) {
      const float f = numerics::bf16_to_fp32({static_cast<std::uint16_t>(b)});
      if (std::isnan(f)) continue;
      rt = rt && numerics::fp32_to_bf16(f).bits == b;
    }
    check("bf16 round trip of every non-NaN pattern", rt);
  }
  {
    bool pact = true;
    for (int i = 0; i <= 10000; ++i) {
      const float x = -2.0f + 4.0f * static_cast<float>(i) / 10000.0f;
      pact = pact && quant::pact_clip(x, 1.0f) == std::min(std::max(x, 0.0f), 1.0f);
    }
    check("pact clip equals min(max(x,0),alpha)", pact);
  }
  {
    const auto r = metrics({9, 1, 1, 9});
    check("metrics on a symmetric matrix", std::fabs(r.accuracy - 0.9) < 1e-12 && std::fabs(r.f1 - 0.9) < 1e-12 &&
                                               std::fabs(r.far - 0.1) < 1e-12);
  }
  {
    nn::CnnConfig c;
    c.input_length = 32;
    c.conv_channels = {2, 3};
    c.hidden = 4;
    const auto m = nn::make_cnn(c, 3);
    const auto bytes = nn::encode_model(m);
    check("model container round trip", nn::encode_model(nn::decode_model(bytes)) == bytes);
  }
  {
    auto seg = synth::uav_segment(11);
    const auto noisy = dsp::add_noise(seg, {10.0, 5});
    std::vector<float> n(seg.samples.size());
    for (std::size_t i = 0; i < n.size(); ++i) n[i] = noisy.samples[i] - seg.samples[i];
    const double snr = 10.0 * std::log10(dsp::mean_power(seg.samples) / dsp::mean_power(n));
    check("additive noise hits the requested SNR", std::fabs(snr - 10.0) <= 0.1);
  }
  {
    const double t = numerics::cordic_tanh(0.5f, 16);
    check("cordic tanh(0.5)", std::fabs(t - std::tanh(0.5)) <= 1e-3);
  }
  return ok;
}

// ---------------------------------------------------------------------------
// Dispatcher

/// `args` excludes the program name.
inline int cli_dispatch(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"UAV acoustic detection accelerator emulator", "s8uv"};
  app.require_subcommand(1, 1);

  struct Common {
    std::string out = ".";
    std::uint64_t seed = 1;
    std::string config;
    unsigned threads = 0;
  };
  std::map<CLI::App*, Common> common;
  auto add_common = [&](CLI::App* sub) {
    auto& c = common[sub];
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--seed", c.seed, "root seed");
    sub->add_option("--config", c.config, "key=value defaults for this subcommand's flags");
    sub->add_option("--threads", c.threads, "worker threads (0: all cores)");
    return sub;
  };

  struct FrontEnd {
    std::string feature = "mel";
    std::string pooling = "mean";
    bool no_minmax = false;
  };
  std::map<CLI::App*, FrontEnd> front;
  auto add_front = [&](CLI::App* sub) {
    auto& f = front[sub];
    sub->add_option("--feature", f.feature, "mfcc|mel|psd|zcr|raw");
    sub->add_option("--pooling", f.pooling, "mean|sequence");
    sub->add_flag("--no-minmax", f.no_minmax, "skip per-vector min-max scaling");
  };

  // extract
  auto* extract = add_common(app.add_subcommand("extract", "audio -> feature dataset (features.s8fv)"));
  add_front(extract);
  std::vector<std::string> ex_wav;
  std::string ex_dataset;
  std::size_t ex_synthetic = 0;
  int ex_label = -1;
  std::uint32_t ex_rate = dsp::kCanonicalRate;
  extract->add_option("--wav", ex_wav, "PCM16 mono WAV files (repeatable)");
  extract->add_option("--label", ex_label, "label for --wav input: 0 background, 1 UAV");
  extract->add_option("--rate", ex_rate, "required WAV sample rate");
  extract->add_option("--dataset", ex_dataset, "raw-audio dataset");
  extract->add_option("--synthetic", ex_synthetic, "generate N synthetic segments from --seed");

  // augment
  auto* augment = add_common(app.add_subcommand("augment", "add Gaussian noise to a raw dataset (augmented.s8fv)"));
  std::string au_dataset;
  std::string au_snr;
  augment->add_option("--dataset", au_dataset, "raw-audio dataset");
  augment->add_option("--snr", au_snr, "SNR in dB, or inf");

  // quantize
  auto* quantize = add_common(app.add_subcommand("quantize", "calibrate quantizers and assign precisions (model.s8uv)"));
  std::string q_model, q_calib, q_precision, q_sens, q_low = "int8";
  std::optional<double> q_threshold;
  std::optional<std::size_t> q_budget;
  int q_bits = 8, q_frac = 6;
  double q_wpct = 0.999, q_apct = 1.0;
  quantize->add_option("--model", q_model, "input model");
  quantize->add_option("--calib", q_calib, "feature dataset for calibration");
  quantize->add_option("--precision", q_precision, "fp32|bf16|int8|fxp8 for every layer");
  quantize->add_option("--sensitivity", q_sens, "sensitivity report for policy assignment");
  quantize->add_option("--threshold", q_threshold, "layers with s_l above this run high precision");
  quantize->add_option("--budget", q_budget, "number of highest-s_l layers run high precision");
  quantize->add_option("--low", q_low, "low precision mode: int8|fxp8");
  quantize->add_option("--bits", q_bits, "quantizer bit width");
  quantize->add_option("--frac-bits", q_frac, "FXP8 fractional bits");
  quantize->add_option("--weight-percentile", q_wpct, "weight clip percentile");
  quantize->add_option("--activation-percentile", q_apct, "PACT alpha percentile");

  // sensitivity
  auto* sensitivity = add_common(app.add_subcommand("sensitivity", "layer sensitivity scores (sensitivity.txt)"));
  std::string s_model, s_grads, s_calib;
  std::size_t s_samples = 32;
  sensitivity->add_option("--model", s_model, "input model");
  sensitivity->add_option("--grads", s_grads, "`layer_id grad_norm` calibration file");
  sensitivity->add_option("--calib", s_calib, "feature dataset for finite-difference gradient norms");
  sensitivity->add_option("--samples", s_samples, "calibration records used for finite differences");

  // prune
  auto* prune = add_common(app.add_subcommand("prune", "structured channel pruning (model.s8uv, prune.txt)"));
  std::string p_model;
  std::optional<std::size_t> p_flatten, p_channels;
  prune->add_option("--model", p_model, "input model");
  prune->add_option("--target-flatten", p_flatten, "flatten dimension after pruning");
  prune->add_option("--target-channels", p_channels, "channels kept in the last conv stage");

  // infer
  auto* infer = add_common(app.add_subcommand("infer", "per-record predictions (predictions.csv)"));
  add_front(infer);
  std::string i_model, i_features, i_dataset, i_wav, i_precision;
  int i_frac = 6;
  infer->add_option("--model", i_model, "model");
  infer->add_option("--features", i_features, "feature dataset");
  infer->add_option("--dataset", i_dataset, "raw-audio dataset");
  infer->add_option("--wav", i_wav, "PCM16 mono WAV file");
  infer->add_option("--precision", i_precision, "override every layer: fp32|bf16|int8|fxp8");
  infer->add_option("--frac-bits", i_frac, "FXP8 fractional bits");

  // simulate
  auto* simulate = add_common(app.add_subcommand("simulate", "cycle model (cycles.txt, cycles.json)"));
  std::string m_profile, m_model, m_mode = "reusable", m_ser = "full";
  std::optional<double> m_clock;
  double e_mac = 0.0, e_serial = 0.0, e_af = 0.0;
  bool m_trace = false;
  simulate->add_option("--profile", m_profile, "profile file");
  simulate->add_option("--model", m_model, "derive the profile from a model");
  simulate->add_option("--serialisation", m_ser, "unit|full K_l for model-derived profiles");
  simulate->add_option("--mode", m_mode, "parallel|reusable");
  simulate->add_option("--clock", m_clock, "clock in Hz (default: profile header or 100e6)");
  simulate->add_option("--energy-mac", e_mac, "J per MAC cycle");
  simulate->add_option("--energy-serial", e_serial, "J per serialisation cycle");
  simulate->add_option("--energy-af", e_af, "J per activation cycle");
  simulate->add_flag("--trace", m_trace, "print the FSM event trace");

  // eval
  auto* eval = add_common(app.add_subcommand("eval", "detection metrics (report.txt, metrics.csv)"));
  add_front(eval);
  std::string v_model, v_features, v_dataset, v_precision;
  int v_frac = 6;
  eval->add_option("--model", v_model, "model");
  eval->add_option("--features", v_features, "feature dataset");
  eval->add_option("--dataset", v_dataset, "raw-audio dataset");
  eval->add_option("--precision", v_precision, "override every layer: fp32|bf16|int8|fxp8");
  eval->add_option("--frac-bits", v_frac, "FXP8 fractional bits");

  // sweep
  auto* sweep = add_common(app.add_subcommand("sweep", "accuracy/FAR/MDR versus SNR (curve_snr.csv)"));
  add_front(sweep);
  std::string w_model, w_dataset, w_snr = "-10,-5,0,5,10,20,inf", w_precision;
  int w_frac = 6;
  sweep->add_option("--model", w_model, "model");
  sweep->add_option("--dataset", w_dataset, "raw-audio dataset");
  sweep->add_option("--snr", w_snr, "comma-separated SNR list in dB, inf for clean");
  sweep->add_option("--precision", w_precision, "override every layer: fp32|bf16|int8|fxp8");
  sweep->add_option("--frac-bits", w_frac, "FXP8 fractional bits");

  // report
  auto* report = add_common(app.add_subcommand("report", "metrics, SNR curve and cycle summary"));
  add_front(report);
  std::string r_model, r_features, r_dataset, r_snr, r_precision, r_mode = "reusable", r_ser = "full";
  int r_frac = 6;
  double r_clock = 100e6;
  report->add_option("--model", r_model, "model");
  report->add_option("--features", r_features, "feature dataset");
  report->add_option("--dataset", r_dataset, "raw-audio dataset (enables --snr)");
  report->add_option("--snr", r_snr, "comma-separated SNR list in dB");
  report->add_option("--precision", r_precision, "override every layer: fp32|bf16|int8|fxp8");
  report->add_option("--frac-bits", r_frac, "FXP8 fractional bits");
  report->add_option("--mode", r_mode, "parallel|reusable");
  report->add_option("--serialisation", r_ser, "unit|full");
  report->add_option("--clock", r_clock, "clock in Hz");

  // selftest
  auto* self = add_common(app.add_subcommand("selftest", "built-in invariant suite"));

  CLI::App* chosen = nullptr;
  try {
    if (!args.empty())
      for (auto* sub : app.get_subcommands({}))
        if (sub->get_name() == args.front()) chosen = sub;
    if (chosen) detail::inject_config(*chosen, args, err);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (chosen ? chosen->help() : app.help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << (chosen ? chosen->help() : app.help());
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  }
  chosen = app.get_subcommands().front();
  const Common& c = common[chosen];
  const std::filesystem::path out_dir = c.out;
  const unsigned threads = c.threads ? c.threads : default_threads();
  auto pipeline = [&](CLI::App* sub) {
    const auto& f = front[sub];
    PipelineConfig pc;
    pc.feature = dsp::parse_feature_kind(f.feature);
    pc.front_end.pooling = detail::parse_pooling(f.pooling);
    pc.minmax = !f.no_minmax;
    pc.threads = threads;
    return pc;
  };
  auto require = [](const std::string& v, const char* flag) {
    if (v.empty()) throw detail::UsageError(std::string("missing required ") + flag);
  };

  try {
    if (chosen == extract) {
      const auto pc = pipeline(extract);
      const int sources = (ex_synthetic > 0) + !ex_wav.empty() + !ex_dataset.empty();
      if (sources != 1) throw detail::UsageError("give exactly one of --synthetic, --wav, --dataset");
      dsp::Dataset raw;
      raw.kind = dsp::FeatureKind::RawAudio;
      if (ex_synthetic > 0) {
        raw = synth::golden_dataset(ex_synthetic, c.seed);
      } else if (!ex_dataset.empty()) {
        raw = dsp::load_dataset(ex_dataset);
        raw.raw_sample_rate();
      } else {
        if (ex_label != 0 && ex_label != 1) throw detail::UsageError("--wav input needs --label 0 or 1");
        for (const auto& path : ex_wav) {
          const auto audio = wav::read(path, ex_rate);
          for (auto& seg : dsp::segment(audio.samples, audio.sample_rate_hz))
            raw.add(dsp::normalize(std::move(seg)).samples, static_cast<std::uint8_t>(ex_label));
        }
      }
      const auto d = pc.feature == dsp::FeatureKind::RawAudio ? raw : extract_dataset(raw, pc);
      const auto name = pc.feature == dsp::FeatureKind::RawAudio ? "raw.s8fv" : "features.s8fv";
      dsp::save_dataset(d, out_dir / name);
      out << "records=" << d.size() << " length=" << d.record_length << " kind=" << dsp::to_string(d.kind)
          << " file=" << (out_dir / name).string() << "\n";
    } else if (chosen == augment) {
      require(au_dataset, "--dataset");
      require(au_snr, "--snr");
      const auto snr = detail::parse_snr_list(au_snr);
      if (snr.size() != 1) throw detail::UsageError("--snr takes a single value here");
      auto raw = dsp::load_dataset(au_dataset);
      const auto rate = raw.raw_sample_rate();
      parallel_for(raw.size(), threads, [&](std::size_t i) {
        raw.records[i] = dsp::add_noise({raw.records[i], rate, false}, {snr[0], derive_seed(c.seed, i)}).samples;
      });
      dsp::save_dataset(raw, out_dir / "augmented.s8fv");
      out << "records=" << raw.size() << " snr_db=" << detail::num(snr[0]) << "\n";
    } else if (chosen == quantize) {
      require(q_model, "--model");
      auto m = nn::load_model(q_model);
      if (!q_calib.empty()) {
        const auto calib = dsp::load_dataset(q_calib);
        std::vector<nn::Tensor1D> inputs;
        for (const auto& r : calib.records) inputs.push_back(model_input(m, r));
        nn::calibrate_quantization(m, inputs, {q_bits, q_wpct, q_apct});
      }
      const bool policy = q_threshold.has_value() || q_budget.has_value();
      if (policy && !q_precision.empty()) throw detail::UsageError("--precision excludes --threshold/--budget");
      if (!policy && q_precision.empty() && q_calib.empty())
        throw detail::UsageError("give --calib, --precision, or --sensitivity with --threshold/--budget");
      if (!q_precision.empty()) detail::apply_precision(m, q_precision, q_frac);
      if (policy) {
        require(q_sens, "--sensitivity");
        std::ifstream in(q_sens);
        if (!in) fail(ErrorCode::IoError, "cannot open " + q_sens);
        quant::AssignmentPolicy pol;
        pol.threshold = q_threshold;
        pol.budget = q_budget;
        const auto low = numerics::parse_precision(q_low);
        if (!low || (*low != numerics::PrecisionKind::INT8 && *low != numerics::PrecisionKind::FXP8))
          throw detail::UsageError("--low must be int8 or fxp8");
        pol.low = numerics::PrecisionMode::of(*low, numerics::Fxp8Format{q_frac});
        const auto assignment = quant::assign_precisions(detail::parse_sensitivity(in), pol);
        nn::apply_assignment(m, assignment);
        std::ostringstream os;
        for (const auto& [id, mode] : assignment.modes) os << id << " " << numerics::to_string(mode.kind()) << "\n";
        io::write_text(out_dir / "assignment.txt", os.str());
      }
      nn::save_model(m, out_dir / "model.s8uv");
      for (int id : nn::weighted_layer_ids(m))
        out << "layer " << id << " " << numerics::to_string(m.layers[id].precision.kind())
            << " k=" << detail::num(m.layers[id].weight_quant.k) << " alpha=" << detail::num(m.layers[id].act_quant.alpha)
            << "\n";
    } else if (chosen == sensitivity) {
      require(s_model, "--model");
      if (s_grads.empty() == s_calib.empty()) throw detail::UsageError("give exactly one of --grads or --calib");
      const auto m = nn::load_model(s_model);
      std::map<int, double> grads;
      if (!s_grads.empty()) {
        std::ifstream in(s_grads);
        if (!in) fail(ErrorCode::IoError, "cannot open " + s_grads);
        grads = quant::parse_calibration(in);
      } else {
        const auto calib = dsp::load_dataset(s_calib);
        const std::size_t n = std::min(s_samples, calib.size());
        if (n == 0) fail(ErrorCode::EmptyTensor, "calibration set is empty");
        auto fp = m;
        nn::set_all_precision(fp, numerics::PrecisionMode::fp32());
        nn::ForwardOptions fo;
        fo.keep_snapshots = false;
        for (int id : nn::weighted_layer_ids(fp)) {
          grads[id] = quant::finite_difference_grad_norm(fp.layers[id].weights, [&](std::span<const float> w) {
            auto trial = fp;
            trial.layers[id].weights.assign(w.begin(), w.end());
            double loss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              const auto y = nn::model_forward(trial, model_input(trial, calib.records[i]), fo).output.data();
              loss -= std::log(std::max(1e-12, static_cast<double>(y[calib.labels[i] < y.size() ? calib.labels[i] : 0])));
            }
            return loss / static_cast<double>(n);
          });
        }
      }
      quant::SensitivityReport rep;
      for (int id : nn::weighted_layer_ids(m)) {
        const auto it = grads.find(id);
        if (it == grads.end()) fail(ErrorCode::ParseError, "no gradient norm for layer " + std::to_string(id));
        const auto& w = m.layers[id].weights;
        rep.push_back(quant::layer_sensitivity(id, w, it->second, m.layers[id].weight_quant,
                                               quant::make_weight_config(w, 16), quant::make_weight_config(w, 8)));
      }
      const auto text = detail::sensitivity_text(rep);
      io::write_text(out_dir / "sensitivity.txt", text);
      out << text;
    } else if (chosen == prune) {
      require(p_model, "--model");
      const auto m = nn::load_model(p_model);
      const auto before = prune::flatten_dim(m);
      const auto [pruned, rec] = prune::prune_channels(m, {p_flatten, p_channels});
      nn::save_model(pruned, out_dir / "model.s8uv");
      io::write_text(out_dir / "prune.txt", prune::to_text(rec));
      out << "flatten_dim " << before << " -> " << prune::flatten_dim(pruned) << " (channels "
          << rec.original_channels << " -> " << rec.retained.size() << ")\n";
    } else if (chosen == infer) {
      require(i_model, "--model");
      auto m = nn::load_model(i_model);
      detail::apply_precision(m, i_precision, i_frac);
      const auto pc = pipeline(infer);
      dsp::Dataset feats;
      if (!i_wav.empty()) {
        if (!i_features.empty() || !i_dataset.empty()) throw detail::UsageError("--wav excludes --features/--dataset");
        const auto audio = wav::read(i_wav);
        dsp::Dataset raw;
        raw.kind = dsp::FeatureKind::RawAudio;
        for (auto& seg : dsp::segment(audio.samples, audio.sample_rate_hz))
          raw.add(dsp::normalize(std::move(seg)).samples, 0);
        feats = extract_dataset(raw, pc);
      } else {
        feats = detail::load_features(i_features, i_dataset, pc, c.seed);
      }
      const auto preds = predict(m, feats, threads);
      std::ostringstream os;
      os << "index,label,predicted,p_uav\n";
      for (std::size_t i = 0; i < preds.size(); ++i)
        os << i << "," << int{preds[i].label} << "," << int{preds[i].predicted} << "," << detail::fixed6(preds[i].p_uav)
           << "\n";
      io::write_text(out_dir / "predictions.csv", os.str());
      std::size_t uav = 0;
      for (const auto& p : preds) uav += p.predicted;
      out << "records=" << preds.size() << " predicted_uav=" << uav << "\n";
    } else if (chosen == simulate) {
      if (m_profile.empty() == m_model.empty()) throw detail::UsageError("give exactly one of --profile or --model");
      const auto mode = sim::parse_mode(m_mode);
      if (!mode) throw detail::UsageError("unknown mode '" + m_mode + "' (parallel|reusable)");
      sim::LayerCycleProfile p;
      if (!m_profile.empty()) {
        std::istringstream in(io::read_text(m_profile));
        p = sim::parse_profile(in);
      } else {
        if (m_ser != "unit" && m_ser != "full") throw detail::UsageError("--serialisation must be unit or full");
        p = sim::profile_from_model(nn::load_model(m_model),
                                    m_ser == "unit" ? sim::SerialisationModel::Unit : sim::SerialisationModel::Full);
      }
      auto rep = sim::simulate_schedule(p, *mode, m_trace);
      sim::latency(rep, m_clock.value_or(p.clock_hz.value_or(100e6)));
      if (e_mac != 0.0 || e_serial != 0.0 || e_af != 0.0) sim::energy_estimate(rep, {e_mac, e_serial, e_af});
      detail::write_cycles(out_dir, rep);
      out << sim::to_key_value(rep);
      for (const auto& e : rep.trace)
        out << "trace " << e.cycle << " layer=" << e.layer << " " << sim::to_string(e.state) << " +" << e.duration << "\n";
    } else if (chosen == eval) {
      require(v_model, "--model");
      auto m = nn::load_model(v_model);
      detail::apply_precision(m, v_precision, v_frac);
      const auto pc = pipeline(eval);
      const auto feats = detail::load_features(v_features, v_dataset, pc, c.seed);
      const auto r = evaluate(m, feats, threads);
      io::write_text(out_dir / "report.txt", detail::report_text(r, v_precision, feats.size(), feats.kind));
      io::write_text(out_dir / "metrics.csv", detail::metrics_csv(r));
      out << detail::metrics_csv(r);
    } else if (chosen == sweep) {
      require(w_model, "--model");
      require(w_dataset, "--dataset");
      auto m = nn::load_model(w_model);
      detail::apply_precision(m, w_precision, w_frac);
      const auto snrs = detail::parse_snr_list(w_snr);
      const auto curve = snr_sweep(m, dsp::load_dataset(w_dataset), snrs, c.seed, pipeline(sweep));
      const auto csv = detail::curve_csv(curve);
      io::write_text(out_dir / "curve_snr.csv", csv);
      out << csv;
    } else if (chosen == report) {
      require(r_model, "--model");
      auto m = nn::load_model(r_model);
      detail::apply_precision(m, r_precision, r_frac);
      const auto pc = pipeline(report);
      const auto feats = detail::load_features(r_features, r_dataset, pc, c.seed);
      auto r = evaluate(m, feats, threads);
      if (!r_snr.empty()) {
        if (r_dataset.empty()) throw detail::UsageError("--snr needs a raw --dataset");
        const auto snrs = detail::parse_snr_list(r_snr);
        r.curve = snr_sweep(m, dsp::load_dataset(r_dataset), snrs, c.seed, pc);
        io::write_text(out_dir / "curve_snr.csv", detail::curve_csv(r.curve));
      }
      const auto mode = sim::parse_mode(r_mode);
      if (!mode) throw detail::UsageError("unknown mode '" + r_mode + "' (parallel|reusable)");
      if (r_ser != "unit" && r_ser != "full") throw detail::UsageError("--serialisation must be unit or full");
      auto cyc = sim::simulate_schedule(
          sim::profile_from_model(m, r_ser == "unit" ? sim::SerialisationModel::Unit : sim::SerialisationModel::Full),
          *mode);
      sim::latency(cyc, r_clock);
      detail::write_cycles(out_dir, cyc);
      r.cycles = cyc;
      const auto text = detail::report_text(r, r_precision, feats.size(), feats.kind);
      io::write_text(out_dir / "report.txt", text);
      io::write_text(out_dir / "metrics.csv", detail::metrics_csv(r));
      out << text;
    } else if (chosen == self) {
      return selftest(out) ? kExitOk : kExitInvariant;
    }
  } catch (const detail::UsageError& e) {
    err << "error: " << e.what() << "\n" << chosen->help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: IoError: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInvariant;
  }
  return kExitOk;
}

inline int cli_dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_dispatch(std::move(args));
}

}  // namespace s8uv::app
