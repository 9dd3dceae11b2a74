#pragma once

// Cycle model of the sequential shared-datapath accelerator.
//
// Every layer walks LOAD -> MAC -> SERIALIZE -> ACTIVATE -> WRITEBACK.
// LOAD and WRITEBACK are zero-cycle control transitions; the other states
// cost:
//
//   Reusable (one datapath, layers strictly in sequence)
//     MAC        t_mac * n_l                      every layer
//     SERIALIZE  t_serial                         every layer but the last
//     ACTIVATE   K_l * t_af                       hidden layers 2..L-1 only:
//                the first layer's activations drain during the pipeline
//                fill of its handoff, the output layer's leave through the
//                output stream
//
//   Parallel (replicated datapaths)
//     MAC        t_mac * n_l, ACTIVATE t_af       layers 1..L-1
//     the output layer's MACs overlap output streaming and are not visible
//
// With unit constants and K_l = 1 the walk reproduces
//   Parallel  sum_{l<L} n_l + L - 1
//   Reusable  sum_{l<=L} n_l + 2L - 3
// which closed_form_cycles evaluates directly. Bus, DMA and host transfer
// cycles are outside the model.

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "s8uv/error.hpp"
#include "s8uv/nn.hpp"

namespace s8uv::sim {

enum class ScheduleMode { Parallel, Reusable };

constexpr std::string_view to_string(ScheduleMode m) noexcept {
  return m == ScheduleMode::Parallel ? "parallel" : "reusable";
}

inline std::optional<ScheduleMode> parse_mode(std::string_view s) noexcept {
  if (s == "parallel") return ScheduleMode::Parallel;
  if (s == "reusable") return ScheduleMode::Reusable;
  return std::nullopt;
}

struct StageConstants {
  std::uint64_t t_mac = 1;
  std::uint64_t t_af = 1;
  std::uint64_t t_serial = 1;

  bool unit() const noexcept { return t_mac == 1 && t_af == 1 && t_serial == 1; }
};

struct LayerProfile {
  int layer_id = 0;
  std::uint64_t n = 1;  // MAC cycles
  std::uint64_t k = 1;  // serialized activation outputs
};

struct LayerCycleProfile {
  std::vector<LayerProfile> layers;
  StageConstants constants{};
  std::optional<double> clock_hz;
};

inline void validate(const LayerCycleProfile& p) {
  const auto& c = p.constants;
  if (c.t_mac == 0 || c.t_af == 0 || c.t_serial == 0)
    fail(ErrorCode::InvalidProfile, "stage constants must be positive");
  for (const auto& l : p.layers)
    if (l.n == 0 || l.k == 0)
      fail(ErrorCode::InvalidProfile, "layer " + std::to_string(l.layer_id) + ": n_l and K_l must be >= 1");
}

inline std::uint64_t closed_form_cycles(const LayerCycleProfile& p, ScheduleMode mode) {
  validate(p);
  bool unit = p.constants.unit();
  for (const auto& l : p.layers) unit = unit && l.k == 1;
  if (!unit) fail(ErrorCode::UnsupportedRegime, "closed forms hold for unit stage constants and K_l = 1 only");
  const std::uint64_t L = p.layers.size();
  if (mode == ScheduleMode::Reusable) {
    if (L < 2) fail(ErrorCode::TooFewLayers, "reusable closed form needs L >= 2");
    std::uint64_t sum = 0;
    for (const auto& l : p.layers) sum += l.n;
    return sum + 2 * L - 3;
  }
  if (L < 1) fail(ErrorCode::TooFewLayers, "parallel closed form needs L >= 1");
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i + 1 < L; ++i) sum += p.layers[i].n;
  return sum + L - 1;
}

// ---------------------------------------------------------------------------
// Event-driven walk

enum class FsmState : std::uint8_t { Load, Mac, Serialize, Activate, Writeback };

constexpr std::string_view to_string(FsmState s) noexcept {
  switch (s) {
    case FsmState::Load: return "LOAD";
    case FsmState::Mac: return "MAC";
    case FsmState::Serialize: return "SERIALIZE";
    case FsmState::Activate: return "ACTIVATE";
    case FsmState::Writeback: return "WRITEBACK";
  }
  return "?";
}

struct TraceEvent {
  std::uint64_t cycle = 0;
  std::size_t layer = 0;
  FsmState state = FsmState::Load;
  std::uint64_t duration = 0;
};

struct LayerCycles {
  int layer_id = 0;
  std::uint64_t mac_cycles = 0;
  std::uint64_t serial_cycles = 0;
  std::uint64_t af_cycles = 0;
  std::uint64_t hidden_cycles = 0;  // overlapped with output streaming, not on the critical path
  std::uint64_t start = 0;
  std::uint64_t end = 0;

  std::uint64_t visible() const noexcept { return mac_cycles + serial_cycles + af_cycles; }
};

struct CycleReport {
  ScheduleMode mode = ScheduleMode::Reusable;
  std::uint64_t total_cycles = 0;
  std::vector<LayerCycles> layers;
  std::uint64_t overhead_cycles = 0;
  double clock_hz = 0.0;
  double latency_s = 0.0;
  std::optional<double> energy_j;
  std::vector<std::string> notes;
  std::vector<TraceEvent> trace;

  friend bool operator==(const CycleReport& a, const CycleReport& b) {
    auto key = [](const CycleReport& r) {
      std::vector<std::uint64_t> v{r.total_cycles, r.overhead_cycles};
      for (const auto& l : r.layers)
        v.insert(v.end(), {l.mac_cycles, l.serial_cycles, l.af_cycles, l.hidden_cycles, l.start, l.end});
      for (const auto& e : r.trace) v.insert(v.end(), {e.cycle, e.layer, static_cast<std::uint64_t>(e.state), e.duration});
      return v;
    };
    return a.mode == b.mode && key(a) == key(b) && a.clock_hz == b.clock_hz && a.latency_s == b.latency_s &&
           a.energy_j == b.energy_j && a.notes == b.notes;
  }
};

namespace detail {

struct Event {
  std::uint64_t time = 0;
  std::uint64_t seq = 0;
  std::size_t layer = 0;
  FsmState state = FsmState::Load;

  bool operator>(const Event& o) const noexcept { return time != o.time ? time > o.time : seq > o.seq; }
};

inline std::uint64_t stage_cycles(const LayerCycleProfile& p, ScheduleMode mode, std::size_t l, FsmState s) {
  const auto& c = p.constants;
  const std::size_t L = p.layers.size();
  const auto& layer = p.layers[l];
  const bool last = l + 1 == L;
  switch (s) {
    case FsmState::Load:
    case FsmState::Writeback: return 0;
    case FsmState::Mac: return c.t_mac * layer.n;
    case FsmState::Serialize: return mode == ScheduleMode::Reusable && !last ? c.t_serial : 0;
    case FsmState::Activate:
      if (mode == ScheduleMode::Parallel) return last ? 0 : c.t_af;
      return (l > 0 && !last) ? layer.k * c.t_af : 0;
  }
  return 0;
}

constexpr FsmState next_state(FsmState s) noexcept {
  switch (s) {
    case FsmState::Load: return FsmState::Mac;
    case FsmState::Mac: return FsmState::Serialize;
    case FsmState::Serialize: return FsmState::Activate;
    case FsmState::Activate: return FsmState::Writeback;
    case FsmState::Writeback: return FsmState::Writeback;
  }
  return FsmState::Writeback;
}

}  // namespace detail

inline CycleReport simulate_schedule(const LayerCycleProfile& p, ScheduleMode mode, bool keep_trace = false) {
  validate(p);
  CycleReport rep;
  rep.mode = mode;
  const std::size_t L = p.layers.size();
  if (L == 0) fail(ErrorCode::TooFewLayers, "empty profile");
  if (mode == ScheduleMode::Reusable && L < 2) fail(ErrorCode::TooFewLayers, "reusable schedule needs L >= 2");
  if (mode == ScheduleMode::Parallel && L == 1)
    rep.notes.push_back("degenerate single-layer parallel schedule: the only layer overlaps output streaming");
  rep.notes.push_back("compute cycles only; bus/DMA/host transfers excluded");
  rep.layers.resize(L);
  for (std::size_t i = 0; i < L; ++i) rep.layers[i].layer_id = p.layers[i].layer_id;

  std::priority_queue<detail::Event, std::vector<detail::Event>, std::greater<>> queue;
  std::uint64_t seq = 0;
  std::uint64_t finish = 0;
  queue.push({0, seq++, 0, FsmState::Load});

  while (!queue.empty()) {
    const detail::Event ev = queue.top();
    queue.pop();
    LayerCycles& lc = rep.layers[ev.layer];
    const bool last = ev.layer + 1 == L;

    // output layer of a parallel pipeline: its MACs run under the output stream
    if (mode == ScheduleMode::Parallel && last && ev.state == FsmState::Mac) {
      lc.hidden_cycles = detail::stage_cycles(p, mode, ev.layer, FsmState::Mac);
      lc.end = ev.time;
      finish = ev.time;
      if (keep_trace) rep.trace.push_back({ev.time, ev.layer, ev.state, 0});
      continue;
    }

    const std::uint64_t d = detail::stage_cycles(p, mode, ev.layer, ev.state);
    if (keep_trace) rep.trace.push_back({ev.time, ev.layer, ev.state, d});
    switch (ev.state) {
      case FsmState::Load: lc.start = ev.time; break;
      case FsmState::Mac: lc.mac_cycles += d; break;
      case FsmState::Serialize: lc.serial_cycles += d; break;
      case FsmState::Activate: lc.af_cycles += d; break;
      case FsmState::Writeback:
        lc.end = ev.time;
        finish = ev.time;
        if (!last) queue.push({ev.time, seq++, ev.layer + 1, FsmState::Load});
        continue;
    }
    queue.push({ev.time + d, seq++, ev.layer, detail::next_state(ev.state)});
  }

  rep.total_cycles = finish;
  std::uint64_t visible = 0;
  for (const auto& l : rep.layers) visible += l.visible();
  rep.overhead_cycles = rep.total_cycles - visible;
  return rep;
}

inline double latency(CycleReport& report, double clock_hz) {
  if (!(clock_hz > 0.0) || !std::isfinite(clock_hz)) fail(ErrorCode::InvalidClock, "clock must be a positive frequency");
  report.clock_hz = clock_hz;
  report.latency_s = static_cast<double>(report.total_cycles) / clock_hz;
  return report.latency_s;
}

/// Joules per cycle spent in each stage.
struct EnergyCoefficients {
  double mac = 0.0;
  double serial = 0.0;
  double af = 0.0;
};

inline double energy_estimate(CycleReport& report, const EnergyCoefficients& c) {
  if (c.mac < 0.0 || c.serial < 0.0 || c.af < 0.0 || !std::isfinite(c.mac + c.serial + c.af))
    fail(ErrorCode::NegativeCoefficient, "energy coefficients must be finite and non-negative");
  double j = 0.0;
  for (const auto& l : report.layers)
    j += static_cast<double>(l.mac_cycles + l.hidden_cycles) * c.mac + static_cast<double>(l.serial_cycles) * c.serial +
         static_cast<double>(l.af_cycles) * c.af;
  report.energy_j = j;
  return j;
}

// ---------------------------------------------------------------------------
// Profiles from models and files

enum class SerialisationModel { Unit, Full };

/// One entry per weighted layer. The MAC bank has one lane per output
/// channel (conv) or unit (dense), so a layer takes one cycle per
/// (input element, tap) pair of an output position: conv in_ch*3*out_len,
/// dense in_dim. Under full serialisation K_l is the element count handed to
/// the next weighted layer (or the model output).
inline LayerCycleProfile profile_from_model(const nn::ModelSpec& m, SerialisationModel ser = SerialisationModel::Full) {
  const auto shapes = nn::infer_shapes(m);
  const auto ids = nn::weighted_layer_ids(m);
  LayerCycleProfile p;
  for (std::size_t w = 0; w < ids.size(); ++w) {
    const auto id = static_cast<std::size_t>(ids[w]);
    LayerProfile lp;
    lp.layer_id = ids[w];
    if (const auto* c = std::get_if<nn::Conv1D>(&m.layers[id].spec))
      lp.n = c->in_ch * c->kernel * shapes[id + 1].length;
    else
      lp.n = std::get<nn::Dense>(m.layers[id].spec).in_dim;
    const std::size_t handoff = w + 1 < ids.size() ? static_cast<std::size_t>(ids[w + 1]) : m.layers.size();
    lp.k = ser == SerialisationModel::Full ? shapes[handoff].size() : 1;
    p.layers.push_back(lp);
  }
  return p;
}

/// key=value header (t_mac, t_af, t_serial, clock_hz), then `layer_id n_l [K_l]`.
inline LayerCycleProfile parse_profile(std::istream& in) {
  LayerCycleProfile p;
  std::string line;
  int lineno = 0;
  bool in_body = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const std::string where = "profile line " + std::to_string(lineno);
    if (auto eq = line.find('='); eq != std::string::npos) {
      if (in_body) fail(ErrorCode::ParseError, where + ": header keys must precede layer lines");
      std::string key = line.substr(first, eq - first);
      key.erase(key.find_last_not_of(" \t") + 1);
      std::istringstream vs(line.substr(eq + 1));
      double v = 0.0;
      std::string extra;
      if (!(vs >> v) || (vs >> extra)) fail(ErrorCode::ParseError, where + ": bad value for " + key);
      if (key == "clock_hz") {
        p.clock_hz = v;
        continue;
      }
      if (v < 1.0 || v != std::floor(v)) fail(ErrorCode::ParseError, where + ": " + key + " must be a positive integer");
      const auto u = static_cast<std::uint64_t>(v);
      if (key == "t_mac") p.constants.t_mac = u;
      else if (key == "t_af") p.constants.t_af = u;
      else if (key == "t_serial") p.constants.t_serial = u;
      else fail(ErrorCode::ParseError, where + ": unknown key " + key);
      continue;
    }
    in_body = true;
    std::istringstream ss(line);
    long long id = 0, n = 0, k = 1;
    std::string extra;
    if (!(ss >> id >> n)) fail(ErrorCode::ParseError, where + ": expected `layer_id n_l K_l`");
    if (!(ss >> k)) {
      ss.clear();
      k = 1;
    }
    if (ss >> extra) fail(ErrorCode::ParseError, where + ": trailing fields");
    if (n < 1 || k < 1) fail(ErrorCode::ParseError, where + ": n_l and K_l must be >= 1");
    p.layers.push_back({static_cast<int>(id), static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(k)});
  }
  return p;
}

inline std::string to_text(const LayerCycleProfile& p) {
  std::ostringstream os;
  os << "t_mac=" << p.constants.t_mac << "\nt_af=" << p.constants.t_af << "\nt_serial=" << p.constants.t_serial << "\n";
  if (p.clock_hz) os << "clock_hz=" << *p.clock_hz << "\n";
  for (const auto& l : p.layers) os << l.layer_id << " " << l.n << " " << l.k << "\n";
  return os.str();
}

/// Structured key=value rendering.
inline std::string to_key_value(const CycleReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "mode=" << to_string(r.mode) << "\n";
  os << "layers=" << r.layers.size() << "\n";
  os << "total_cycles=" << r.total_cycles << "\n";
  os << "overhead_cycles=" << r.overhead_cycles << "\n";
  if (r.clock_hz > 0.0) {
    os << "clock_hz=" << r.clock_hz << "\n";
    os << "latency_s=" << r.latency_s << "\n";
  }
  if (r.energy_j) os << "energy_j=" << *r.energy_j << "\n";
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    const auto& l = r.layers[i];
    const std::string pre = "layer." + std::to_string(i) + ".";
    os << pre << "id=" << l.layer_id << "\n"
       << pre << "mac_cycles=" << l.mac_cycles << "\n"
       << pre << "serial_cycles=" << l.serial_cycles << "\n"
       << pre << "af_cycles=" << l.af_cycles << "\n"
       << pre << "hidden_cycles=" << l.hidden_cycles << "\n";
  }
  for (const auto& n : r.notes) os << "note=" << n << "\n";
  return os.str();
}

}  // namespace s8uv::sim
