#pragma once

// Detection metrics with UAV as the positive class.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s8uv/error.hpp"
#include "s8uv/sim.hpp"

namespace s8uv::app {

struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }

  void add(std::uint8_t label, std::uint8_t predicted) noexcept {
    if (label) (predicted ? tp : fn) += 1;
    else (predicted ? fp : tn) += 1;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Which ratios hit a zero denominator and were defined as 0.
struct DegenerateDenominator {
  bool precision = false;
  bool recall = false;
  bool far = false;
  bool mdr = false;

  bool any() const noexcept { return precision || recall || far || mdr; }
  friend bool operator==(const DegenerateDenominator&, const DegenerateDenominator&) = default;
};

struct DetectionMetrics {
  ConfusionMatrix cm;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double far = 0.0;
  double mdr = 0.0;
  DegenerateDenominator degenerate;
};

struct SnrPoint {
  double snr_db = 0.0;
  DetectionMetrics report;
};

struct EvalReport : DetectionMetrics {
  std::vector<SnrPoint> curve;
  std::optional<sim::CycleReport> cycles;
};

inline EvalReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) fail(ErrorCode::EmptyMatrix, "confusion matrix is empty");
  EvalReport r;
  r.cm = cm;
  const auto ratio = [](std::uint64_t num, std::uint64_t den, bool& flag) {
    if (den == 0) {
      flag = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  r.precision = ratio(cm.tp, cm.tp + cm.fp, r.degenerate.precision);
  r.recall = ratio(cm.tp, cm.tp + cm.fn, r.degenerate.recall);
  r.far = ratio(cm.fp, cm.fp + cm.tn, r.degenerate.far);
  r.mdr = ratio(cm.fn, cm.fn + cm.tp, r.degenerate.mdr);
  const double pr = r.precision + r.recall;
  r.f1 = pr > 0.0 ? 2.0 * r.precision * r.recall / pr : 0.0;
  return r;
}

}  // namespace s8uv::app
