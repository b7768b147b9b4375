#pragma once

// Evaluation kernels: rate deviation, predictor accuracy, Bjontegaard
// delta-rate, and per-method summaries over sequence traces.

#include <span>
#include <string>
#include <vector>

#include "rqlvc/rate_control.hpp"

namespace rqlvc {

// |(r_target - r_enc) / r_target| * 100.
double rate_deviation_pct(double r_target, double r_enc);

struct RatePair {
  double encoded = 0.0;
  double predicted = 0.0;
};

// Mean of |encoded - predicted| / predicted, in percent. The normalization
// is by the predicted rate.
double predictor_accuracy_pct(std::span<const RatePair> pairs);

struct RdPoint {
  double rate = 0.0;  // bits, bits per frame or bpp; any positive unit
  double psnr_db = 0.0;
};

enum class BdInterpolation {
  kCubic,  // least-squares cubic of log10(rate) in PSNR, integrated analytically
  kPchip,  // monotone piecewise cubic Hermite through the points
};

// Average rate difference of `test` against `anchor` at equal PSNR, percent.
// Negative means the test curve needs fewer bits.
double bd_rate(std::span<const RdPoint> anchor, std::span<const RdPoint> test,
               BdInterpolation interpolation = BdInterpolation::kCubic);

// Coefficients c0..c3 of the least-squares cubic log10(rate) = sum c_k psnr^k.
std::vector<double> fit_log_rate_cubic(std::span<const RdPoint> curve);

inline constexpr const char* kAnchorMethod = "anchor";

struct SummaryRow {
  std::string sequence;
  std::string method;
  std::string target;
  double mean_deviation_pct = 0.0;  // averaged over seeds
  double bd_rate_pct = 0.0;         // per (sequence, method); NaN if unavailable
  int traces = 0;
};

struct SequenceSummary {
  std::string sequence;
  double mean_deviation_pct = 0.0;  // averaged over targets
  double bd_rate_pct = 0.0;
};

struct MethodSummary {
  std::string method;
  double mean_deviation_pct = 0.0;  // averaged over sequences
  double bd_rate_pct = 0.0;
  std::vector<SequenceSummary> per_sequence;
};

struct Summary {
  std::vector<SummaryRow> rows;
  std::vector<MethodSummary> methods;

  const MethodSummary* find(const std::string& method) const;
};

// Anchor traces (method == "anchor") are the constant-quality reference for
// BD-rate and are excluded from the method table. BD-rate for a
// (sequence, method, seed) uses one RD point per target: mean rate and mean
// PSNR over frames. It needs at least four targets and a matching anchor.
// Sequences are ordered by name, methods canonically, targets by quality.
Summary summarize(std::span<const SequenceTrace> traces);

}  // namespace rqlvc
