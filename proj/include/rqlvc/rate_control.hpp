#pragma once

// Closed-loop rate control: sliding-window miniGOP allocation, per-frame
// weighted split, quality decision from the current R-Q estimate, encode and
// update. Also the one-step evaluation protocol and the constant-quality
// anchor used as the BD-rate reference.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rqlvc/codec_sim.hpp"
#include "rqlvc/estimation.hpp"
#include "rqlvc/predictor.hpp"
#include "rqlvc/rq_model.hpp"

namespace rqlvc {

struct RateControlConfig {
  int sliding_window = 40;
  int minigop_len = 4;
  std::vector<double> weights{1.9, 1.6, 1.3, 1.0};
  int gop_length = 0;  // 0 uses the sequence profile's GOP length
  EstimatorVariant variant = EstimatorVariant::kFusion;
  QualityGrid grid;
  int q_num = kDefaultQNum;
  double prior_weight = 1.0;
  double lms_mu = 0.01;
  double lms_eta = 0.01;
  double rate_floor = 1.0;  // lower clamp for miniGOP and frame budgets, bits
  // Starting law for LMS and the degenerate-fit fallback of the first frame.
  std::optional<RQParams> initial;

  void validate() const;
};

struct BudgetState {
  int n_coded = 0;
  double consumed_bits = 0.0;
  double minigop_budget = 0.0;
  double minigop_consumed = 0.0;
  int minigop_pos = 0;
  // Frames in the current miniGOP; shorter than minigop_len only for the
  // final partial miniGOP of a sequence. Zero means minigop_len.
  int minigop_frames = 0;
};

// Sliding-window miniGOP budget
//   R_mg = (R_s (N_coded + SW) - consumed) / SW * N
// with N the miniGOP length, clamped below at cfg.rate_floor.
double allocate_minigop(double r_s, const BudgetState& state, const RateControlConfig& cfg);
double allocate_minigop_unclamped(double r_s, const BudgetState& state,
                                  const RateControlConfig& cfg);

// Remaining miniGOP budget shared over the remaining weights:
//   R_t = (R_mg - consumed_mg) / sum_{j >= pos} w_j * w_pos
double allocate_frame(double r_mg, const BudgetState& state, const RateControlConfig& cfg);
double allocate_frame_unclamped(double r_mg, const BudgetState& state,
                                const RateControlConfig& cfg);

struct FrameRecord {
  int t = 0;
  double r_target = 0.0;
  double q_pred = 0.0;
  double r_enc = 0.0;
  double distortion = 0.0;
  double psnr_db = 0.0;
  double alpha = 0.0;  // law used to pick q_pred
  double beta = 0.0;
  double deviation_pct = 0.0;
  bool fallback = false;
  double consumed_bits = 0.0;  // budget state after this frame
};

struct SequenceTrace {
  std::string sequence;
  std::string method;
  std::string target;  // label, e.g. "q25" or "q10-30"
  std::uint64_t seed = 0;
  double r_s = 0.0;    // per-frame sequence budget; 0 when not rate controlled
  std::vector<FrameRecord> frames;

  double total_bits() const;
  double mean_rate() const;
  double mean_psnr_db() const;
  double mean_deviation_pct() const;
  // |R_s N - total| / (R_s N) * 100; zero when r_s is zero.
  double sequence_deviation_pct() const;
};

// Coding context of `frame` given the encode result of the frame before it.
PredictorContext context_from(const EncodeResult& prev, const FrameProfile& frame);
// Context of the first frame: the prior rate stands in for the previous
// frame and the grid midpoint for its quality.
PredictorContext first_context(double prior_rate, const FrameProfile& frame,
                               const QualityGrid& grid);

SequenceTrace run_closed_loop(const SequenceProfile& profile, double r_s,
                              const RateControlConfig& cfg, const Predictor* predictor,
                              std::uint64_t seed);

struct QualityRange {
  double lo = 10.0;
  double hi = 30.0;
};

SequenceTrace run_one_step_eval(const SequenceProfile& profile, const RateControlConfig& cfg,
                                const Predictor* predictor, std::uint64_t seed,
                                QualityRange q_range = {});

// Every frame encoded at `quality` without rate control.
SequenceTrace run_constant_quality(const SequenceProfile& profile, double quality,
                                   std::uint64_t seed, int q_num = kDefaultQNum);

std::string quality_label(double quality);

// Mean of the first-frame (alpha, beta) recorded in each trace.
RQParams initial_params(std::span<const SequenceTrace> calibration);

// Multi-pass fit of the first frame of every sequence, averaged.
RQParams calibrate_initial_params(std::span<const SequenceProfile> sequences,
                                  const QualityGrid& grid, std::uint64_t seed,
                                  int q_num = kDefaultQNum);

}  // namespace rqlvc
