#include "rqlvc/rate_control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "rqlvc/errors.hpp"
#include "rqlvc/metrics.hpp"

namespace rqlvc {

void RateControlConfig::validate() const {
  if (sliding_window < 1) throw ContractError("sliding_window must be >= 1");
  if (minigop_len < 1) throw ContractError("minigop_len must be >= 1");
  if (weights.size() != static_cast<std::size_t>(minigop_len)) {
    throw ContractError("weights must have minigop_len entries");
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ContractError("weights must be positive");
  }
  if (gop_length < 0) throw ContractError("gop_length must be >= 0");
  if (q_num < 2) throw ContractError("q_num must be >= 2");
  grid.validate(q_num);
  if (!(prior_weight > 0.0)) throw ContractError("prior_weight must be positive");
  if (!(rate_floor > 0.0)) throw ContractError("rate_floor must be positive");
  LmsState{0.0, 0.0, lms_mu, lms_eta}.validate();
  const bool needs_initial = variant == EstimatorVariant::kHistoryOnly ||
                             variant == EstimatorVariant::kAdaptiveLms;
  if (needs_initial && !initial) {
    throw ContractError("variant " + std::string(to_string(variant)) +
                        " needs initial parameters");
  }
}

double allocate_minigop_unclamped(double r_s, const BudgetState& state,
                                  const RateControlConfig& cfg) {
  if (!(r_s > 0.0)) throw DomainError("sequence target rate must be positive");
  const int frames = state.minigop_frames > 0 ? state.minigop_frames : cfg.minigop_len;
  const double sw = cfg.sliding_window;
  // Rearranged so that an on-budget state yields exactly R_s N.
  const double surplus = r_s * state.n_coded - state.consumed_bits;
  return frames * (r_s + surplus / sw);
}

double allocate_minigop(double r_s, const BudgetState& state, const RateControlConfig& cfg) {
  return std::max(allocate_minigop_unclamped(r_s, state, cfg), cfg.rate_floor);
}

double allocate_frame_unclamped(double r_mg, const BudgetState& state,
                                const RateControlConfig& cfg) {
  const int frames = state.minigop_frames > 0 ? state.minigop_frames : cfg.minigop_len;
  if (state.minigop_pos < 0 || state.minigop_pos >= frames) {
    throw ContractError("miniGOP position out of range");
  }
  const auto first = cfg.weights.begin() + state.minigop_pos;
  const double remaining = std::accumulate(first, cfg.weights.begin() + frames, 0.0);
  const double w = cfg.weights[static_cast<std::size_t>(state.minigop_pos)];
  // The last frame takes the remaining budget exactly.
  if (state.minigop_pos == frames - 1) return r_mg - state.minigop_consumed;
  return (r_mg - state.minigop_consumed) / remaining * w;
}

double allocate_frame(double r_mg, const BudgetState& state, const RateControlConfig& cfg) {
  return std::max(allocate_frame_unclamped(r_mg, state, cfg), cfg.rate_floor);
}

double SequenceTrace::total_bits() const {
  double s = 0.0;
  for (const auto& f : frames) s += f.r_enc;
  return s;
}

double SequenceTrace::mean_rate() const {
  return frames.empty() ? 0.0 : total_bits() / static_cast<double>(frames.size());
}

double SequenceTrace::mean_psnr_db() const {
  if (frames.empty()) return 0.0;
  double s = 0.0;
  for (const auto& f : frames) s += f.psnr_db;
  return s / static_cast<double>(frames.size());
}

double SequenceTrace::mean_deviation_pct() const {
  if (frames.empty()) return 0.0;
  double s = 0.0;
  for (const auto& f : frames) s += f.deviation_pct;
  return s / static_cast<double>(frames.size());
}

double SequenceTrace::sequence_deviation_pct() const {
  if (r_s <= 0.0 || frames.empty()) return 0.0;
  return rate_deviation_pct(r_s * static_cast<double>(frames.size()), total_bits());
}

std::string quality_label(double quality) { return fmt::format("q{:g}", quality); }

namespace {

// Per-variant parameter estimation shared by both evaluation protocols.
class FrameEstimator {
 public:
  FrameEstimator(const RateControlConfig& cfg, const Predictor* predictor)
      : cfg_(cfg), predictor_(predictor) {
    if (cfg_.initial) {
      last_ = *cfg_.initial;
      lms_ = {cfg_.initial->alpha, cfg_.initial->beta, cfg_.lms_mu, cfg_.lms_eta};
    } else {
      lms_ = {0.0, 0.0, cfg_.lms_mu, cfg_.lms_eta};
    }
    if (uses_predictor(cfg_.variant) && predictor_ == nullptr) {
      throw ContractError("variant " + std::string(to_string(cfg_.variant)) +
                          " needs a predictor");
    }
  }

  void begin_gop() { window_.reset(); }

  struct Decision {
    RQParams params;
    double quality = 0.0;
    EncodeResult encoded;
    bool fallback = false;
  };

  Decision decide_and_encode(const FrameProfile& frame, const PredictorContext& ctx,
                             double r_target, std::uint64_t seed, std::uint64_t t) {
    Rng encode_rng = make_rng(seed, t, Stream::kEncode);
    auto encode = [&](double q) { return encode_frame(frame, q, encode_rng, cfg_.q_num); };

    Decision d;
    if (cfg_.variant == EstimatorVariant::kAdaptiveLms) {
      const LmsStep step = lms_step(lms_, r_target, encode, cfg_.q_num);
      d.params = lms_.params();
      d.quality = step.q_real;
      d.encoded = step.encoded;
      lms_ = step.state;
      return d;
    }

    BatchEstimate est;
    switch (cfg_.variant) {
      case EstimatorVariant::kFourPassOracle: {
        Rng probe_rng = make_rng(seed, t, Stream::kProbe);
        const auto probes = multi_pass_probe(frame, cfg_.grid.levels, probe_rng, cfg_.q_num);
        est = estimate_batch(probes, std::span<const RQPoint>{}, fallback());
        break;
      }
      case EstimatorVariant::kPredictorOnly:
      case EstimatorVariant::kFusion: {
        Rng pred_rng = make_rng(seed, t, Stream::kPredictor);
        const auto prior = predictor_->predict(ctx, cfg_.grid, pred_rng);
        const std::span<const RQPoint> observed =
            cfg_.variant == EstimatorVariant::kFusion ? window_.points()
                                                      : std::span<const RQPoint>{};
        est = estimate_batch(prior.points, observed, fallback(), cfg_.prior_weight);
        break;
      }
      case EstimatorVariant::kHistoryOnly:
        est = window_.empty() ? BatchEstimate{fallback(), true}
                              : estimate_batch({}, window_, fallback());
        break;
      case EstimatorVariant::kAdaptiveLms:
        break;
    }
    if (est.used_fallback && !last_) {
      throw ContractError("degenerate fit with no initial parameters configured");
    }
    d.params = est.params;
    d.fallback = est.used_fallback;
    d.quality = predict_quality_for_target(d.params, r_target, cfg_.q_num);
    d.encoded = encode(d.quality);
    window_.add({d.encoded.rate, d.quality});
    last_ = d.params;
    return d;
  }

 private:
  // Placeholder when nothing is known yet; only an error if actually used.
  RQParams fallback() const {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return last_.value_or(RQParams{nan, nan, ModelKind::kLogarithmic});
  }

  const RateControlConfig& cfg_;
  const Predictor* predictor_;
  ObservationWindow window_{true};
  std::optional<RQParams> last_;
  LmsState lms_;
};

int effective_gop(const SequenceProfile& profile, const RateControlConfig& cfg) {
  return cfg.gop_length > 0 ? cfg.gop_length : profile.gop_length;
}

}  // namespace

PredictorContext context_from(const EncodeResult& prev, const FrameProfile& frame) {
  PredictorContext ctx;
  ctx.prev_rate = prev.rate;
  ctx.prev_distortion = prev.distortion;
  ctx.prev_quality = prev.quality_used;
  ctx.content_scalar = frame.complexity();
  ctx.truth = frame;
  return ctx;
}

PredictorContext first_context(double prior_rate, const FrameProfile& frame,
                               const QualityGrid& grid) {
  PredictorContext ctx;
  ctx.prev_rate = prior_rate;
  ctx.prev_distortion = frame.d0;
  ctx.prev_quality = grid.midpoint();
  ctx.content_scalar = frame.complexity();
  ctx.truth = frame;
  return ctx;
}

SequenceTrace run_closed_loop(const SequenceProfile& profile, double r_s,
                              const RateControlConfig& cfg, const Predictor* predictor,
                              std::uint64_t seed) {
  cfg.validate();
  profile.validate();
  if (!(r_s > 0.0)) throw DomainError("sequence target rate must be positive");

  SequenceTrace trace;
  trace.sequence = profile.name;
  trace.method = std::string(to_string(cfg.variant));
  trace.seed = seed;
  trace.r_s = r_s;
  trace.frames.reserve(profile.frames.size());

  FrameEstimator estimator(cfg, predictor);
  BudgetState budget;
  const int n = static_cast<int>(profile.frames.size());
  const int gop = effective_gop(profile, cfg);
  PredictorContext ctx = first_context(r_s, profile.frames.front(), cfg.grid);

  for (int t = 0; t < n; ++t) {
    const FrameProfile& frame = profile.frames[static_cast<std::size_t>(t)];
    if (t % gop == 0) estimator.begin_gop();
    if (t % cfg.minigop_len == 0) {
      budget.minigop_frames = std::min(cfg.minigop_len, n - t);
      budget.minigop_pos = 0;
      budget.minigop_consumed = 0.0;
      budget.minigop_budget = allocate_minigop(r_s, budget, cfg);
    }
    const double r_t = allocate_frame(budget.minigop_budget, budget, cfg);

    const auto d = estimator.decide_and_encode(frame, ctx, r_t, seed, static_cast<std::uint64_t>(t));

    budget.n_coded += 1;
    budget.consumed_bits += d.encoded.rate;
    budget.minigop_consumed += d.encoded.rate;
    budget.minigop_pos += 1;

    FrameRecord rec;
    rec.t = t;
    rec.r_target = r_t;
    rec.q_pred = d.quality;
    rec.r_enc = d.encoded.rate;
    rec.distortion = d.encoded.distortion;
    rec.psnr_db = d.encoded.psnr_db;
    rec.alpha = d.params.alpha;
    rec.beta = d.params.beta;
    rec.deviation_pct = rate_deviation_pct(r_t, d.encoded.rate);
    rec.fallback = d.fallback;
    rec.consumed_bits = budget.consumed_bits;
    trace.frames.push_back(rec);

    if (t + 1 < n) ctx = context_from(d.encoded, profile.frames[static_cast<std::size_t>(t + 1)]);
  }
  return trace;
}

SequenceTrace run_one_step_eval(const SequenceProfile& profile, const RateControlConfig& cfg,
                                const Predictor* predictor, std::uint64_t seed,
                                QualityRange q_range) {
  cfg.validate();
  profile.validate();
  if (!is_valid_quality(q_range.lo, cfg.q_num) || !is_valid_quality(q_range.hi, cfg.q_num) ||
      q_range.hi < q_range.lo) {
    throw DomainError("one-step quality range must lie within [0, q_num - 1]");
  }

  SequenceTrace trace;
  trace.sequence = profile.name;
  trace.method = std::string(to_string(cfg.variant));
  trace.target = fmt::format("q{:g}-{:g}", q_range.lo, q_range.hi);
  trace.seed = seed;

  // Pre-processing pass: random target quality per frame, its rate becomes the
  // target and its encode result the next frame's coding context.
  const int n = static_cast<int>(profile.frames.size());
  std::vector<EncodeResult> pre;
  pre.reserve(profile.frames.size());
  for (int t = 0; t < n; ++t) {
    Rng draw = make_rng(seed, static_cast<std::uint64_t>(t), Stream::kTargetDraw);
    std::uniform_real_distribution<double> uniform(q_range.lo, q_range.hi);
    const double q_target = uniform(draw);
    Rng pre_rng = make_rng(seed, static_cast<std::uint64_t>(t), Stream::kPreEncode);
    pre.push_back(encode_frame(profile.frames[static_cast<std::size_t>(t)], q_target, pre_rng,
                               cfg.q_num));
  }

  FrameEstimator estimator(cfg, predictor);
  const int gop = effective_gop(profile, cfg);
  for (int t = 0; t < n; ++t) {
    const FrameProfile& frame = profile.frames[static_cast<std::size_t>(t)];
    if (t % gop == 0) estimator.begin_gop();
    const double r_target = pre[static_cast<std::size_t>(t)].rate;
    const PredictorContext ctx =
        t == 0 ? first_context(r_target, frame, cfg.grid)
               : context_from(pre[static_cast<std::size_t>(t - 1)], frame);
    const auto d =
        estimator.decide_and_encode(frame, ctx, r_target, seed, static_cast<std::uint64_t>(t));

    FrameRecord rec;
    rec.t = t;
    rec.r_target = r_target;
    rec.q_pred = d.quality;
    rec.r_enc = d.encoded.rate;
    rec.distortion = d.encoded.distortion;
    rec.psnr_db = d.encoded.psnr_db;
    rec.alpha = d.params.alpha;
    rec.beta = d.params.beta;
    rec.deviation_pct = rate_deviation_pct(r_target, d.encoded.rate);
    rec.fallback = d.fallback;
    rec.consumed_bits = (t == 0 ? 0.0 : trace.frames.back().consumed_bits) + d.encoded.rate;
    trace.frames.push_back(rec);
  }
  return trace;
}

SequenceTrace run_constant_quality(const SequenceProfile& profile, double quality,
                                   std::uint64_t seed, int q_num) {
  profile.validate();
  SequenceTrace trace;
  trace.sequence = profile.name;
  trace.method = kAnchorMethod;
  trace.target = quality_label(quality);
  trace.seed = seed;
  double consumed = 0.0;
  for (std::size_t t = 0; t < profile.frames.size(); ++t) {
    Rng rng = make_rng(seed, t, Stream::kAnchor);
    const auto enc = encode_frame(profile.frames[t], quality, rng, q_num);
    consumed += enc.rate;
    FrameRecord rec;
    rec.t = static_cast<int>(t);
    rec.r_target = enc.rate;
    rec.q_pred = quality;
    rec.r_enc = enc.rate;
    rec.distortion = enc.distortion;
    rec.psnr_db = enc.psnr_db;
    rec.deviation_pct = 0.0;
    rec.consumed_bits = consumed;
    trace.frames.push_back(rec);
  }
  return trace;
}

RQParams initial_params(std::span<const SequenceTrace> calibration) {
  if (calibration.empty()) throw ContractError("initial_params needs calibration traces");
  std::vector<RQParams> fits;
  fits.reserve(calibration.size());
  for (const auto& trace : calibration) {
    if (trace.frames.empty()) throw ContractError("calibration trace has no frames");
    fits.push_back({trace.frames.front().alpha, trace.frames.front().beta,
                    ModelKind::kLogarithmic});
  }
  return initial_params(fits);
}

RQParams calibrate_initial_params(std::span<const SequenceProfile> sequences,
                                  const QualityGrid& grid, std::uint64_t seed, int q_num) {
  if (sequences.empty()) throw ContractError("calibration needs at least one sequence");
  std::vector<RQParams> fits;
  fits.reserve(sequences.size());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    sequences[i].validate();
    Rng rng = make_rng(seed, i, Stream::kProbe);
    const auto points = multi_pass_probe(sequences[i].frames.front(), grid.levels, rng, q_num);
    fits.push_back(fit_least_squares(points, ModelKind::kLogarithmic));
  }
  return initial_params(fits);
}

}  // namespace rqlvc
