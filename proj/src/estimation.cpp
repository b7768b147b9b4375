#include "rqlvc/estimation.hpp"

#include <cmath>
#include <string>

#include "rqlvc/errors.hpp"

namespace rqlvc {

std::string_view to_string(EstimatorVariant variant) {
  switch (variant) {
    case EstimatorVariant::kFusion: return "fusion";
    case EstimatorVariant::kPredictorOnly: return "predictor_only";
    case EstimatorVariant::kHistoryOnly: return "history_only";
    case EstimatorVariant::kAdaptiveLms: return "adaptive_lms";
    case EstimatorVariant::kFourPassOracle: return "four_pass";
  }
  return "unknown";
}

EstimatorVariant variant_from_string(std::string_view name) {
  for (auto v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw ContractError("unknown estimator variant '" + std::string(name) + "'");
}

bool uses_predictor(EstimatorVariant variant) {
  return variant == EstimatorVariant::kFusion || variant == EstimatorVariant::kPredictorOnly;
}

void ObservationWindow::add(const RQPoint& point) {
  if (!(point.rate > 0.0) || !std::isfinite(point.rate)) {
    throw DomainError("observed rate must be positive");
  }
  points_.push_back(point);
}

BatchEstimate estimate_batch(std::span<const RQPoint> predicted,
                             std::span<const RQPoint> observed, const RQParams& fallback,
                             double prior_weight) {
  if (predicted.empty() && observed.empty()) {
    throw ContractError("estimate_batch needs predicted or observed points");
  }
  if (!(prior_weight > 0.0) || !std::isfinite(prior_weight)) {
    throw ContractError("prior weight must be positive");
  }
  std::vector<RQPoint> points;
  std::vector<double> weights;
  points.reserve(predicted.size() + observed.size());
  weights.reserve(predicted.size() + observed.size());
  for (const auto& p : predicted) {
    points.push_back(p);
    weights.push_back(prior_weight);
  }
  for (const auto& p : observed) {
    points.push_back(p);
    weights.push_back(1.0);
  }
  try {
    const RQParams fit = fit_logarithmic_weighted(points, weights);
    if (!std::isfinite(fit.alpha) || !std::isfinite(fit.beta) || fit.alpha == 0.0) {
      return {fallback, true};
    }
    return {fit, false};
  } catch (const DegenerateFitError&) {
    return {fallback, true};
  }
}

double predict_quality_for_target(const RQParams& params, double r_target, int q_num) {
  if (!(r_target > 0.0)) throw DomainError("target rate must be positive");
  const double q = params.alpha * std::log(r_target) + params.beta;
  if (std::isnan(q)) throw DomainError("predicted quality is NaN");
  return clamp_quality(q, q_num);
}

void LmsState::validate() const {
  if (!(mu > 0.0) || !std::isfinite(mu) || !(eta > 0.0) || !std::isfinite(eta)) {
    throw ContractError("LMS learning rates must be finite and positive");
  }
}

LmsStep lms_step(const LmsState& state, double r_target, const EncodeFn& encode, int q_num) {
  state.validate();
  if (!(r_target > 0.0)) throw DomainError("target rate must be positive");
  LmsStep out;
  out.q_real = clamp_quality(state.alpha * std::log(r_target) + state.beta, q_num);
  out.encoded = encode(out.q_real);
  const double ln_real = std::log(out.encoded.rate);
  out.q_est = state.alpha * ln_real + state.beta;
  const double err = out.q_real - out.q_est;
  out.state = state;
  if (err != 0.0) {
    out.state.alpha = state.alpha + state.mu * err * ln_real;
    out.state.beta = state.beta + state.eta * err;
  }
  return out;
}

RQParams initial_params(std::span<const RQParams> first_frame_fits) {
  if (first_frame_fits.empty()) {
    throw ContractError("initial_params needs at least one calibration sequence");
  }
  double a = 0.0, b = 0.0;
  for (const auto& p : first_frame_fits) {
    a += p.alpha;
    b += p.beta;
  }
  const auto n = static_cast<double>(first_frame_fits.size());
  return {a / n, b / n, ModelKind::kLogarithmic};
}

}  // namespace rqlvc
