#pragma once

// Online estimation of the logarithmic R-Q law: batch least squares over
// predictor priors plus observed encodes of the current GOP, and the
// adaptive LMS update used as the iterative baseline.

#include <array>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "rqlvc/codec_sim.hpp"
#include "rqlvc/rq_model.hpp"

namespace rqlvc {

enum class EstimatorVariant {
  kFusion,          // predictor priors + observed points
  kPredictorOnly,   // predictor priors only
  kHistoryOnly,     // observed points only
  kAdaptiveLms,     // iterative LMS baseline
  kFourPassOracle,  // multi-pass probe of the current frame
};

inline constexpr std::array<EstimatorVariant, 5> kAllVariants{
    EstimatorVariant::kFusion, EstimatorVariant::kPredictorOnly, EstimatorVariant::kHistoryOnly,
    EstimatorVariant::kAdaptiveLms, EstimatorVariant::kFourPassOracle};

std::string_view to_string(EstimatorVariant variant);
EstimatorVariant variant_from_string(std::string_view name);
bool uses_predictor(EstimatorVariant variant);

// Observed (R, Q) encodes, time ordered. When gop_scoped, the control loop
// resets the window at each GOP boundary.
class ObservationWindow {
 public:
  explicit ObservationWindow(bool gop_scoped = true) : gop_scoped_(gop_scoped) {}

  void add(const RQPoint& point);
  void reset() { points_.clear(); }

  std::span<const RQPoint> points() const { return points_; }
  bool gop_scoped() const { return gop_scoped_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

 private:
  std::vector<RQPoint> points_;
  bool gop_scoped_;
};

struct BatchEstimate {
  RQParams params;
  bool used_fallback = false;
};

// Logarithmic least-squares fit over the union of predicted and observed
// points. Predicted points carry `prior_weight`, observed points weight 1.
// Falls back to `fallback` when the union has fewer than two distinct rates
// or the fit is not finite.
BatchEstimate estimate_batch(std::span<const RQPoint> predicted,
                             std::span<const RQPoint> observed, const RQParams& fallback,
                             double prior_weight = 1.0);

inline BatchEstimate estimate_batch(std::span<const RQPoint> predicted,
                                    const ObservationWindow& observed, const RQParams& fallback,
                                    double prior_weight = 1.0) {
  return estimate_batch(predicted, observed.points(), fallback, prior_weight);
}

// alpha * ln(r_target) + beta, clamped to [0, q_num - 1].
double predict_quality_for_target(const RQParams& params, double r_target,
                                  int q_num = kDefaultQNum);

struct LmsState {
  double alpha = 0.0;
  double beta = 0.0;
  double mu = 0.01;
  double eta = 0.01;

  void validate() const;
  RQParams params() const { return {alpha, beta, ModelKind::kLogarithmic}; }

  friend bool operator==(const LmsState&, const LmsState&) = default;
};

struct LmsStep {
  LmsState state;
  EncodeResult encoded;
  double q_real = 0.0;  // clamped level used for the encode
  double q_est = 0.0;
};

using EncodeFn = std::function<EncodeResult(double quality)>;

LmsStep lms_step(const LmsState& state, double r_target, const EncodeFn& encode,
                 int q_num = kDefaultQNum);

// Mean of first-frame fitted parameters across calibration sequences.
RQParams initial_params(std::span<const RQParams> first_frame_fits);

}  // namespace rqlvc
