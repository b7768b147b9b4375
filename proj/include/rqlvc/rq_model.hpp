#pragma once

// Parametric rate-quality laws for a variable-rate codec.
//
// Rates are bits per frame everywhere in the core; quality is the codec's
// continuous quality level in [0, q_num - 1]. Three families are supported:
//
//   linear       Q = alpha * R + beta
//   exponential  Q = alpha * exp(beta * R)
//   logarithmic  Q = alpha * ln(R) + beta
//
// The logarithmic law is the one used for control; the other two exist for
// model selection by R^2.

#include <span>
#include <string_view>

namespace rqlvc {

inline constexpr int kDefaultQNum = 64;

struct RQPoint {
  double rate = 0.0;     // bits per frame, > 0
  double quality = 0.0;  // quality level
};

enum class ModelKind { kLinear, kExponential, kLogarithmic };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

struct RQParams {
  double alpha = 0.0;
  double beta = 0.0;
  ModelKind kind = ModelKind::kLogarithmic;

  friend bool operator==(const RQParams&, const RQParams&) = default;
};

// Quality predicted by `params` at `rate`. Not clamped.
double eval_quality(const RQParams& params, double rate);

// Rate at which `params` predicts `quality`; exact inverse of eval_quality.
double invert_rate(const RQParams& params, double quality);

// Ordinary least squares in the model's fitting domain:
//   linear       regress Q on R
//   logarithmic  regress Q on ln R
//   exponential  regress ln Q on R (requires Q > 0)
// The result depends only on the multiset of points, not their order.
RQParams fit_least_squares(std::span<const RQPoint> points, ModelKind kind);

// Weighted logarithmic fit minimizing sum w_i (Q_i - alpha ln R_i - beta)^2.
// Weights must be positive and match `points` in length.
RQParams fit_logarithmic_weighted(std::span<const RQPoint> points,
                                  std::span<const double> weights);

// Sum of squared quality residuals, sum (Q_i - eval_quality(R_i))^2.
double sum_squared_residuals(std::span<const RQPoint> points,
                             const RQParams& params);

// Coefficient of determination 1 - SS_res / SS_tot, computed on quality.
double r_squared(std::span<const RQPoint> points, const RQParams& params);

// Log-linear mapping from quality level to Lagrange multiplier.
struct LambdaMap {
  double lambda_min = 85.0;
  double lambda_max = 840.0;
  int q_num = kDefaultQNum;

  void validate() const;
};

double lambda_from_quality(const LambdaMap& map, double quality);

double max_quality(int q_num);
bool is_valid_quality(double quality, int q_num = kDefaultQNum);
double clamp_quality(double quality, int q_num = kDefaultQNum);

}  // namespace rqlvc
