#include "rqlvc/rq_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rqlvc/errors.hpp"

namespace rqlvc {
namespace {

struct Sample {
  double x;
  double y;
  double w;
};

struct Line {
  double slope;
  double intercept;
};

// Weighted simple regression y = slope * x + intercept. Samples are sorted
// first so the floating-point summation order is independent of input order.
Line fit_line(std::vector<Sample> samples) {
  std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.w < b.w;
  });
  if (samples.size() < 2 || samples.front().x == samples.back().x) {
    throw DegenerateFitError("least-squares fit needs at least two distinct rates");
  }
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (const auto& s : samples) {
    sw += s.w;
    sx += s.w * s.x;
    sy += s.w * s.y;
  }
  const double mx = sx / sw;
  const double my = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& s : samples) {
    const double dx = s.x - mx;
    sxx += s.w * dx * dx;
    sxy += s.w * dx * (s.y - my);
  }
  if (!(sxx > 0.0)) {
    throw DegenerateFitError("least-squares fit needs at least two distinct rates");
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

void require_positive_rate(double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw DomainError("rate must be positive and finite, got " + std::to_string(rate));
  }
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLinear: return "linear";
    case ModelKind::kExponential: return "exponential";
    case ModelKind::kLogarithmic: return "logarithmic";
  }
  return "unknown";
}

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "linear") return ModelKind::kLinear;
  if (name == "exponential") return ModelKind::kExponential;
  if (name == "logarithmic") return ModelKind::kLogarithmic;
  throw ContractError("unknown model kind '" + std::string(name) + "'");
}

double eval_quality(const RQParams& params, double rate) {
  require_positive_rate(rate);
  switch (params.kind) {
    case ModelKind::kLinear: return params.alpha * rate + params.beta;
    case ModelKind::kExponential: return params.alpha * std::exp(params.beta * rate);
    case ModelKind::kLogarithmic: return params.alpha * std::log(rate) + params.beta;
  }
  throw ContractError("invalid model kind");
}

double invert_rate(const RQParams& params, double quality) {
  double rate = 0.0;
  switch (params.kind) {
    case ModelKind::kLinear:
      if (params.alpha == 0.0) throw DomainError("linear law with alpha = 0 is not invertible");
      rate = (quality - params.beta) / params.alpha;
      break;
    case ModelKind::kExponential:
      if (params.beta == 0.0 || params.alpha == 0.0 || quality / params.alpha <= 0.0) {
        throw DomainError("exponential law not invertible at this quality");
      }
      rate = std::log(quality / params.alpha) / params.beta;
      break;
    case ModelKind::kLogarithmic:
      if (params.alpha == 0.0 || !std::isfinite(params.alpha)) {
        throw DomainError("logarithmic law with alpha = 0 is not invertible");
      }
      rate = std::exp((quality - params.beta) / params.alpha);
      break;
  }
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw DomainError("inverse rate is not a positive finite number");
  }
  return rate;
}

RQParams fit_least_squares(std::span<const RQPoint> points, ModelKind kind) {
  std::vector<Sample> samples;
  samples.reserve(points.size());
  for (const auto& p : points) {
    require_positive_rate(p.rate);
    switch (kind) {
      case ModelKind::kLinear:
        samples.push_back({p.rate, p.quality, 1.0});
        break;
      case ModelKind::kLogarithmic:
        samples.push_back({std::log(p.rate), p.quality, 1.0});
        break;
      case ModelKind::kExponential:
        if (!(p.quality > 0.0)) {
          throw DomainError("exponential fit requires positive qualities");
        }
        samples.push_back({p.rate, std::log(p.quality), 1.0});
        break;
    }
  }
  const Line line = fit_line(std::move(samples));
  if (kind == ModelKind::kExponential) {
    return {std::exp(line.intercept), line.slope, kind};
  }
  return {line.slope, line.intercept, kind};
}

RQParams fit_logarithmic_weighted(std::span<const RQPoint> points,
                                  std::span<const double> weights) {
  if (points.size() != weights.size()) {
    throw ContractError("points and weights differ in length");
  }
  std::vector<Sample> samples;
  samples.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    require_positive_rate(points[i].rate);
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw ContractError("fit weights must be positive and finite");
    }
    samples.push_back({std::log(points[i].rate), points[i].quality, weights[i]});
  }
  const Line line = fit_line(std::move(samples));
  return {line.slope, line.intercept, ModelKind::kLogarithmic};
}

double sum_squared_residuals(std::span<const RQPoint> points, const RQParams& params) {
  std::vector<double> sq;
  sq.reserve(points.size());
  for (const auto& p : points) {
    const double r = p.quality - eval_quality(params, p.rate);
    sq.push_back(r * r);
  }
  std::sort(sq.begin(), sq.end());
  double total = 0.0;
  for (double v : sq) total += v;
  return total;
}

double r_squared(std::span<const RQPoint> points, const RQParams& params) {
  if (points.size() < 2) throw ContractError("r_squared needs at least two points");
  std::vector<double> q;
  q.reserve(points.size());
  for (const auto& p : points) q.push_back(p.quality);
  std::sort(q.begin(), q.end());
  double mean = 0.0;
  for (double v : q) mean += v;
  mean /= static_cast<double>(q.size());
  std::vector<double> dev;
  dev.reserve(q.size());
  for (double v : q) dev.push_back((v - mean) * (v - mean));
  std::sort(dev.begin(), dev.end());
  double ss_tot = 0.0;
  for (double v : dev) ss_tot += v;
  if (!(ss_tot > 0.0)) {
    throw DomainError("r_squared is undefined when all qualities are equal");
  }
  return 1.0 - sum_squared_residuals(points, params) / ss_tot;
}

void LambdaMap::validate() const {
  if (!(lambda_min > 0.0) || !(lambda_max > lambda_min) || !std::isfinite(lambda_max)) {
    throw DomainError("lambda range must satisfy 0 < lambda_min < lambda_max");
  }
  if (q_num < 2) throw DomainError("q_num must be at least 2");
}

double lambda_from_quality(const LambdaMap& map, double quality) {
  map.validate();
  if (!is_valid_quality(quality, map.q_num)) {
    throw DomainError("quality " + std::to_string(quality) + " outside [0, q_num - 1]");
  }
  const double lo = std::log(map.lambda_min);
  const double hi = std::log(map.lambda_max);
  // Endpoints are returned exactly rather than through exp(log(x)).
  if (quality == 0.0) return map.lambda_min;
  if (quality == max_quality(map.q_num)) return map.lambda_max;
  return std::exp(lo + quality / max_quality(map.q_num) * (hi - lo));
}

double max_quality(int q_num) { return static_cast<double>(q_num - 1); }

bool is_valid_quality(double quality, int q_num) {
  return quality >= 0.0 && quality <= max_quality(q_num);
}

double clamp_quality(double quality, int q_num) {
  if (std::isnan(quality)) throw DomainError("quality is NaN");
  return std::clamp(quality, 0.0, max_quality(q_num));
}

}  // namespace rqlvc
