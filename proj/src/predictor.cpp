#include "rqlvc/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "rqlvc/errors.hpp"

namespace rqlvc {
namespace {

constexpr double kMaxLogRate = 700.0;

PredictedPoints make_points(const QualityGrid& grid, std::array<double, kGridSize> rates) {
  rates = enforce_monotone_rates(rates);
  PredictedPoints out;
  for (std::size_t i = 0; i < kGridSize; ++i) {
    out.points[i] = {rates[i], grid.levels[i]};
  }
  return out;
}

const FrameProfile& require_truth(const PredictorContext& context) {
  if (!context.truth) {
    throw ContractError("predictor needs the simulator ground truth in its context");
  }
  return *context.truth;
}

double safe_exp(double x) { return std::exp(std::clamp(x, -kMaxLogRate, kMaxLogRate)); }

}  // namespace

void QualityGrid::validate(int q_num) const {
  for (std::size_t i = 0; i < kGridSize; ++i) {
    if (!is_valid_quality(levels[i], q_num)) {
      throw DomainError("quality grid level outside [0, q_num - 1]");
    }
    if (i > 0 && !(levels[i] > levels[i - 1])) {
      throw DomainError("quality grid levels must be strictly increasing");
    }
  }
}

void PredictorContext::validate(int q_num) const {
  if (!(prev_rate > 0.0) || !std::isfinite(prev_rate)) {
    throw DomainError("predictor context: prev_rate must be positive");
  }
  if (!(prev_distortion >= 0.0)) {
    throw DomainError("predictor context: prev_distortion must be >= 0");
  }
  if (!is_valid_quality(prev_quality, q_num)) {
    throw DomainError("predictor context: prev_quality outside [0, q_num - 1]");
  }
}

std::array<double, kGridSize> PredictedPoints::rates() const {
  std::array<double, kGridSize> r{};
  for (std::size_t i = 0; i < kGridSize; ++i) r[i] = points[i].rate;
  return r;
}

PredictedPoints OraclePredictor::predict(const PredictorContext& context,
                                         const QualityGrid& grid, Rng& /*rng*/) const {
  context.validate();
  const FrameProfile& truth = require_truth(context);
  std::array<double, kGridSize> rates{};
  for (std::size_t i = 0; i < kGridSize; ++i) rates[i] = truth.rate_at(grid.levels[i]);
  return make_points(grid, rates);
}

SyntheticNoisyPredictor::SyntheticNoisyPredictor(std::array<double, kGridSize> sigmas)
    : sigmas_(sigmas) {
  for (double s : sigmas_) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw ContractError("predictor noise sigmas must be finite and non-negative");
    }
  }
}

std::array<double, kGridSize> calibrated_error_targets_pct() {
  constexpr std::array<double, kGridSize> measured{16.12, 14.28, 21.98, 22.31};
  constexpr double overall = 16.87;
  const double mean = std::accumulate(measured.begin(), measured.end(), 0.0) / kGridSize;
  std::array<double, kGridSize> out{};
  for (std::size_t i = 0; i < kGridSize; ++i) out[i] = measured[i] * overall / mean;
  return out;
}

SyntheticNoisyPredictor SyntheticNoisyPredictor::calibrated() {
  const auto targets = calibrated_error_targets_pct();
  std::array<double, kGridSize> sigmas{};
  for (std::size_t i = 0; i < kGridSize; ++i) sigmas[i] = sigma_for_error_pct(targets[i]);
  return SyntheticNoisyPredictor(sigmas);
}

PredictedPoints SyntheticNoisyPredictor::predict(const PredictorContext& context,
                                                 const QualityGrid& grid, Rng& rng) const {
  context.validate();
  const FrameProfile& truth = require_truth(context);
  std::normal_distribution<double> z(0.0, 1.0);
  std::array<double, kGridSize> rates{};
  for (std::size_t i = 0; i < kGridSize; ++i) {
    // Draw even when sigma is zero so the stream position does not depend on
    // the noise configuration.
    const double draw = z(rng);
    rates[i] = safe_exp(truth.log_rate_at(grid.levels[i]) + sigmas_[i] * draw);
  }
  return make_points(grid, rates);
}

double expected_lognormal_error_pct(double sigma) {
  if (!(sigma >= 0.0)) throw DomainError("sigma must be non-negative");
  return 100.0 * std::exp(0.5 * sigma * sigma) * std::erf(sigma / std::sqrt(2.0));
}

double sigma_for_error_pct(double error_pct) {
  if (!(error_pct >= 0.0) || error_pct > 1000.0) {
    throw DomainError("error target outside [0, 1000] percent");
  }
  double lo = 0.0, hi = 4.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (expected_lognormal_error_pct(mid) < error_pct ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::array<double, 4> regressor_features(const PredictorContext& context) {
  return {std::log(context.prev_rate), context.prev_quality, context.content_scalar, 1.0};
}

RegressorPredictor::RegressorPredictor(QualityGrid grid, Coefficients coefficients)
    : grid_(grid), coefficients_(coefficients) {
  grid_.validate();
  for (const auto& row : coefficients_) {
    for (double c : row) {
      if (!std::isfinite(c)) throw ContractError("regressor coefficients must be finite");
    }
  }
}

std::array<double, kGridSize> RegressorPredictor::raw_rates(
    const PredictorContext& context) const {
  const auto x = regressor_features(context);
  std::array<double, kGridSize> rates{};
  for (std::size_t l = 0; l < kGridSize; ++l) {
    double z = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) z += coefficients_[l][k] * x[k];
    rates[l] = safe_exp(z);
  }
  return rates;
}

PredictedPoints RegressorPredictor::predict(const PredictorContext& context,
                                            const QualityGrid& grid, Rng& /*rng*/) const {
  context.validate();
  if (!(grid == grid_)) {
    throw ContractError("regressor was trained on a different quality grid");
  }
  return make_points(grid, raw_rates(context));
}

double mae_loss(std::span<const double> predicted, std::span<const double> observed) {
  if (predicted.size() != kGridSize || observed.size() != kGridSize) {
    throw ContractError("mae_loss expects exactly four predicted and four observed rates");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < kGridSize; ++i) {
    if (!(predicted[i] > 0.0) || !(observed[i] > 0.0) || !std::isfinite(predicted[i]) ||
        !std::isfinite(observed[i])) {
      throw ContractError("mae_loss expects positive finite rates");
    }
    total += std::abs(observed[i] - predicted[i]);
  }
  return total / static_cast<double>(kGridSize);
}

double dataset_mae(const Predictor& predictor, std::span<const TrainingRecord> records,
                   const QualityGrid& grid) {
  if (records.empty()) throw ContractError("dataset_mae needs at least one record");
  Rng rng(0);
  double total = 0.0;
  for (const auto& rec : records) {
    const auto rates = predictor.predict(rec.context, grid, rng).rates();
    total += mae_loss(rates, rec.observed_rates);
  }
  return total / static_cast<double>(records.size());
}

std::array<double, kGridSize> enforce_monotone_rates(std::array<double, kGridSize> rates) {
  // Pool adjacent violators on ln(rate) with unit weights.
  struct Block {
    double sum;
    int count;
    double mean() const { return sum / count; }
  };
  std::vector<Block> blocks;
  for (double r : rates) {
    const double v = (r > 0.0 && std::isfinite(r)) ? std::log(r) : -kMaxLogRate;
    blocks.push_back({std::clamp(v, -kMaxLogRate, kMaxLogRate), 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() >= blocks.back().mean()) {
      Block top = blocks.back();
      blocks.pop_back();
      blocks.back().sum += top.sum;
      blocks.back().count += top.count;
    }
  }
  std::array<double, kGridSize> out{};
  std::size_t i = 0;
  for (const auto& b : blocks) {
    // Untouched values are returned bit for bit.
    const bool keep = b.count == 1 && rates[i] > 0.0 && std::isfinite(rates[i]) &&
                      std::abs(std::log(rates[i])) < kMaxLogRate;
    if (keep) {
      out[i] = rates[i];
      ++i;
      continue;
    }
    for (int k = 0; k < b.count; ++k) out[i++] = std::exp(b.mean());
  }
  // Pooled blocks are flat; spread ties by a relative 1e-9 per step.
  for (std::size_t k = 1; k < kGridSize; ++k) {
    if (!(out[k] > out[k - 1])) out[k] = out[k - 1] * (1.0 + 1e-9);
  }
  return out;
}

namespace {

double level_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    total += std::abs(y(i) - safe_exp(x.row(i).dot(w)));
  }
  return total / static_cast<double>(x.rows());
}

// Minimizes mean |y_i - exp(x_i . w)| by iteratively reweighted Gauss-Newton
// steps on the smoothed absolute value.
Eigen::VectorXd fit_level_mae(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const TrainOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const double scale = y.mean();
  const double delta = options.smoothing * scale;

  // Start from the least-squares fit of ln y; exact for realizable data.
  Eigen::VectorXd w = x.completeOrthogonalDecomposition().solve(y.array().log().matrix());
  double loss = level_loss(x, y, w);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    Eigen::VectorXd pred(n), resid(n), sw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      pred(i) = safe_exp(x.row(i).dot(w));
      resid(i) = y(i) - pred(i);
      sw(i) = std::sqrt(1.0 / std::sqrt(resid(i) * resid(i) + delta * delta));
    }
    Eigen::MatrixXd jac(n, p);
    for (Eigen::Index i = 0; i < n; ++i) jac.row(i) = sw(i) * pred(i) * x.row(i);
    const Eigen::VectorXd rhs = sw.cwiseProduct(resid);
    const Eigen::VectorXd step = jac.completeOrthogonalDecomposition().solve(rhs);
    if (!step.allFinite()) break;

    double t = 1.0;
    double next_loss = loss;
    Eigen::VectorXd next = w;
    while (t > 1e-8) {
      next = w + t * step;
      next_loss = level_loss(x, y, next);
      if (next_loss < loss) break;
      t *= 0.5;
    }
    if (!(next_loss < loss)) break;
    const double improvement = loss - next_loss;
    w = next;
    loss = next_loss;
    if (improvement < options.tolerance * std::max(scale, 1.0)) break;
  }

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(p);
  if (level_loss(x, y, zero) < loss) return zero;
  return w;
}

}  // namespace

RegressorPredictor train_regressor(std::span<const TrainingRecord> records,
                                   const QualityGrid& grid, const TrainOptions& options) {
  if (records.size() < kMinTrainingRecords) {
    throw TrainingError("regressor training needs at least " +
                        std::to_string(kMinTrainingRecords) + " records");
  }
  grid.validate();
  const auto n = static_cast<Eigen::Index>(records.size());
  Eigen::MatrixXd x(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ctx = records[static_cast<std::size_t>(i)].context;
    ctx.validate();
    const auto f = regressor_features(ctx);
    for (Eigen::Index k = 0; k < 4; ++k) x(i, k) = f[static_cast<std::size_t>(k)];
  }

  RegressorPredictor::Coefficients coefficients{};
  for (std::size_t l = 0; l < kGridSize; ++l) {
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = records[static_cast<std::size_t>(i)].observed_rates[l];
      if (!(r > 0.0) || !std::isfinite(r)) {
        throw TrainingError("observed training rates must be positive");
      }
      y(i) = r;
    }
    const Eigen::VectorXd w = fit_level_mae(x, y, options);
    for (std::size_t k = 0; k < 4; ++k) coefficients[l][k] = w(static_cast<Eigen::Index>(k));
  }
  return RegressorPredictor(grid, coefficients);
}

}  // namespace rqlvc
