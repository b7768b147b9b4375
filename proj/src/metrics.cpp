#include "rqlvc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <string>

#include <Eigen/Dense>

#include "rqlvc/errors.hpp"
#include "rqlvc/estimation.hpp"

namespace rqlvc {

double rate_deviation_pct(double r_target, double r_enc) {
  if (!(r_target > 0.0)) throw DomainError("target rate must be positive");
  return std::abs((r_target - r_enc) / r_target) * 100.0;
}

double predictor_accuracy_pct(std::span<const RatePair> pairs) {
  if (pairs.empty()) throw ContractError("predictor_accuracy_pct needs at least one frame");
  double total = 0.0;
  for (const auto& p : pairs) {
    if (!(p.predicted > 0.0)) throw DomainError("predicted rate must be positive");
    total += std::abs(p.encoded - p.predicted) / p.predicted;
  }
  return total / static_cast<double>(pairs.size()) * 100.0;
}

namespace {

struct Curve {
  std::vector<double> psnr;
  std::vector<double> log_rate;  // log10
};

Curve prepare_curve(std::span<const RdPoint> points, const char* which) {
  if (points.size() < 4) {
    throw ContractError(std::string("BD-rate needs at least four points on the ") + which +
                        " curve");
  }
  std::vector<RdPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const RdPoint& a, const RdPoint& b) { return a.psnr_db < b.psnr_db; });
  Curve c;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (!(sorted[i].rate > 0.0)) throw DomainError("BD-rate needs positive rates");
    if (!std::isfinite(sorted[i].psnr_db)) throw DomainError("BD-rate needs finite PSNR");
    if (i > 0 && !(sorted[i].psnr_db > sorted[i - 1].psnr_db)) {
      throw DomainError("BD-rate needs distinct PSNR values within a curve");
    }
    c.psnr.push_back(sorted[i].psnr_db);
    c.log_rate.push_back(std::log10(sorted[i].rate));
  }
  return c;
}

// Cubic in a centered and scaled variable u = (x - center) / scale.
struct ScaledCubic {
  double center;
  double scale;
  Eigen::Vector4d coef;  // in u

  double integral(double a, double b) const {
    auto prim = [&](double x) {
      const double u = (x - center) / scale;
      return scale * (coef(0) * u + coef(1) * u * u / 2.0 + coef(2) * u * u * u / 3.0 +
                      coef(3) * u * u * u * u / 4.0);
    };
    return prim(b) - prim(a);
  }
};

ScaledCubic fit_cubic(const Curve& c) {
  const auto n = static_cast<Eigen::Index>(c.psnr.size());
  const double lo = c.psnr.front();
  const double hi = c.psnr.back();
  ScaledCubic out{0.5 * (lo + hi), std::max(0.5 * (hi - lo), 1e-12), {}};
  Eigen::MatrixXd v(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (c.psnr[static_cast<std::size_t>(i)] - out.center) / out.scale;
    v(i, 0) = 1.0;
    v(i, 1) = u;
    v(i, 2) = u * u;
    v(i, 3) = u * u * u;
    y(i) = c.log_rate[static_cast<std::size_t>(i)];
  }
  out.coef = v.colPivHouseholderQr().solve(y);
  return out;
}

// Fritsch-Carlson monotone slopes with the usual three-point end conditions.
std::vector<double> pchip_slopes(const Curve& c) {
  const std::size_t n = c.psnr.size();
  std::vector<double> h(n - 1), delta(n - 1), d(n, 0.0);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = c.psnr[k + 1] - c.psnr[k];
    delta[k] = (c.log_rate[k + 1] - c.log_rate[k]) / h[k];
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (delta[k - 1] * delta[k] <= 0.0) continue;
    const double w1 = 2.0 * h[k] + h[k - 1];
    const double w2 = h[k] + 2.0 * h[k - 1];
    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
  }
  auto end_slope = [](double h0, double h1, double m0, double m1) {
    double s = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (s * m0 <= 0.0) {
      s = 0.0;
    } else if (m0 * m1 <= 0.0 && std::abs(s) > std::abs(3.0 * m0)) {
      s = 3.0 * m0;
    }
    return s;
  };
  d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  return d;
}

double pchip_integral(const Curve& c, double a, double b) {
  const auto d = pchip_slopes(c);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < c.psnr.size(); ++k) {
    const double x0 = c.psnr[k];
    const double x1 = c.psnr[k + 1];
    const double lo = std::max(a, x0);
    const double hi = std::min(b, x1);
    if (!(hi > lo)) continue;
    const double h = x1 - x0;
    const double y0 = c.log_rate[k];
    const double m = (c.log_rate[k + 1] - y0) / h;
    const double c2 = (3.0 * m - 2.0 * d[k] - d[k + 1]) / h;
    const double c3 = (d[k] + d[k + 1] - 2.0 * m) / (h * h);
    auto prim = [&](double x) {
      const double s = x - x0;
      return y0 * s + d[k] * s * s / 2.0 + c2 * s * s * s / 3.0 + c3 * s * s * s * s / 4.0;
    };
    total += prim(hi) - prim(lo);
  }
  return total;
}

}  // namespace

std::vector<double> fit_log_rate_cubic(std::span<const RdPoint> curve) {
  const Curve c = prepare_curve(curve, "input");
  const ScaledCubic s = fit_cubic(c);
  // Expand p(u) with u = (x - m) / s into powers of x.
  const double m = s.center;
  const double k = 1.0 / s.scale;
  const double a0 = s.coef(0), a1 = s.coef(1), a2 = s.coef(2), a3 = s.coef(3);
  std::vector<double> out(4);
  out[0] = a0 - a1 * k * m + a2 * k * k * m * m - a3 * k * k * k * m * m * m;
  out[1] = a1 * k - 2.0 * a2 * k * k * m + 3.0 * a3 * k * k * k * m * m;
  out[2] = a2 * k * k - 3.0 * a3 * k * k * k * m;
  out[3] = a3 * k * k * k;
  return out;
}

double bd_rate(std::span<const RdPoint> anchor, std::span<const RdPoint> test,
               BdInterpolation interpolation) {
  const Curve a = prepare_curve(anchor, "anchor");
  const Curve t = prepare_curve(test, "test");
  const double lo = std::max(a.psnr.front(), t.psnr.front());
  const double hi = std::min(a.psnr.back(), t.psnr.back());
  if (!(hi > lo)) throw DomainError("BD-rate curves have no overlapping PSNR range");

  double int_a = 0.0, int_t = 0.0;
  if (interpolation == BdInterpolation::kCubic) {
    int_a = fit_cubic(a).integral(lo, hi);
    int_t = fit_cubic(t).integral(lo, hi);
  } else {
    int_a = pchip_integral(a, lo, hi);
    int_t = pchip_integral(t, lo, hi);
  }
  const double avg_diff = (int_t - int_a) / (hi - lo);
  return (std::pow(10.0, avg_diff) - 1.0) * 100.0;
}

const MethodSummary* Summary::find(const std::string& method) const {
  for (const auto& m : methods) {
    if (m.method == method) return &m;
  }
  return nullptr;
}

namespace {

int method_rank(const std::string& method) {
  for (std::size_t i = 0; i < kAllVariants.size(); ++i) {
    if (to_string(kAllVariants[i]) == method) return static_cast<int>(i);
  }
  return static_cast<int>(kAllVariants.size());
}

// Numeric value of a "q<number>" label for ordering; labels that do not
// parse sort after all numeric ones.
double target_rank(const std::string& label) {
  if (label.size() > 1 && label[0] == 'q') {
    try {
      std::size_t used = 0;
      const double v = std::stod(label.substr(1), &used);
      if (used == label.size() - 1) return v;
    } catch (const std::exception&) {
    }
  }
  return std::numeric_limits<double>::infinity();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double finite_mean(const std::vector<double>& v) {
  std::vector<double> ok;
  for (double x : v) {
    if (std::isfinite(x)) ok.push_back(x);
  }
  return mean_of(ok);
}

}  // namespace

Summary summarize(std::span<const SequenceTrace> traces) {
  if (traces.empty()) throw ContractError("summarize needs at least one trace");

  std::vector<std::string> sequences;
  std::vector<std::string> methods;
  std::vector<std::string> targets;
  auto remember = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& tr : traces) {
    remember(sequences, tr.sequence);
    if (tr.method != kAnchorMethod) remember(methods, tr.method);
    remember(targets, tr.target);
  }
  std::sort(sequences.begin(), sequences.end());
  std::stable_sort(methods.begin(), methods.end(), [](const auto& a, const auto& b) {
    const int ra = method_rank(a), rb = method_rank(b);
    return ra != rb ? ra < rb : a < b;
  });
  std::stable_sort(targets.begin(), targets.end(), [](const auto& a, const auto& b) {
    const double ra = target_rank(a), rb = target_rank(b);
    return ra != rb ? ra < rb : a < b;
  });

  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::vector<double>> deviations;
  // (sequence, method, seed) -> target -> RD point
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::map<std::string, RdPoint>>
      curves;
  for (const auto& tr : traces) {
    if (tr.method != kAnchorMethod) {
      deviations[{tr.sequence, tr.method, tr.target}].push_back(tr.mean_deviation_pct());
    }
    curves[{tr.sequence, tr.method, tr.seed}][tr.target] = {tr.mean_rate(), tr.mean_psnr_db()};
  }

  auto bd_for = [&](const std::string& seq, const std::string& method) {
    std::vector<double> values;
    for (const auto& [key, points] : curves) {
      const auto& [s, m, seed] = key;
      if (s != seq || m != method) continue;
      const auto anchor_it = curves.find({seq, kAnchorMethod, seed});
      if (anchor_it == curves.end()) continue;
      std::vector<RdPoint> test_curve, anchor_curve;
      for (const auto& [target, p] : points) {
        const auto ap = anchor_it->second.find(target);
        if (ap == anchor_it->second.end()) continue;
        test_curve.push_back(p);
        anchor_curve.push_back(ap->second);
      }
      if (test_curve.size() < 4) continue;
      try {
        values.push_back(bd_rate(anchor_curve, test_curve));
      } catch (const std::exception&) {
      }
    }
    return finite_mean(values);
  };

  Summary out;
  for (const auto& method : methods) {
    MethodSummary ms;
    ms.method = method;
    std::vector<double> seq_devs, seq_bds;
    for (const auto& seq : sequences) {
      std::vector<double> target_devs;
      const double bd = bd_for(seq, method);
      for (const auto& target : targets) {
        const auto it = deviations.find({seq, method, target});
        if (it == deviations.end()) continue;
        SummaryRow row;
        row.sequence = seq;
        row.method = method;
        row.target = target;
        row.mean_deviation_pct = mean_of(it->second);
        row.bd_rate_pct = bd;
        row.traces = static_cast<int>(it->second.size());
        out.rows.push_back(row);
        target_devs.push_back(row.mean_deviation_pct);
      }
      if (target_devs.empty()) continue;
      SequenceSummary ss{seq, mean_of(target_devs), bd};
      seq_devs.push_back(ss.mean_deviation_pct);
      seq_bds.push_back(bd);
      ms.per_sequence.push_back(ss);
    }
    ms.mean_deviation_pct = mean_of(seq_devs);
    ms.bd_rate_pct = finite_mean(seq_bds);
    out.methods.push_back(std::move(ms));
  }
  // Rows grouped by sequence first, matching the per-sequence table layout.
  std::stable_sort(out.rows.begin(), out.rows.end(), [&](const auto& a, const auto& b) {
    const auto ia = std::find(sequences.begin(), sequences.end(), a.sequence);
    const auto ib = std::find(sequences.begin(), sequences.end(), b.sequence);
    return ia < ib;
  });
  return out;
}

}  // namespace rqlvc
