#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "rqlvc/errors.hpp"
#include "rqlvc/metrics.hpp"

using namespace rqlvc;

namespace {

// Lagrange interpolant through exactly four (psnr, log10 rate) points.
double lagrange(const std::vector<RdPoint>& c, double x) {
  double y = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    double l = 1.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (j != i) l *= (x - c[j].psnr_db) / (c[i].psnr_db - c[j].psnr_db);
    }
    y += std::log10(c[i].rate) * l;
  }
  return y;
}

double trapezoid(const std::vector<RdPoint>& c, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = 0.5 * (lagrange(c, a) + lagrange(c, b));
  for (int i = 1; i < n; ++i) s += lagrange(c, a + i * h);
  return s * h;
}

double bd_oracle(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test) {
  auto range = [](const std::vector<RdPoint>& c) {
    const auto [lo, hi] = std::minmax_element(c.begin(), c.end(), [](auto& p, auto& q) {
      return p.psnr_db < q.psnr_db;
    });
    return std::pair{lo->psnr_db, hi->psnr_db};
  };
  const auto [a0, a1] = range(anchor);
  const auto [t0, t1] = range(test);
  const double lo = std::max(a0, t0), hi = std::min(a1, t1);
  const int n = 200000;
  const double diff = (trapezoid(test, lo, hi, n) - trapezoid(anchor, lo, hi, n)) / (hi - lo);
  return (std::pow(10.0, diff) - 1.0) * 100.0;
}

std::vector<RdPoint> scaled(std::vector<RdPoint> c, double k) {
  for (auto& p : c) p.rate *= k;
  return c;
}

SequenceTrace constant_trace(const std::string& seq, const std::string& method,
                             const std::string& target, std::uint64_t seed, double dev,
                             int n = 10) {
  SequenceTrace t;
  t.sequence = seq;
  t.method = method;
  t.target = target;
  t.seed = seed;
  for (int i = 0; i < n; ++i) {
    FrameRecord r;
    r.t = i;
    r.r_target = 1000.0;
    r.r_enc = 1000.0 * (1.0 + dev / 100.0);
    r.deviation_pct = dev;
    r.psnr_db = 35.0;
    t.frames.push_back(r);
  }
  return t;
}

const std::vector<RdPoint> kAnchor{{1000, 30.1}, {2100, 33.0}, {4500, 36.2}, {9800, 39.0}};
const std::vector<RdPoint> kTest{{900, 30.5}, {1800, 33.4}, {4100, 36.0}, {9000, 39.6}};

}  // namespace

TEST_CASE("rate deviation") {
  CHECK(rate_deviation_pct(1000, 1000) == 0.0);
  CHECK(rate_deviation_pct(1000, 900) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(rate_deviation_pct(1000, 1100) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK_THROWS_AS(rate_deviation_pct(0, 1), DomainError);
  CHECK_THROWS_AS(rate_deviation_pct(-5, 1), DomainError);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(1, 1e6), c(1e-3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double t = u(rng), e = u(rng), k = c(rng);
    CHECK(rate_deviation_pct(t, t) == 0.0);
    CHECK(std::abs(rate_deviation_pct(k * t, k * e) - rate_deviation_pct(t, e)) < 1e-9);
  }
}

TEST_CASE("predictor accuracy") {
  const std::vector<RatePair> exact{{100, 100}, {7, 7}};
  CHECK(predictor_accuracy_pct(exact) == 0.0);
  const std::vector<RatePair> one{{120, 100}};
  CHECK(predictor_accuracy_pct(one) == doctest::Approx(20.0).epsilon(1e-14));
  std::vector<RatePair> two{{120, 100}, {90, 100}};
  CHECK(std::abs(predictor_accuracy_pct(two) - 15.0) < 1e-12);
  std::reverse(two.begin(), two.end());
  CHECK(std::abs(predictor_accuracy_pct(two) - 15.0) < 1e-12);
  // Normalized by the predicted rate, not the encoded one.
  const std::vector<RatePair> asym{{100, 50}};
  CHECK(predictor_accuracy_pct(asym) == doctest::Approx(100.0));
  const std::vector<RatePair> bad{{100, 0}};
  CHECK_THROWS_AS(predictor_accuracy_pct(bad), DomainError);
  CHECK_THROWS(predictor_accuracy_pct(std::span<const RatePair>{}));
}

TEST_CASE("bd-rate identities") {
  for (auto interp : {BdInterpolation::kCubic, BdInterpolation::kPchip}) {
    CHECK(std::abs(bd_rate(kAnchor, kAnchor, interp)) < 1e-9);
    CHECK(std::abs(bd_rate(kAnchor, scaled(kAnchor, 1.10), interp) - 10.0) < 1e-6);
    // log shift by +d then -d composes to zero
    const auto up = scaled(kAnchor, 1.37);
    const double fwd = std::log10(1.0 + bd_rate(kAnchor, up, interp) / 100.0);
    const double back = std::log10(1.0 + bd_rate(up, kAnchor, interp) / 100.0);
    CHECK(std::abs(fwd + back) < 1e-9);
  }
}

TEST_CASE("bd-rate matches numerical integration of the fitted cubics") {
  const double got = bd_rate(kAnchor, kTest);
  const double want = bd_oracle(kAnchor, kTest);
  CHECK(std::abs(got - want) < 1e-6);
  CHECK(got < 0.0);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> step(1.5, 4.0), slope(0.08, 0.2), jitter(-0.02, 0.02);
  for (int i = 0; i < 50; ++i) {
    std::vector<RdPoint> a, t;
    double pa = 28.0, pt = 28.5;
    const double s = slope(rng);
    for (int k = 0; k < 4; ++k) {
      a.push_back({std::pow(10.0, 2.5 + s * (pa - 28) + jitter(rng)), pa});
      t.push_back({std::pow(10.0, 2.45 + s * (pt - 28) + jitter(rng)), pt});
      pa += step(rng);
      pt += step(rng);
    }
    CHECK(std::abs(bd_rate(a, t) - bd_oracle(a, t)) < 1e-6);
  }
}

TEST_CASE("bd-rate cubic coefficients reproduce an exact cubic") {
  std::vector<RdPoint> c;
  for (double p : {30.0, 32.0, 35.0, 37.0, 40.0}) {
    c.push_back({std::pow(10.0, 1.0 + 0.1 * p - 0.001 * p * p + 1e-5 * p * p * p), p});
  }
  const auto k = fit_log_rate_cubic(c);
  CHECK(k[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(k[1] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(k[2] == doctest::Approx(-0.001).epsilon(1e-6));
  CHECK(k[3] == doctest::Approx(1e-5).epsilon(1e-6));
}

TEST_CASE("pchip and cubic agree on log-linear curves") {
  std::vector<RdPoint> a, t;
  for (double p : {30.0, 33.0, 36.0, 39.0, 42.0}) {
    a.push_back({std::pow(10.0, 0.1 * p), p});
    t.push_back({std::pow(10.0, 0.1 * (p + 0.5) - 0.03), p + 0.5});
  }
  const double cubic = bd_rate(a, t);
  const double pchip = bd_rate(a, t, BdInterpolation::kPchip);
  CHECK(std::abs(cubic - pchip) < 1e-9);
  CHECK(cubic == doctest::Approx((std::pow(10.0, -0.03) - 1.0) * 100.0).epsilon(1e-10));
}

TEST_CASE("bd-rate errors") {
  const std::vector<RdPoint> three{{1, 30}, {2, 31}, {3, 32}};
  CHECK_THROWS(bd_rate(three, kAnchor));
  const std::vector<RdPoint> far{{1, 50}, {2, 51}, {3, 52}, {4, 53}};
  CHECK_THROWS_AS(bd_rate(kAnchor, far), DomainError);
  const std::vector<RdPoint> neg{{-1, 30}, {2, 31}, {3, 32}, {4, 33}};
  CHECK_THROWS_AS(bd_rate(neg, kAnchor), DomainError);
}

TEST_CASE("summary of a constant-deviation trace") {
  const std::vector<SequenceTrace> traces{constant_trace("a", "fusion", "q25", 0, 2.0)};
  const auto s = summarize(traces);
  REQUIRE(s.methods.size() == 1);
  CHECK(s.methods[0].mean_deviation_pct == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(std::isnan(s.methods[0].bd_rate_pct));
  REQUIRE(s.rows.size() == 1);
  CHECK(s.rows[0].traces == 1);
  CHECK(s.find("fusion") != nullptr);
  CHECK(s.find("adaptive_lms") == nullptr);
  CHECK_THROWS(summarize(std::span<const SequenceTrace>{}));
}

TEST_CASE("summary averages seeds, then targets, then sequences") {
  std::vector<SequenceTrace> traces;
  std::vector<double> all;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dev(0, 20);
  for (const char* seq : {"s1", "s2", "s3"}) {
    for (const char* target : {"q10", "q25"}) {
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const double d = dev(rng);
        traces.push_back(constant_trace(seq, "history_only", target, seed, d));
        all.push_back(d);
      }
    }
  }
  const auto s = summarize(traces);
  REQUIRE(s.methods.size() == 1);
  double sum = 0.0;
  for (double d : all) sum += d;
  // Equal counts everywhere: the nested mean equals the global mean.
  CHECK(s.methods[0].mean_deviation_pct == doctest::Approx(sum / all.size()).epsilon(1e-12));
  double seq_mean = 0.0;
  for (const auto& p : s.methods[0].per_sequence) seq_mean += p.mean_deviation_pct;
  CHECK(seq_mean / 3 == doctest::Approx(s.methods[0].mean_deviation_pct).epsilon(1e-12));
  CHECK(s.rows.size() == 6);
  CHECK(s.rows.front().sequence == "s1");
  CHECK(s.rows.front().target == "q10");
}

TEST_CASE("summary bd-rate against the constant-quality anchor") {
  std::vector<SequenceTrace> traces;
  const char* labels[] = {"q10", "q25", "q40", "q55"};
  for (int k = 0; k < 4; ++k) {
    auto a = constant_trace("s", kAnchorMethod, labels[k], 0, 0.0);
    auto f = constant_trace("s", "fusion", labels[k], 0, 1.0);
    for (auto& r : a.frames) {
      r.r_enc = kAnchor[static_cast<std::size_t>(k)].rate;
      r.psnr_db = kAnchor[static_cast<std::size_t>(k)].psnr_db;
    }
    for (auto& r : f.frames) {
      r.r_enc = kTest[static_cast<std::size_t>(k)].rate;
      r.psnr_db = kTest[static_cast<std::size_t>(k)].psnr_db;
    }
    traces.push_back(a);
    traces.push_back(f);
  }
  const auto s = summarize(traces);
  REQUIRE(s.methods.size() == 1);  // the anchor is not a method row
  CHECK(s.methods[0].bd_rate_pct == doctest::Approx(bd_rate(kAnchor, kTest)).epsilon(1e-12));
}

TEST_CASE("summary leaves missing methods out") {
  std::vector<SequenceTrace> traces{constant_trace("a", "fusion", "q25", 0, 2.0),
                                    constant_trace("a", "adaptive_lms", "q25", 0, 4.0)};
  const auto s = summarize(traces);
  CHECK(s.methods.size() == 2);
  CHECK(s.find("predictor_only") == nullptr);
  CHECK(s.methods[0].method == "fusion");
}
