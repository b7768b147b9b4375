#pragma once

// Simulated variable-rate codec. Each frame carries a ground-truth
// logarithmic R-Q law, an optional curvature term that bends the law away
// from a pure logarithm, log-normal encode noise and an exponential
// distortion model used for PSNR.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rqlvc/rq_model.hpp"

namespace rqlvc {

using Rng = std::mt19937_64;

// Independent random streams derived from one experiment seed. Per-frame
// streams keep common random numbers across estimator variants.
enum class Stream : std::uint64_t {
  kSequence = 1,
  kEncode = 2,
  kProbe = 3,
  kPredictor = 4,
  kAnchor = 5,
  kTargetDraw = 6,
  kPreEncode = 7,
  kTraining = 8,
};

Rng make_rng(std::uint64_t seed, std::uint64_t index, Stream stream);

struct FrameProfile {
  double true_alpha = 6.0;
  double true_beta = -20.0;
  double noise_sigma = 0.0;  // std-dev of ln(rate) encode noise
  double d0 = 500.0;
  double decay_k = 0.07;
  // ln R gains curvature * u^2 with u = (q - 31.5) / 31.5. Zero gives the
  // pure logarithmic law.
  double curvature = 0.0;
  int pixels = 416 * 240;

  // Noise-free ln(rate) the codec produces at quality q.
  double log_rate_at(double quality) const;
  double rate_at(double quality) const;
  double distortion_at(double quality) const;
  // Content descriptor: noise-free ln(rate) at the middle quality level.
  double complexity() const;
  RQParams true_law() const { return {true_alpha, true_beta, ModelKind::kLogarithmic}; }
  void validate() const;

  friend bool operator==(const FrameProfile&, const FrameProfile&) = default;
};

struct SequenceProfile {
  std::string name;
  int gop_length = 32;
  std::vector<FrameProfile> frames;

  void validate() const;

  friend bool operator==(const SequenceProfile&, const SequenceProfile&) = default;
};

struct EncodeResult {
  double rate = 0.0;
  double distortion = 0.0;
  double quality_used = 0.0;
  double psnr_db = 0.0;
};

double psnr_from_distortion(double distortion);

EncodeResult encode_frame(const FrameProfile& profile, double quality, Rng& rng,
                          int q_num = kDefaultQNum);

// One encode per level; the observed (R, Q) points in level order.
std::vector<RQPoint> multi_pass_probe(const FrameProfile& profile,
                                      std::span<const double> levels, Rng& rng,
                                      int q_num = kDefaultQNum);

// AR(1) content drift around `base`:
//   alpha_t = mean + rho (alpha_{t-1} - mean) + drift * xi_t, rho = 0.9
// and likewise for beta. Frame 0 equals `base`.
inline constexpr double kDriftAutocorrelation = 0.9;

SequenceProfile generate_sequence(std::uint64_t seed, int n_frames, double drift,
                                  const FrameProfile& base, std::string name = "synthetic",
                                  int gop_length = 32);

// Same process with separate innovation amplitudes for alpha and beta.
// Content changes that scale the rate at every quality move beta by about
// alpha times the log-rate change, so realistic beta drift is much larger
// than alpha drift.
struct DriftSpec {
  double alpha = 0.0;
  double beta = 0.0;
};

SequenceProfile generate_sequence(std::uint64_t seed, int n_frames, DriftSpec drift,
                                  const FrameProfile& base, std::string name = "synthetic",
                                  int gop_length = 32);

}  // namespace rqlvc
