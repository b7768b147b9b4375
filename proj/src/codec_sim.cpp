#include "rqlvc/codec_sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rqlvc/errors.hpp"

namespace rqlvc {
namespace {

constexpr double kMidQuality = 31.5;

}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t index, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

double FrameProfile::log_rate_at(double quality) const {
  const double u = (quality - kMidQuality) / kMidQuality;
  return (quality - true_beta) / true_alpha + curvature * u * u;
}

double FrameProfile::rate_at(double quality) const { return std::exp(log_rate_at(quality)); }

double FrameProfile::distortion_at(double quality) const {
  return d0 * std::exp(-decay_k * quality);
}

double FrameProfile::complexity() const { return log_rate_at(kMidQuality); }

void FrameProfile::validate() const {
  if (!(true_alpha > 0.0) || !std::isfinite(true_alpha)) {
    throw DomainError("frame profile: true_alpha must be positive");
  }
  if (!std::isfinite(true_beta)) throw DomainError("frame profile: true_beta must be finite");
  if (!(noise_sigma >= 0.0)) throw DomainError("frame profile: noise_sigma must be >= 0");
  if (!(d0 > 0.0)) throw DomainError("frame profile: d0 must be positive");
  if (!(decay_k > 0.0)) throw DomainError("frame profile: decay_k must be positive");
  if (pixels <= 0) throw DomainError("frame profile: pixels must be positive");
  // d ln R / dq = 1/alpha + 2 curvature u / 31.5 must stay positive on |u| <= 1.
  if (2.0 * std::abs(curvature) / kMidQuality >= 1.0 / true_alpha) {
    throw DomainError("frame profile: curvature breaks rate monotonicity");
  }
}

void SequenceProfile::validate() const {
  if (frames.empty()) throw DomainError("sequence profile: no frames");
  if (gop_length < 1) throw DomainError("sequence profile: gop_length must be >= 1");
  for (const auto& f : frames) f.validate();
}

double psnr_from_distortion(double distortion) {
  return 10.0 * std::log10(255.0 * 255.0 / distortion);
}

EncodeResult encode_frame(const FrameProfile& profile, double quality, Rng& rng, int q_num) {
  if (!is_valid_quality(quality, q_num)) {
    throw DomainError("encode quality " + std::to_string(quality) + " outside [0, q_num - 1]");
  }
  double log_rate = profile.log_rate_at(quality);
  if (profile.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, profile.noise_sigma);
    log_rate += noise(rng);
  }
  EncodeResult out;
  out.rate = std::exp(log_rate);
  out.distortion = profile.distortion_at(quality);
  out.quality_used = quality;
  out.psnr_db = psnr_from_distortion(out.distortion);
  return out;
}

std::vector<RQPoint> multi_pass_probe(const FrameProfile& profile,
                                      std::span<const double> levels, Rng& rng, int q_num) {
  if (levels.empty()) throw ContractError("multi_pass_probe needs at least one level");
  std::vector<RQPoint> points;
  points.reserve(levels.size());
  for (double q : levels) {
    points.push_back({encode_frame(profile, q, rng, q_num).rate, q});
  }
  return points;
}

SequenceProfile generate_sequence(std::uint64_t seed, int n_frames, double drift,
                                  const FrameProfile& base, std::string name, int gop_length) {
  return generate_sequence(seed, n_frames, DriftSpec{drift, drift}, base, std::move(name),
                           gop_length);
}

SequenceProfile generate_sequence(std::uint64_t seed, int n_frames, DriftSpec drift,
                                  const FrameProfile& base, std::string name, int gop_length) {
  if (n_frames < 1) throw ContractError("generate_sequence needs n_frames >= 1");
  if (!(drift.alpha >= 0.0) || !(drift.beta >= 0.0)) {
    throw ContractError("drift must be non-negative");
  }
  base.validate();

  SequenceProfile seq;
  seq.name = std::move(name);
  seq.gop_length = gop_length;
  seq.frames.reserve(static_cast<std::size_t>(n_frames));
  seq.frames.push_back(base);

  Rng rng = make_rng(seed, 0, Stream::kSequence);
  std::normal_distribution<double> xi(0.0, 1.0);
  const double rho = kDriftAutocorrelation;
  // Keeps alpha positive under large drift; curvature is rescaled with it so
  // the monotonicity bound on the profile continues to hold.
  const double alpha_floor = 0.2 * base.true_alpha;

  double alpha = base.true_alpha;
  double beta = base.true_beta;
  for (int t = 1; t < n_frames; ++t) {
    const double xa = xi(rng);
    const double xb = xi(rng);
    if (drift.alpha > 0.0) {
      alpha = base.true_alpha + rho * (alpha - base.true_alpha) + drift.alpha * xa;
    }
    if (drift.beta > 0.0) {
      beta = base.true_beta + rho * (beta - base.true_beta) + drift.beta * xb;
    }
    FrameProfile f = base;
    f.true_alpha = std::max(alpha, alpha_floor);
    f.true_beta = beta;
    if (f.curvature != 0.0) {
      const double bound = 0.45 * kMidQuality / f.true_alpha;
      f.curvature = std::clamp(f.curvature, -bound, bound);
    }
    seq.frames.push_back(f);
  }
  seq.validate();
  return seq;
}

}  // namespace rqlvc
