#pragma once

// Expected correlation histograms computed in closed form from the same
// source, optics and detector model the Monte Carlo engine samples. Used by
// the analytic run mode and as an oracle for simulated histograms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <vector>

#include "franson/correlator.hpp"
#include "franson/experiment.hpp"
#include "franson/optics.hpp"
#include "franson/source.hpp"

namespace franson {

namespace detail {

/// exp(z^2) erfc(z) for z >= 0.
inline double erfcx(double z) {
  if (z < 5.0) return std::exp(z * z) * std::erfc(z);
  const double inv = 1.0 / (z * z);
  double term = 1.0, sum = 1.0;
  for (int k = 1; k <= 6; ++k) {
    term *= -(2.0 * k - 1.0) * 0.5 * inv;
    sum += term;
  }
  return sum / (z * std::sqrt(std::numbers::pi));
}

/// CDF of X + G with X ~ Exp(scale b) and G ~ N(0, s^2).
inline double emg_cdf(double d, double b, double s) {
  if (s <= 0.0) return d < 0.0 ? 0.0 : -std::expm1(-d / b);
  const double phi = 0.5 * std::erfc(-d / (s * std::numbers::sqrt2));
  const double z = (s / b - d / s) / std::numbers::sqrt2;
  double tail;
  if (z < 5.0) {
    tail = std::exp(s * s / (2.0 * b * b) - d / b) * 0.5 * std::erfc(z);
  } else {
    tail = std::exp(-d * d / (2.0 * s * s)) * 0.5 * erfcx(z);
  }
  return std::clamp(phi - tail, 0.0, 1.0);
}

} // namespace detail

/// Distribution of the delay between two photons whose emission times are
/// independent exponential mixtures, plus Gaussian jitter on both clicks.
/// Tabulated as a CDF on a 1 ps grid.
class DelayShape {
public:
  struct Component {
    double weight;
    double scale;
  };

  /// `first` and `second` are the emission-time mixtures of the photon
  /// recorded first and second in the pair; the delay is second - first.
  DelayShape(const std::vector<Component>& first, const std::vector<Component>& second, double jitter_sigma_ps) {
    double longest = 1.0;
    for (const auto& c : first) longest = std::max(longest, c.scale);
    for (const auto& c : second) longest = std::max(longest, c.scale);
    const double s = jitter_sigma_ps * std::numbers::sqrt2;
    span_ = static_cast<std::int64_t>(std::ceil(25.0 * longest + 12.0 * s + 100.0));
    cdf_.resize(static_cast<std::size_t>(2 * span_ + 1));
    for (std::int64_t i = -span_; i <= span_; ++i) {
      const double d = static_cast<double>(i);
      double F = 0.0;
      for (const auto& x : first)
        for (const auto& y : second) {
          // second - first = +Exp(y) w.p. y/(x+y), else -Exp(x)
          const double w = x.weight * y.weight;
          const double pp = y.scale / (x.scale + y.scale);
          F += w * (pp * detail::emg_cdf(d, y.scale, s) + (1.0 - pp) * (1.0 - detail::emg_cdf(-d, x.scale, s)));
        }
      cdf_[static_cast<std::size_t>(i + span_)] = F;
    }
    total_ = 0.0;
    for (const auto& x : first)
      for (const auto& y : second) total_ += x.weight * y.weight;
  }

  double cdf(double d) const {
    if (d <= static_cast<double>(-span_)) return 0.0;
    if (d >= static_cast<double>(span_)) return total_;
    const double x = d + static_cast<double>(span_);
    const auto i = static_cast<std::size_t>(x);
    const double f = x - static_cast<double>(i);
    return cdf_[i] + f * (cdf_[std::min(i + 1, cdf_.size() - 1)] - cdf_[i]);
  }

  double mass(double lo, double hi) const { return cdf(hi) - cdf(lo); }
  std::int64_t span() const { return span_; }

private:
  std::int64_t span_ = 0;
  double total_ = 1.0;
  std::vector<double> cdf_;
};

/// Expected histograms for one experiment configuration.
class AnalyticModel {
public:
  explicit AnalyticModel(const ExperimentConfig& cfg)
      : cfg_(cfg),
        classical_(mixture(cfg.source), mixture(cfg.source), static_cast<double>(cfg.detectors.timing_jitter_ps)),
        prompt_({{1.0, static_cast<double>(cfg.source.radiative_decay_ps)}},
                {{1.0, static_cast<double>(cfg.source.radiative_decay_ps)}},
                static_cast<double>(cfg.detectors.timing_jitter_ps)) {
    cfg_.validate();
  }

  /// Mean squared pair overlap over all same-cycle single-photon pairs, the
  /// effective gamma^2 entering the fringe.
  double effective_overlap_squared() const {
    const auto& s = cfg_.source;
    const double mismatch = static_cast<double>(s.pulse_separation_ps - cfg_.optics.arm_delay_difference_ps());
    return (1.0 - s.tail_fraction) * (1.0 - s.tail_fraction) * mean_prompt_overlap_squared(s, mismatch) *
           drift_damping();
  }

  double drift_damping() const {
    const auto& o = cfg_.optics;
    return o.drift_mode == DriftMode::independent ? std::exp(-o.drift_sigma * o.drift_sigma) : 1.0;
  }

  /// Expected counts of t_second - t_first over `n_cycles` cycles at the
  /// configured phase.
  ModelHistogram histogram(ChannelPair pair, std::int64_t n_cycles, std::int64_t half_range_ps,
                           std::int64_t bin_width_ps) const {
    validate_pair(pair);
    auto h = ModelHistogram::make(pair, half_range_ps, bin_width_ps);
    const auto& s = cfg_.source;
    const auto& o = cfg_.optics;
    const double p = s.emission_probability;
    const double p2 = two_photon_probability(p, s.g2_zero);
    const double nbar = p + p2;
    const double N = static_cast<double>(n_cycles);
    const PathNetwork net(o.coupler_0, o.coupler_a, o.coupler_b, o.phase_difference(), 0.0);
    const Route ri = Route::from_channel(pair.first), rj = Route::from_channel(pair.second);
    const double eta = cfg_.detectors.efficiency[pair.first - 1] * cfg_.detectors.efficiency[pair.second - 1];
    const std::int64_t T = s.repetition_period_ps, dt = s.pulse_separation_ps, D = o.arm_delay_difference_ps();
    const std::int64_t reach = half_range_ps + classical_.span() + 2 * dt + 2 * D;
    const std::int64_t cmax = std::min<std::int64_t>(reach / T + 1, n_cycles - 1);

    std::map<std::int64_t, double> classical, interfering;
    for (std::int64_t c = -cmax; c <= cmax; ++c) {
      const double cycle_pairs = N - static_cast<double>(std::abs(c));
      for (int ka = 0; ka < 2; ++ka)
        for (int kb = 0; kb < 2; ++kb) {
          const double occupancy = (c == 0 && ka == kb) ? 2.0 * p2 : nbar * nbar;
          if (occupancy == 0.0) continue;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
              const double w = cycle_pairs * occupancy * net.probability(ri, static_cast<Arm>(a)) *
                               net.probability(rj, static_cast<Arm>(b)) * eta;
              classical[c * T + (kb - ka) * dt + (b - a) * D] += w;
            }
        }
    }

    // Fourth-order correction for cycles with exactly one photon per pulse
    // where the early photon took the long arm and the late one the short arm.
    const double single = p - p2;
    const double gamma_sq_mean = (1.0 - s.tail_fraction) * (1.0 - s.tail_fraction) *
                                 mean_prompt_overlap_squared(s, static_cast<double>(dt - D));
    if (single > 0.0 && gamma_sq_mean > 0.0) {
      const double weight = N * single * single * gamma_sq_mean * eta;
      const double damp = drift_damping();
      auto correction = [&](Route early, Route late) {
        const double c = net.interfering_probability(early, late, 1.0) - net.interfering_probability(early, late, 0.0);
        return early == late ? c : c * damp;
      };
      interfering[dt - D] += weight * correction(ri, rj);  // early on first channel
      interfering[D - dt] += weight * correction(rj, ri);  // early on second channel
    }

    // Dark counts pair with everything uniformly.
    const double mu_i = dark_per_cycle(pair.first), mu_j = dark_per_cycle(pair.second);
    const double ph_i = singles_per_cycle(net, pair.first), ph_j = singles_per_cycle(net, pair.second);
    const double flat_per_ps = N * (mu_i * (ph_j + mu_j) + ph_i * mu_j) / static_cast<double>(T);

    for (std::size_t k = 0; k < h.size(); ++k) {
      const double lo = h.bin_lo(k), hi = h.bin_hi(k);
      double v = flat_per_ps * static_cast<double>(bin_width_ps);
      for (const auto& [off, w] : classical) v += w * classical_.mass(lo - off, hi - off);
      for (const auto& [off, w] : interfering) v += w * prompt_.mass(lo - off, hi - off);
      h.counts[k] = std::max(0.0, v);
      h.total_events += h.counts[k];
    }
    return h;
  }

private:
  static std::vector<DelayShape::Component> mixture(const SourceParams& s) {
    return {{1.0 - s.tail_fraction, static_cast<double>(s.radiative_decay_ps)},
            {s.tail_fraction, static_cast<double>(s.tau_slow_ps)}};
  }

  double dark_per_cycle(int channel) const {
    (void)channel;
    return cfg_.detectors.dark_count_rate_hz * 1e-12 * static_cast<double>(cfg_.source.repetition_period_ps);
  }

  double singles_per_cycle(const PathNetwork& net, int channel) const {
    const Route r = Route::from_channel(channel);
    const double nbar =
        cfg_.source.emission_probability + two_photon_probability(cfg_.source.emission_probability, cfg_.source.g2_zero);
    return 2.0 * nbar * cfg_.detectors.efficiency[channel - 1] *
           (net.probability(r, Arm::short_arm) + net.probability(r, Arm::long_arm));
  }

  ExperimentConfig cfg_;
  DelayShape classical_;
  DelayShape prompt_;
};

} // namespace franson
