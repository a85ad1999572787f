#pragma once

// Pulsed quantum-dot single-photon source: two excitation pulses per cycle,
// a prompt (coherent) and a delayed (incoherent) emission component, and rare
// extra photons that set g2(0).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "franson/error.hpp"

namespace franson {

/// Interference between two photons is only evaluated when their arrival
/// times differ by less than this many coherence times.
inline constexpr double kWavepacketGate = 5.0;

struct SourceParams {
  double emission_probability = 0.5;
  double g2_zero = 0.015;
  double tail_fraction = 0.08;
  std::int64_t tau_fast_ps = 170;       ///< measured (detector-limited) prompt decay
  std::int64_t tau_slow_ps = 2600;      ///< delayed dark-state component
  std::int64_t radiative_decay_ps = 2;  ///< decay used to sample prompt emission times
  std::int64_t coherence_time_ps = 175;
  double intrinsic_overlap = 0.949;
  std::int64_t pulse_separation_ps = 1800;
  std::int64_t repetition_period_ps = 12500;

  void validate() const {
    detail::require_unit_interval(emission_probability, "source.emission_probability");
    detail::require_unit_interval(g2_zero, "source.g2_zero");
    detail::require_unit_interval(tail_fraction, "source.tail_fraction");
    detail::require_unit_interval(intrinsic_overlap, "source.intrinsic_overlap");
    detail::require(tau_fast_ps > 0, "source.tau_fast_ps", "must be > 0");
    detail::require(tau_slow_ps > 0, "source.tau_slow_ps", "must be > 0");
    detail::require(tau_fast_ps < tau_slow_ps, "source.tau_fast_ps", "must be < source.tau_slow_ps");
    detail::require(radiative_decay_ps > 0, "source.radiative_decay_ps", "must be > 0");
    detail::require(coherence_time_ps > 0, "source.coherence_time_ps", "must be > 0");
    detail::require(pulse_separation_ps > 0, "source.pulse_separation_ps", "must be > 0");
    detail::require(repetition_period_ps > 0, "source.repetition_period_ps", "must be > 0");
    detail::require(2 * pulse_separation_ps < repetition_period_ps, "source.pulse_separation_ps",
                    "2 x pulse separation must be < source.repetition_period_ps");
    detail::require(g2_zero * emission_probability <= 0.5, "source.g2_zero",
                    "g2_zero x emission_probability must be <= 0.5");
  }
};

/// Probability that a pulse carries two photons, chosen so that an HBT
/// measurement of the source returns `g2_zero`:
///   2 P2 / (p + P2)^2 = g2_zero.
inline double two_photon_probability(double emission_probability, double g2_zero) {
  const double gp = g2_zero * emission_probability;
  if (gp <= 0.0) return 0.0;
  return g2_zero * emission_probability * emission_probability / ((1.0 - gp) + std::sqrt(1.0 - 2.0 * gp));
}

struct EmissionEvent {
  int pulse_index = 0;
  double emission_time = 0.0; ///< ps after the excitation pulse
  bool coherent = true;
  bool extra_photon = false;
};

/// Per-cycle emissions; at most two photons per pulse.
struct CycleEmissions {
  std::array<EmissionEvent, 4> events{};
  int count = 0;

  void push(const EmissionEvent& e) { events[count++] = e; }
  const EmissionEvent* begin() const { return events.data(); }
  const EmissionEvent* end() const { return events.data() + count; }
  std::size_t size() const { return static_cast<std::size_t>(count); }
  bool empty() const { return count == 0; }
  const EmissionEvent& operator[](std::size_t i) const { return events[i]; }
};

inline double absolute_emission_time(const SourceParams& params, std::int64_t cycle_index,
                                     const EmissionEvent& e) {
  return static_cast<double>(cycle_index * params.repetition_period_ps +
                             e.pulse_index * params.pulse_separation_ps) +
         e.emission_time;
}

/// Draws one cycle's emissions into `out`. Each excitation pulse emits with
/// `emission_probability`; the photon is prompt and coherent with probability
/// 1 - tail_fraction, otherwise delayed and incoherent. An emitting pulse
/// carries an incoherent extra photon with probability P2 / p (see
/// `two_photon_probability`). `pulses` is 2 for the interferometer and 1 for
/// a single-pulse HBT measurement.
template <class URBG>
void sample_emissions(const SourceParams& params, URBG& rng, CycleEmissions& out, int pulses = 2) {
  out.count = 0;
  const double p = params.emission_probability;
  if (p <= 0.0) return;
  const double extra = two_photon_probability(p, params.g2_zero) / p;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> prompt(1.0 / static_cast<double>(params.radiative_decay_ps));
  std::exponential_distribution<double> delayed(1.0 / static_cast<double>(params.tau_slow_ps));
  auto draw_time = [&](bool& is_prompt) {
    is_prompt = u(rng) >= params.tail_fraction;
    return is_prompt ? prompt(rng) : delayed(rng);
  };
  for (int k = 0; k < pulses; ++k) {
    if (u(rng) >= p) continue;
    bool is_prompt = true;
    const double t = draw_time(is_prompt);
    out.push({k, t, is_prompt, false});
    if (extra > 0.0 && u(rng) < extra) {
      bool unused = true;
      const double te = draw_time(unused);
      out.push({k, te, false, true});
    }
  }
}

template <class URBG>
std::vector<EmissionEvent> sample_emissions(const SourceParams& params, URBG& rng, int pulses = 2) {
  CycleEmissions buf;
  sample_emissions(params, rng, buf, pulses);
  return {buf.begin(), buf.end()};
}

/// Wavefunction overlap of two photons from opposite pulses of one cycle.
/// `timing_offset_ps` is added to the late-minus-early emission difference;
/// it carries any mismatch between pulse separation and arm delay difference.
inline double pair_overlap(const EmissionEvent& e1, const EmissionEvent& e2, const SourceParams& params,
                           double timing_offset_ps = 0.0) {
  if (e1.pulse_index == e2.pulse_index)
    throw ContractViolation("pair_overlap requires photons from opposite pulses");
  if (!e1.coherent || !e2.coherent) return 0.0;
  const EmissionEvent& early = e1.pulse_index < e2.pulse_index ? e1 : e2;
  const EmissionEvent& late = e1.pulse_index < e2.pulse_index ? e2 : e1;
  const double dt = late.emission_time - early.emission_time + timing_offset_ps;
  return params.intrinsic_overlap * std::exp(-std::abs(dt) / (2.0 * static_cast<double>(params.coherence_time_ps)));
}

/// Mean squared overlap of two prompt photons whose arrival difference is
/// inside the interference gate, averaged over the emission-time jitter;
/// `mismatch_ps` shifts the late photon. Pairs outside the gate contribute 0.
inline double mean_prompt_overlap_squared(const SourceParams& params, double mismatch_ps = 0.0) {
  const double b = static_cast<double>(params.radiative_decay_ps);
  const double c = static_cast<double>(params.coherence_time_ps);
  const double gate = kWavepacketGate * c;
  // delta = late - early emission difference ~ Laplace(0, b)
  auto integrand = [&](double d) {
    const double a = std::abs(d + mismatch_ps);
    if (a >= gate) return 0.0;
    return std::exp(-std::abs(d) / b) / (2.0 * b) * std::exp(-a / c);
  };
  const double lim = 60.0 * b + std::abs(mismatch_ps) + gate;
  std::vector<double> knots{-lim, lim, 0.0, -mismatch_ps, gate - mismatch_ps, -gate - mismatch_ps};
  std::sort(knots.begin(), knots.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double lo = std::clamp(knots[k], -lim, lim), hi = std::clamp(knots[k + 1], -lim, lim);
    if (hi <= lo) continue;
    const int n = 4000;
    const double h = (hi - lo) / n;
    double s = integrand(lo + 1e-9 * h) + integrand(hi - 1e-9 * h);
    for (int i = 1; i < n; ++i) s += integrand(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    total += s * h / 3.0;
  }
  return params.intrinsic_overlap * params.intrinsic_overlap * total;
}

} // namespace franson
