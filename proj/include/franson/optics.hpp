#pragma once

// Interferometer network: coupler parameters, closed-form coincidence rates and
// visibilities for the four cross detector pairs, a complex-amplitude path
// model of the same network, and phase-drift modes.
//
// Geometry. Photons leave the source coupler C0 either rightward (side 0,
// detectors 1 and 2) or leftward (side 1, detectors 3 and 4). Both directions
// traverse one unbalanced Mach-Zehnder interferometer: rightward photons enter
// through C_B and leave through C_A, leftward photons the reverse. The long
// arm carries the polarization-dependent phase, so the fourth-order
// interference phase is the difference between the two directions.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "franson/error.hpp"

namespace franson {

struct CouplerParams {
  double reflectance = 0.5;
  double transmittance = 0.5;

  static CouplerParams from_reflectance(double r) { return {r, 1.0 - r}; }

  void validate(const std::string& name) const {
    detail::require_unit_interval(reflectance, name + ".reflectance");
    detail::require_unit_interval(transmittance, name + ".transmittance");
    detail::require(std::abs(reflectance + transmittance - 1.0) < 1e-12, name,
                    "reflectance + transmittance must equal 1 (lossless coupler)");
  }

  bool operator==(const CouplerParams&) const = default;
};

enum class DriftMode { none, common, independent };

inline const char* to_string(DriftMode m) {
  switch (m) {
  case DriftMode::none: return "none";
  case DriftMode::common: return "common";
  case DriftMode::independent: return "independent";
  }
  return "none";
}

struct InterferometerConfig {
  CouplerParams coupler_0{};
  CouplerParams coupler_a = CouplerParams::from_reflectance(0.6);
  CouplerParams coupler_b = CouplerParams::from_reflectance(0.55);
  std::int64_t arm_delay_long_ps = 11800;
  std::int64_t arm_delay_short_ps = 10000;
  double phase_h = 0.0;
  double phase_v = 0.0;
  DriftMode drift_mode = DriftMode::none;
  double drift_sigma = 0.0;

  std::int64_t arm_delay_difference_ps() const { return arm_delay_long_ps - arm_delay_short_ps; }
  double phase_difference() const { return phase_h - phase_v; }

  /// Checks the self-contained invariants. The delay difference must also
  /// exceed ten source coherence times; that check needs the source and lives
  /// in `validate_regime`.
  void validate() const {
    coupler_0.validate("optics.coupler_0");
    coupler_a.validate("optics.coupler_a");
    coupler_b.validate("optics.coupler_b");
    detail::require(arm_delay_short_ps >= 0, "optics.arm_delay_short_ps", "must be >= 0");
    detail::require(arm_delay_long_ps > arm_delay_short_ps, "optics.arm_delay_long_ps",
                    "must exceed optics.arm_delay_short_ps");
    detail::require(std::isfinite(phase_h), "optics.phase_h", "must be finite");
    detail::require(std::isfinite(phase_v), "optics.phase_v", "must be finite");
    detail::require(drift_sigma >= 0.0 && std::isfinite(drift_sigma), "optics.drift_sigma",
                    "must be >= 0");
  }

  void validate_regime(double coherence_time_ps) const {
    detail::require(static_cast<double>(arm_delay_difference_ps()) > 10.0 * coherence_time_ps,
                    "optics.arm_delay_long_ps",
                    "arm delay difference must exceed 10x source.coherence_time_ps");
  }
};

/// Coincidence probabilities for the cross pairs {1,3}, {1,4}, {2,3}, {2,4}.
struct CoincidenceRates {
  double gamma_13 = 0.0;
  double gamma_14 = 0.0;
  double gamma_23 = 0.0;
  double gamma_24 = 0.0;

  double sum() const { return gamma_13 + gamma_14 + gamma_23 + gamma_24; }

  CoincidenceRates normalized() const {
    const double s = sum();
    if (!(s > 0.0)) throw DegenerateInputError("coincidence rates sum to zero");
    return {gamma_13 / s, gamma_14 / s, gamma_23 / s, gamma_24 / s};
  }

  std::array<double, 4> as_array() const { return {gamma_13, gamma_14, gamma_23, gamma_24}; }
};

struct VisibilitySet {
  double v13 = 0.0;
  double v14 = 0.0;
  double v23 = 0.0;
  double v24 = 0.0;

  std::array<double, 4> as_array() const { return {v13, v14, v23, v24}; }
};

namespace detail {

inline void validate_overlap_inputs(const CouplerParams& a, const CouplerParams& b, double overlap) {
  a.validate("coupler_a");
  b.validate("coupler_b");
  require_unit_interval(overlap, "overlap");
}

} // namespace detail

/// The four bracketed coincidence expressions with their coupler prefactors,
/// before normalization. Their sum does not depend on `phase_diff`.
inline CoincidenceRates unnormalized_coincidence_rates(const CouplerParams& a, const CouplerParams& b,
                                                       double phase_diff, double overlap) {
  detail::validate_overlap_inputs(a, b, overlap);
  const double ra = a.reflectance, ta = a.transmittance;
  const double rb = b.reflectance, tb = b.transmittance;
  const double fringe = overlap * overlap * std::cos(phase_diff);
  return {
      ra * ta * rb * tb * (2.0 + 2.0 * fringe),
      ra * ta * (tb * tb + rb * rb - 2.0 * tb * rb * fringe),
      rb * tb * (ta * ta + ra * ra - 2.0 * ta * ra * fringe),
      ta * ta * rb * rb + tb * tb * ra * ra + 2.0 * ta * ra * tb * rb * fringe,
  };
}

inline CoincidenceRates coincidence_rates(const CouplerParams& a, const CouplerParams& b, double phase_diff,
                                          double overlap) {
  return unnormalized_coincidence_rates(a, b, phase_diff, overlap).normalized();
}

inline VisibilitySet visibilities(const CouplerParams& a, const CouplerParams& b, double overlap) {
  detail::validate_overlap_inputs(a, b, overlap);
  const double ra = a.reflectance, ta = a.transmittance;
  const double rb = b.reflectance, tb = b.transmittance;
  const double g2 = overlap * overlap;
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  return {
      g2,
      ratio(2.0 * tb * rb * g2, tb * tb + rb * rb),
      ratio(2.0 * ta * ra * g2, ta * ta + ra * ra),
      ratio(2.0 * ta * ra * tb * rb * g2, ra * ra * tb * tb + ta * ta * rb * rb),
  };
}

// ── Path amplitudes ─────────────────────────────────────────────────────────

enum class Arm : int { short_arm = 0, long_arm = 1 };

/// Where a photon ends up: side 0 (rightward, channels 1/2) or side 1
/// (leftward, channels 3/4), and the detector index on that side.
struct Route {
  int side = 0;
  int detector = 0;

  int channel() const { return side * 2 + detector + 1; }
  static Route from_channel(int ch) { return {(ch - 1) / 2, (ch - 1) % 2}; }
  bool operator==(const Route&) const = default;
};

/// Single-photon amplitudes through C0 and the Mach-Zehnder network.
class PathNetwork {
public:
  using complex = std::complex<double>;

  /// `phase_side0` and `phase_side1` are the long-arm phases seen by the
  /// rightward and leftward photon; only their difference is observable in
  /// coincidences.
  PathNetwork(const CouplerParams& c0, const CouplerParams& ca, const CouplerParams& cb, double phase_side0,
              double phase_side1) {
    const complex i{0.0, 1.0};
    c0_[0] = std::sqrt(c0.transmittance);
    c0_[1] = i * std::sqrt(c0.reflectance);
    const std::array<const CouplerParams*, 2> in{&cb, &ca};
    const std::array<const CouplerParams*, 2> out{&ca, &cb};
    const std::array<double, 2> phase{phase_side0, phase_side1};
    for (int s = 0; s < 2; ++s) {
      const double tin = std::sqrt(in[s]->transmittance), rin = std::sqrt(in[s]->reflectance);
      const double tout = std::sqrt(out[s]->transmittance), rout = std::sqrt(out[s]->reflectance);
      const complex long_phase = std::polar(1.0, phase[s]);
      // long arm leaves input port 0, short arm port 1; output ports map to
      // detectors 0 and 1 of the side.
      amp_[s][1][0] = c0_[s] * tin * long_phase * tout;
      amp_[s][1][1] = c0_[s] * tin * long_phase * (i * rout);
      amp_[s][0][0] = c0_[s] * (i * rin) * (i * rout);
      amp_[s][0][1] = c0_[s] * (i * rin) * tout;
    }
  }

  complex amplitude(Route r, Arm arm) const { return amp_[r.side][static_cast<int>(arm)][r.detector]; }
  double probability(Route r, Arm arm) const { return std::norm(amplitude(r, arm)); }

  /// Probability of the time-coincident configuration where the early photon
  /// travels the long arm and reaches `early`, and the late photon travels the
  /// short arm and reaches `late`. The exchange process (early photon to
  /// `late`'s detector and vice versa) interferes with weight `overlap_sq`.
  /// The total of each interfering pair is split between its two labelings in
  /// proportion to their classical weights so arrival times stay attributable.
  double interfering_probability(Route early, Route late, double overlap_sq) const {
    const complex direct = amplitude(early, Arm::long_arm) * amplitude(late, Arm::short_arm);
    const double pd = std::norm(direct);
    if (early == late) return pd * (1.0 + overlap_sq);
    const complex exchange = amplitude(late, Arm::long_arm) * amplitude(early, Arm::short_arm);
    const double px = std::norm(exchange);
    if (pd + px <= 0.0) return 0.0;
    const double total = pd + px + 2.0 * overlap_sq * std::real(direct * std::conj(exchange));
    return std::max(0.0, total) * pd / (pd + px);
  }

private:
  std::array<complex, 2> c0_{};
  std::array<std::array<std::array<complex, 2>, 2>, 2> amp_{}; // [side][arm][detector]
};

/// Cross-pair coincidence probabilities from explicit amplitude sums over the
/// indistinguishable path pairs; an independent route to
/// `coincidence_rates`.
inline CoincidenceRates enumerate_amplitudes(const CouplerParams& a, const CouplerParams& b, double phase_diff,
                                             double overlap) {
  detail::validate_overlap_inputs(a, b, overlap);
  const PathNetwork net(CouplerParams{}, a, b, phase_diff, 0.0);
  const double g2 = overlap * overlap;
  auto pair = [&](int ch_left_side, int ch_right_side) {
    const Route r0 = Route::from_channel(ch_left_side), r1 = Route::from_channel(ch_right_side);
    return net.interfering_probability(r0, r1, g2) + net.interfering_probability(r1, r0, g2);
  };
  return CoincidenceRates{pair(1, 3), pair(1, 4), pair(2, 3), pair(2, 4)}.normalized();
}

// ── Drift ───────────────────────────────────────────────────────────────────

/// Phase differences after drift for the leftward and rightward passage.
/// `nominal` is the undisturbed phase_h - phase_v.
struct DriftedPhases {
  double left = 0.0;
  double right = 0.0;
  double nominal = 0.0;

  /// Phase governing fourth-order interference: drift common to both
  /// directions cancels, only the differential part survives.
  double interference_phase() const { return nominal + (right - left); }
};

template <class URBG>
DriftedPhases apply_drift(const InterferometerConfig& config, URBG& rng) {
  detail::require(config.drift_sigma >= 0.0, "optics.drift_sigma", "must be >= 0");
  const double nominal = config.phase_difference();
  DriftedPhases out{nominal, nominal, nominal};
  if (config.drift_sigma == 0.0 || config.drift_mode == DriftMode::none) return out;
  std::normal_distribution<double> noise(0.0, config.drift_sigma);
  if (config.drift_mode == DriftMode::common) {
    const double d = noise(rng);
    out.left += d;
    out.right += d;
  } else {
    out.left += noise(rng);
    out.right += noise(rng);
  }
  return out;
}

} // namespace franson
