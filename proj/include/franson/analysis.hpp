#pragma once

// Downstream analysis of normalized coincidences: fringe fits, flat
// background estimation and subtraction, overlap extraction and the
// peak-shape reconstruction from a decay trace.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "franson/correlator.hpp"
#include "franson/error.hpp"
#include "franson/source.hpp"

namespace franson {

struct FringeResult {
  ChannelPair pair{};
  double offset = 0.0;
  double amplitude = 0.0;
  double phase_origin = 0.0;
  double visibility_raw = 0.0;
  double visibility_error = 0.0;
  std::optional<double> visibility_corrected;
  std::optional<double> corrected_error;
  double residual_rms = 0.0;
  int clipped_points = 0; ///< corrected values below zero that were clipped
};

struct FringePoint {
  double phase = 0.0;
  double gamma = 0.0;
};

namespace detail {

struct CosineFit {
  double offset, amplitude, origin, visibility, visibility_error, residual_rms;
};

inline void require_phase_coverage(std::span<const FringePoint> pts) {
  std::vector<double> ph;
  for (const auto& p : pts) {
    double x = std::fmod(p.phase, 2.0 * std::numbers::pi);
    if (x < 0) x += 2.0 * std::numbers::pi;
    ph.push_back(x);
  }
  std::sort(ph.begin(), ph.end());
  ph.erase(std::unique(ph.begin(), ph.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
           ph.end());
  require(ph.size() >= 4, "settings", "need at least 4 distinct phase settings");
  double gap = 2.0 * std::numbers::pi - (ph.back() - ph.front());
  for (std::size_t i = 1; i < ph.size(); ++i) gap = std::max(gap, ph[i] - ph[i - 1]);
  require(2.0 * std::numbers::pi - gap >= std::numbers::pi - 1e-9, "settings", "phase settings must span at least pi");
}

/// Linear least squares on a0 + a1 cos + a2 sin; parameter covariance from
/// the residual variance.
inline CosineFit fit_cosine(std::span<const FringePoint> pts) {
  require_phase_coverage(pts);
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pts[static_cast<std::size_t>(i)];
    X(i, 0) = 1.0;
    X(i, 1) = std::cos(p.phase);
    X(i, 2) = std::sin(p.phase);
    y(i) = p.gamma;
  }
  const Eigen::MatrixXd XtX = X.transpose() * X;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX);
  const Eigen::Vector3d a = ldlt.solve(X.transpose() * y);
  const Eigen::VectorXd r = y - X * a;
  const double rss = r.squaredNorm();
  CosineFit f{};
  f.offset = a(0);
  f.amplitude = std::hypot(a(1), a(2));
  f.origin = std::atan2(a(2), a(1));
  f.residual_rms = std::sqrt(rss / static_cast<double>(n));
  if (!(f.offset > 0.0)) throw DegenerateInputError("fringe offset is not positive");
  f.visibility = f.amplitude / f.offset;
  const double s2 = n > 3 ? rss / static_cast<double>(n - 3) : 0.0;
  const Eigen::Matrix3d cov = s2 * ldlt.solve(Eigen::Matrix3d::Identity());
  Eigen::Vector3d grad;
  grad(0) = -f.visibility / f.offset;
  if (f.amplitude > 0.0) {
    grad(1) = a(1) / (f.amplitude * f.offset);
    grad(2) = a(2) / (f.amplitude * f.offset);
  } else {
    grad(1) = grad(2) = 1.0 / f.offset; // bound for a vanishing fringe
  }
  f.visibility_error = std::sqrt(std::max(0.0, grad.dot(cov * grad)));
  return f;
}

} // namespace detail

/// Fits gamma(phi) = offset * (1 + V cos(phi - origin)).
inline FringeResult fit_fringe(std::span<const FringePoint> settings, ChannelPair pair = {}) {
  const auto f = detail::fit_cosine(settings);
  FringeResult r;
  r.pair = pair;
  r.offset = f.offset;
  r.amplitude = f.amplitude;
  r.phase_origin = f.origin;
  r.visibility_raw = f.visibility;
  r.visibility_error = f.visibility_error;
  r.residual_rms = f.residual_rms;
  return r;
}

/// Mean normalized value per bin over [start, end] and its mirror, scaled to
/// the number of bins in the central window: the flat-background part of
/// gamma_window. `peak_positions` are delays where correlation peaks sit; the
/// window must keep half a central window of clearance from each.
inline double estimate_background(const NormalizedCorrelation& norm, std::int64_t start_ps = 5000,
                                  std::int64_t end_ps = 7500, std::span<const std::int64_t> peak_positions = {}) {
  detail::require(end_ps > start_ps && start_ps >= 0, "background window", "need 0 <= start < end");
  detail::require(end_ps <= norm.half_range_ps, "background window", "must lie inside the histogram range");
  const std::int64_t guard = norm.central_window_ps / 2;
  for (std::int64_t p : peak_positions) {
    const std::int64_t a = std::abs(p);
    if (a + guard > start_ps && a - guard < end_ps)
      throw ValidationError("background window", "overlaps the correlation peak at " + std::to_string(p) + " ps");
  }
  double sum = 0.0, weight = 0.0;
  const double s = static_cast<double>(start_ps), e = static_cast<double>(end_ps);
  for (std::size_t k = 0; k < norm.values.size(); ++k) {
    const double w = bin_fraction(norm, k, s, e) + bin_fraction(norm, k, -e, -s);
    sum += w * norm.values[k];
    weight += w;
  }
  if (weight <= 0.0) return 0.0;
  return sum / weight * norm.central_bins();
}

/// Delays of the Franson correlation peaks: k*T + m*dt for m in -2..2, over
/// enough cycles to cover +-half_range.
inline std::vector<std::int64_t> franson_peak_positions(const SourceParams& src, std::int64_t half_range_ps) {
  std::vector<std::int64_t> out;
  const std::int64_t T = src.repetition_period_ps, dt = src.pulse_separation_ps;
  const std::int64_t kmax = half_range_ps / T + 1;
  for (std::int64_t k = -kmax; k <= kmax; ++k)
    for (int m = -2; m <= 2; ++m) {
      const std::int64_t p = k * T + m * dt;
      if (std::abs(p) <= half_range_ps + 2 * dt) out.push_back(p);
    }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct BackgroundPoint {
  double phase = 0.0;
  double gamma = 0.0;
  double background = 0.0;
};

/// Fits the raw fringe and the fringe of gamma - background; the second fit
/// fills visibility_corrected. Negative differences are clipped to zero and
/// counted.
inline FringeResult corrected_visibility(std::span<const BackgroundPoint> settings, ChannelPair pair = {}) {
  std::vector<FringePoint> raw, sub;
  int clipped = 0;
  for (const auto& s : settings) {
    raw.push_back({s.phase, s.gamma});
    double v = s.gamma - s.background;
    if (v < 0.0) {
      v = 0.0;
      ++clipped;
    }
    sub.push_back({s.phase, v});
  }
  FringeResult r = fit_fringe(raw, pair);
  const auto c = detail::fit_cosine(sub);
  r.visibility_corrected = c.visibility;
  r.corrected_error = c.visibility_error;
  r.clipped_points = clipped;
  return r;
}

/// (max - min) / (max + min); used when a scan is too short to fit.
inline double minmax_visibility(std::span<const FringePoint> pts) {
  if (pts.empty()) return 0.0;
  double lo = pts.front().gamma, hi = lo;
  for (const auto& p : pts) {
    lo = std::min(lo, p.gamma);
    hi = std::max(hi, p.gamma);
  }
  return hi + lo > 0.0 ? (hi - lo) / (hi + lo) : 0.0;
}

// ── Overlap ────────────────────────────────────────────────────────────────

inline const double kNonlocalityThreshold = 1.0 / std::numbers::sqrt2;

struct OverlapResult {
  double v13 = 0.0;
  double g = 0.0;
  double gamma_squared = 0.0;
  double gamma = 0.0;
  bool out_of_range = false; ///< gamma_squared > 1; gamma was clipped to 1
  bool exceeds_nonlocality_threshold = false;
};

/// gamma^2 = V13 (1 + 2g) with g = 2 g2(0), correcting for multi-photon
/// false coincidences.
inline OverlapResult extract_overlap(double v13, double g2_zero) {
  detail::require_unit_interval(v13, "v13");
  detail::require(g2_zero >= 0.0 && g2_zero <= 0.5, "g2_zero", "must be in [0,0.5]");
  OverlapResult r;
  r.v13 = v13;
  r.g = 2.0 * g2_zero;
  r.gamma_squared = v13 * (1.0 + 2.0 * r.g);
  r.out_of_range = r.gamma_squared > 1.0;
  r.gamma = std::sqrt(std::min(1.0, r.gamma_squared));
  r.exceeds_nonlocality_threshold = r.gamma_squared > kNonlocalityThreshold;
  return r;
}

// ── Reconstruction ─────────────────────────────────────────────────────────

/// Symmetric peak shape from a one-sided decay trace: the discrete
/// autocorrelation, scaled to unit area. Index `n - 1` is zero delay.
inline std::vector<double> autocorrelation_shape(std::span<const double> trace) {
  detail::require(!trace.empty(), "pl_trace", "must not be empty");
  for (double v : trace) detail::require(v >= 0.0 && std::isfinite(v), "pl_trace", "must be non-negative");
  const std::size_t n = trace.size();
  std::vector<double> out(2 * n - 1, 0.0);
  for (std::size_t lag = 0; lag < n; ++lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += trace[i] * trace[i + lag];
    out[n - 1 + lag] = s;
    out[n - 1 - lag] = s;
  }
  double total = 0.0;
  for (double v : out) total += v;
  detail::require(total > 0.0, "pl_trace", "must have non-zero area");
  for (double& v : out) v /= total;
  return out;
}

/// Model correlation histogram: unit-area copies of the trace's
/// autocorrelation placed at `peak_offsets` with `peak_weights`, plus a flat
/// `dark_level` per bin. Offsets are rounded to whole bins.
inline ModelHistogram reconstruct_correlation(std::span<const double> pl_trace, std::int64_t bin_width_ps,
                                              std::span<const std::int64_t> peak_offsets,
                                              std::span<const double> peak_weights, double dark_level,
                                              std::int64_t half_range_ps) {
  detail::require(peak_offsets.size() == peak_weights.size(), "peak_weights", "must match peak_offsets in length");
  const auto shape = autocorrelation_shape(pl_trace);
  auto h = ModelHistogram::make(ChannelPair{1, 3}, half_range_ps, bin_width_ps);
  const auto center = static_cast<std::int64_t>(pl_trace.size()) - 1;
  const auto nb = static_cast<std::int64_t>(h.size());
  for (std::size_t p = 0; p < peak_offsets.size(); ++p) {
    if (peak_weights[p] == 0.0) continue;
    const std::int64_t shift =
        static_cast<std::int64_t>(std::llround(static_cast<double>(peak_offsets[p]) / bin_width_ps));
    for (std::int64_t k = 0; k < nb; ++k) {
      const std::int64_t idx = (k - h.half_bins()) - shift + center;
      if (idx < 0 || idx >= static_cast<std::int64_t>(shape.size())) continue;
      h.counts[static_cast<std::size_t>(k)] += peak_weights[p] * shape[static_cast<std::size_t>(idx)];
    }
  }
  for (auto& c : h.counts) c += dark_level;
  for (auto c : h.counts) h.total_events += c;
  return h;
}

/// Peak weights of the Franson layout: adjacent-cycle peaks at m = -2..2
/// carry 1:4:6:4:1, the same-cycle side peaks 1:2:-:2:1 and the central peak
/// `central_weight`.
struct PeakLayout {
  std::vector<std::int64_t> offsets;
  std::vector<double> weights;
};

inline PeakLayout franson_peak_layout(const SourceParams& src, std::int64_t half_range_ps, double central_weight) {
  PeakLayout l;
  const std::int64_t T = src.repetition_period_ps, dt = src.pulse_separation_ps;
  const std::int64_t kmax = half_range_ps / T + 2;
  constexpr double other[5] = {1, 4, 6, 4, 1};
  constexpr double same[5] = {1, 2, 0, 2, 1};
  for (std::int64_t k = -kmax; k <= kmax; ++k)
    for (int m = -2; m <= 2; ++m) {
      l.offsets.push_back(k * T + m * dt);
      l.weights.push_back(k != 0 ? other[m + 2] : (m == 0 ? central_weight : same[m + 2]));
    }
  return l;
}

/// Decay histogram of the two-exponential source profile, sampled at bin
/// centers of width `bin_width_ps` over `length_ps`.
inline std::vector<double> two_exponential_trace(double tau_fast, double tau_slow, double tail_fraction,
                                                 std::int64_t bin_width_ps, std::int64_t length_ps) {
  std::vector<double> out;
  for (std::int64_t t = 0; t < length_ps; t += bin_width_ps) {
    const double lo = static_cast<double>(t), hi = lo + bin_width_ps;
    auto bin = [&](double tau) { return std::exp(-lo / tau) - std::exp(-hi / tau); };
    out.push_back((1.0 - tail_fraction) * bin(tau_fast) + tail_fraction * bin(tau_slow));
  }
  return out;
}

/// Value at zero delay and the mean over [start, end] and its mirror.
struct FlatnessCheck {
  double value_at_zero = 0.0;
  double plateau_mean = 0.0;
  double relative_difference() const { return (value_at_zero - plateau_mean) / plateau_mean; }
};

template <class Count>
FlatnessCheck flatness(const BasicCorrelationHistogram<Count>& h, std::int64_t start_ps, std::int64_t end_ps) {
  FlatnessCheck f;
  f.value_at_zero = static_cast<double>(h.counts[static_cast<std::size_t>(h.half_bins())]);
  double sum = 0.0, w = 0.0;
  const double s = static_cast<double>(start_ps), e = static_cast<double>(end_ps);
  for (std::size_t k = 0; k < h.size(); ++k) {
    const double fr = bin_fraction(h, k, s, e) + bin_fraction(h, k, -e, -s);
    sum += fr * static_cast<double>(h.counts[k]);
    w += fr;
  }
  f.plateau_mean = w > 0.0 ? sum / w : 0.0;
  return f;
}

// ── HBT ────────────────────────────────────────────────────────────────────

struct HbtResult {
  double g2 = 0.0;
  double g2_error = 0.0;
  double central_counts = 0.0;
  double satellite_mean = 0.0;
};

/// Central-peak area over the mean of the four nearest satellite peaks on
/// each side, each integrated over +-window/2.
template <class Count>
HbtResult hbt_from_histogram(const BasicCorrelationHistogram<Count>& h, std::int64_t repetition_period_ps,
                             std::int64_t window_ps = 600) {
  const double half = 0.5 * static_cast<double>(window_ps);
  auto area = [&](double center) {
    double s = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) s += static_cast<double>(h.counts[k]) * bin_fraction(h, k, center - half, center + half);
    return s;
  };
  detail::require(h.half_range_ps >= 4 * repetition_period_ps + window_ps / 2, "half_range_ps",
                  "histogram must cover four satellite peaks on each side");
  HbtResult r;
  r.central_counts = area(0.0);
  double sat = 0.0;
  for (int k = 1; k <= 4; ++k) {
    sat += area(static_cast<double>(k * repetition_period_ps));
    sat += area(-static_cast<double>(k * repetition_period_ps));
  }
  if (!(sat > 0.0)) throw DegenerateInputError("no satellite-peak counts for g2 reference");
  r.satellite_mean = sat / 8.0;
  r.g2 = r.central_counts / r.satellite_mean;
  r.g2_error = r.g2 * std::sqrt((r.central_counts > 0 ? 1.0 / r.central_counts : 0.0) + 1.0 / sat);
  if (r.central_counts == 0.0) r.g2_error = 1.0 / r.satellite_mean;
  return r;
}

} // namespace franson
