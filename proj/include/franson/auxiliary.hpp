#pragma once

// Auxiliary source characterizations: the two-photon (HOM) dip versus
// pulse-separation mismatch, and the HBT g2(0) measurement.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "franson/analysis.hpp"
#include "franson/correlator.hpp"
#include "franson/experiment.hpp"
#include "franson/montecarlo.hpp"
#include "franson/text_io.hpp"

namespace franson {

struct HomPoint {
  std::int64_t mismatch_ps = 0;
  double rate = 0.0; ///< coincidences per cycle in the window
  double rate_error = 0.0;
  double dip = 0.0; ///< 1 - rate / plateau
  double dip_error = 0.0;
};

struct HomResult {
  ChannelPair pair{1, 2};
  std::vector<HomPoint> points;
  double plateau = 0.0;
  double plateau_error = 0.0;
  double dip_visibility = 0.0; ///< dip at the smallest |mismatch|
  double dip_visibility_error = 0.0;
  double width_ps = 0.0;       ///< fitted exponential width of the dip
  double width_error_ps = 0.0;
  int width_points = 0;
};

/// Coincidences of `pair` inside the central window placed at +m and -m
/// (merged when they overlap). The interfering pairs arrive m apart, in
/// either order.
inline double hom_window_counts(const CorrelationHistogram& h, std::int64_t mismatch, std::int64_t window_ps) {
  const double half = 0.5 * static_cast<double>(window_ps);
  const double m = std::abs(static_cast<double>(mismatch));
  double s = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    double f;
    if (m < half) {
      f = bin_fraction(h, k, -m - half, m + half);
    } else {
      f = bin_fraction(h, k, m - half, m + half) + bin_fraction(h, k, -m - half, -m + half);
    }
    s += f * static_cast<double>(h.counts[k]);
  }
  return s;
}

namespace detail {

inline ExperimentConfig with_mismatch(const ExperimentConfig& cfg, std::int64_t mismatch) {
  ExperimentConfig c = cfg;
  c.source.pulse_separation_ps = cfg.optics.arm_delay_difference_ps() + mismatch;
  const std::int64_t D = cfg.optics.arm_delay_difference_ps();
  require(2 * mismatch + D >= cfg.analysis.central_window_ps, "mismatch",
          "must be >= (central window - arm delay difference)/2 so the dip window stays clear of side peaks");
  c.validate();
  return c;
}

inline double hom_rate(const ExperimentConfig& cfg, ChannelPair pair, std::int64_t mismatch, std::int64_t n_cycles,
                       std::uint64_t seed, int workers) {
  const auto c = with_mismatch(cfg, mismatch);
  const auto stream = run_simulation(c, n_cycles, seed, {workers, false});
  const auto h = correlate(stream, pair, c.analysis.half_range_ps, c.detectors.bin_width_ps);
  return hom_window_counts(h, mismatch, c.analysis.central_window_ps);
}

} // namespace detail

/// Same-side coincidence rate versus the mismatch between pulse separation
/// and arm delay difference. The plateau comes from a reference run with
/// fully distinguishable photons (intrinsic_overlap = 0) at zero mismatch.
inline HomResult hom_scan(const ExperimentConfig& cfg, std::span<const std::int64_t> mismatches, std::int64_t n_cycles,
                          std::uint64_t seed, int workers = 1, ChannelPair pair = {1, 2}) {
  validate_pair(pair);
  detail::require(Route::from_channel(pair.first).side == Route::from_channel(pair.second).side, "pair",
                  "HOM scan needs two detectors on the same side");
  detail::require(!mismatches.empty(), "mismatches", "must not be empty");
  for (const auto m : mismatches) detail::with_mismatch(cfg, m);
  HomResult r;
  r.pair = pair;
  ExperimentConfig ref = cfg;
  ref.source.intrinsic_overlap = 0.0;
  const double n = static_cast<double>(n_cycles);
  const double plateau_counts = detail::hom_rate(ref, pair, 0, n_cycles, chunk_rng(seed, 0, 1)(), workers);
  r.plateau = plateau_counts / n;
  r.plateau_error = std::sqrt(plateau_counts) / n;
  if (!(plateau_counts > 0.0)) throw DegenerateInputError("HOM plateau has no coincidences");
  for (std::size_t i = 0; i < mismatches.size(); ++i) {
    const double c = detail::hom_rate(cfg, pair, mismatches[i], n_cycles, chunk_rng(seed, i + 1, 2)(), workers);
    HomPoint p;
    p.mismatch_ps = mismatches[i];
    p.rate = c / n;
    p.rate_error = std::sqrt(c) / n;
    p.dip = 1.0 - p.rate / r.plateau;
    p.dip_error = (p.rate / r.plateau) * std::sqrt((c > 0 ? 1.0 / c : 0.0) + 1.0 / plateau_counts);
    r.points.push_back(p);
  }
  const auto best = std::min_element(r.points.begin(), r.points.end(), [](const HomPoint& a, const HomPoint& b) {
    return std::abs(a.mismatch_ps) < std::abs(b.mismatch_ps);
  });
  r.dip_visibility = best->dip;
  r.dip_visibility_error = best->dip_error;

  // Weighted fit of ln(dip) = ln A - |m| / width over well-measured points.
  std::vector<std::array<double, 3>> rows;
  for (const auto& p : r.points)
    if (p.dip > 0.0 && p.dip_error > 0.0 && p.dip > 3.0 * p.dip_error)
      rows.push_back({std::abs(static_cast<double>(p.mismatch_ps)), std::log(p.dip), p.dip / p.dip_error});
  r.width_points = static_cast<int>(rows.size());
  double m_min = 1e300, m_max = -1e300;
  for (const auto& x : rows) {
    m_min = std::min(m_min, x[0]);
    m_max = std::max(m_max, x[0]);
  }
  if (rows.size() >= 3 && m_max > m_min) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double w = rows[i][2]; // 1 / sigma of ln(dip)
      X(static_cast<Eigen::Index>(i), 0) = w;
      X(static_cast<Eigen::Index>(i), 1) = w * rows[i][0];
      y(static_cast<Eigen::Index>(i)) = w * rows[i][1];
    }
    const Eigen::Matrix2d XtX = X.transpose() * X;
    const Eigen::Vector2d a = XtX.ldlt().solve(X.transpose() * y);
    const Eigen::Matrix2d cov = XtX.inverse();
    if (a(1) < 0.0) {
      r.width_ps = -1.0 / a(1);
      r.width_error_ps = std::sqrt(cov(1, 1)) / (a(1) * a(1));
    }
  }
  return r;
}

inline void write_hom(std::ostream& os, const HomResult& r) {
  auto f = [](double v) { return text::format_double(v); };
  os << "# pair: " << r.pair.str() << "\n# plateau: " << f(r.plateau) << "\n# plateau_error: " << f(r.plateau_error)
     << "\n# dip_visibility: " << f(r.dip_visibility) << "\n# dip_visibility_error: " << f(r.dip_visibility_error)
     << "\n# width_ps: " << f(r.width_ps) << "\n# width_error_ps: " << f(r.width_error_ps)
     << "\nmismatch_ps,rate,rate_error,dip,dip_error\n";
  for (const auto& p : r.points)
    os << p.mismatch_ps << ',' << f(p.rate) << ',' << f(p.rate_error) << ',' << f(p.dip) << ',' << f(p.dip_error) << '\n';
}

/// Smallest multiple of the bin width covering four satellites plus a window.
inline std::int64_t hbt_half_range(const ExperimentConfig& cfg) {
  const std::int64_t need = 4 * cfg.source.repetition_period_ps + cfg.analysis.central_window_ps;
  const std::int64_t w = cfg.detectors.bin_width_ps;
  auto round_up = [w](std::int64_t x) { return (x + w - 1) / w * w; };
  return std::max(round_up(16000), round_up(need));
}

/// Simulated HBT measurement of the source (single pulse, 50/50 split onto
/// detectors 1 and 2).
inline HbtResult hbt_g2(const ExperimentConfig& cfg, std::int64_t n_cycles, std::uint64_t seed, int workers = 1,
                        CorrelationHistogram* hist_out = nullptr) {
  const auto stream = run_hbt_simulation(cfg, n_cycles, seed, {workers, false});
  auto h = correlate(stream, {1, 2}, hbt_half_range(cfg), cfg.detectors.bin_width_ps);
  const auto r = hbt_from_histogram(h, cfg.source.repetition_period_ps, cfg.analysis.central_window_ps);
  if (hist_out) *hist_out = std::move(h);
  return r;
}

inline void write_hbt(std::ostream& os, const HbtResult& r) {
  os << "g2_zero: " << text::format_double(r.g2) << "\ng2_error: " << text::format_double(r.g2_error)
     << "\ncentral_counts: " << text::format_double(r.central_counts)
     << "\nsatellite_mean: " << text::format_double(r.satellite_mean) << '\n';
}

} // namespace franson
