#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "franson/error.hpp"
#include "franson/optics.hpp"
#include "franson/source.hpp"

namespace franson {

struct DetectorConfig {
  std::array<double, 4> efficiency{1.0, 0.9, 0.95, 0.85};
  double dark_count_rate_hz = 100.0;
  std::int64_t timing_jitter_ps = 70; ///< Gaussian sigma per detector
  std::int64_t bin_width_ps = 50;

  void validate() const {
    for (std::size_t i = 0; i < efficiency.size(); ++i)
      detail::require_unit_interval(efficiency[i], "detectors.efficiency_" + std::to_string(i + 1));
    detail::require(dark_count_rate_hz >= 0.0 && std::isfinite(dark_count_rate_hz), "detectors.dark_count_rate_hz",
                    "must be >= 0");
    detail::require(timing_jitter_ps >= 0, "detectors.timing_jitter_ps", "must be >= 0");
    detail::require(bin_width_ps > 0, "detectors.bin_width_ps", "must be > 0");
  }
};

enum class RunMode { analytic, montecarlo };

inline const char* to_string(RunMode m) { return m == RunMode::analytic ? "analytic" : "montecarlo"; }

inline std::vector<double> uniform_phase_scan(int steps) {
  std::vector<double> out;
  for (int k = 0; k < steps; ++k) out.push_back(2.0 * std::numbers::pi * k / steps);
  return out;
}

struct RunControl {
  std::int64_t n_cycles = 10'000'000;
  std::uint64_t master_seed = 1;
  std::vector<double> phase_scan = uniform_phase_scan(16);
  RunMode mode = RunMode::montecarlo;
  int workers = 1;

  void validate() const {
    detail::require(n_cycles >= 1, "run.n_cycles", "must be >= 1");
    detail::require(workers >= 1, "run.workers", "must be >= 1");
    for (double p : phase_scan) detail::require(std::isfinite(p), "run.phase_scan", "phases must be finite");
  }
};

/// Correlation analysis windows; all in integer picoseconds.
struct AnalysisParams {
  std::int64_t central_window_ps = 600;
  std::int64_t norm_half_range_ps = 16000;
  std::int64_t half_range_ps = 20000;
  std::int64_t background_start_ps = 5000;
  std::int64_t background_end_ps = 7500;

  void validate(std::int64_t bin_width_ps) const {
    detail::require(central_window_ps > 0, "analysis.central_window_ps", "must be > 0");
    detail::require(norm_half_range_ps > central_window_ps / 2, "analysis.norm_half_range_ps",
                    "must exceed half the central window");
    detail::require(half_range_ps >= norm_half_range_ps && half_range_ps >= 16000, "analysis.half_range_ps",
                    "must be >= analysis.norm_half_range_ps and >= 16000");
    detail::require(half_range_ps % bin_width_ps == 0, "analysis.half_range_ps",
                    "must be a multiple of detectors.bin_width_ps");
    detail::require(background_start_ps > central_window_ps / 2 && background_end_ps > background_start_ps,
                    "analysis.background_start_ps", "background window must lie outside the central window");
    detail::require(background_end_ps <= norm_half_range_ps, "analysis.background_end_ps",
                    "must be <= analysis.norm_half_range_ps");
  }
};

struct ExperimentConfig {
  SourceParams source{};
  InterferometerConfig optics{};
  DetectorConfig detectors{};
  RunControl run{};
  AnalysisParams analysis{};

  void validate() const {
    source.validate();
    optics.validate();
    optics.validate_regime(static_cast<double>(source.coherence_time_ps));
    detectors.validate();
    run.validate();
    analysis.validate(detectors.bin_width_ps);
  }

  /// Copy with the phase difference phase_h - phase_v set to `phase`.
  ExperimentConfig at_phase(double phase) const {
    ExperimentConfig c = *this;
    c.optics.phase_h = c.optics.phase_v + phase;
    return c;
  }
};

} // namespace franson
