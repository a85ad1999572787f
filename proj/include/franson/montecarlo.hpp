#pragma once

// Monte Carlo engine: per-cycle joint outcome distribution over detector
// clicks, detector imperfections, and a chunked, worker-count independent
// driver that produces a sorted time-tag stream.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <new>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "franson/error.hpp"
#include "franson/experiment.hpp"
#include "franson/optics.hpp"
#include "franson/source.hpp"
#include "franson/timetag.hpp"

namespace franson {

inline constexpr int kMaxPhotonsPerCycle = 4;

struct Click {
  int channel = 1;
  double time_ps = 0.0; ///< relative to the cycle start, before detector jitter
  int photon = 0;       ///< index into the cycle's emissions
  Arm arm = Arm::short_arm;
};

struct Outcome {
  std::array<Click, kMaxPhotonsPerCycle> clicks{};
  int count = 0;
  double probability = 0.0;
};

/// Probability map over outcomes for one cycle. Every photon reaches exactly
/// one detector; losses are applied afterwards as detector efficiency.
struct OutcomeDistribution {
  std::vector<Outcome> outcomes;

  double total() const {
    double s = 0.0;
    for (const auto& o : outcomes) s += o.probability;
    return s;
  }

  template <class URBG>
  const Outcome& sample(URBG& rng) const {
    std::uniform_real_distribution<double> u(0.0, total());
    double x = u(rng);
    for (const auto& o : outcomes) {
      x -= o.probability;
      if (x < 0.0) return o;
    }
    return outcomes.back();
  }
};

namespace detail {

inline double arm_delay(const InterferometerConfig& optics, Arm arm) {
  return static_cast<double>(arm == Arm::long_arm ? optics.arm_delay_long_ps : optics.arm_delay_short_ps);
}

struct RouteChoice {
  Route route;
  Arm arm;
};

inline constexpr std::array<RouteChoice, 8> kRouteChoices{{
    {{0, 0}, Arm::short_arm}, {{0, 1}, Arm::short_arm}, {{1, 0}, Arm::short_arm}, {{1, 1}, Arm::short_arm},
    {{0, 0}, Arm::long_arm},  {{0, 1}, Arm::long_arm},  {{1, 0}, Arm::long_arm},  {{1, 1}, Arm::long_arm},
}};

} // namespace detail

/// Builds the outcome distribution for one cycle's emissions into `out`.
///
/// With exactly two photons from opposite pulses, the configuration where the
/// early photon takes the long arm and the late photon the short arm arrives
/// time-coincident (within the wavepacket gate) and its detector assignment
/// follows the two-photon amplitudes weighted by the pair overlap. All other
/// routings are classical: independent splitting by intensity coefficients.
inline void joint_outcome_distribution(const CycleEmissions& emissions, const InterferometerConfig& optics,
                                       const SourceParams& source, double interference_phase,
                                       OutcomeDistribution& out) {
  out.outcomes.clear();
  const int n = emissions.count;
  if (n == 0) {
    out.outcomes.push_back(Outcome{{}, 0, 1.0});
    return;
  }
  const PathNetwork net(optics.coupler_0, optics.coupler_a, optics.coupler_b, interference_phase, 0.0);
  std::array<double, 8> route_p{};
  for (std::size_t r = 0; r < 8; ++r)
    route_p[r] = net.probability(detail::kRouteChoices[r].route, detail::kRouteChoices[r].arm);

  auto click_time = [&](const EmissionEvent& e, Arm arm) {
    return static_cast<double>(e.pulse_index * source.pulse_separation_ps) + e.emission_time +
           detail::arm_delay(optics, arm);
  };

  // Interference applies only to two photons in opposite pulses.
  int early = -1, late = -1;
  double overlap_sq = 0.0;
  bool interfering = false;
  if (n == 2 && emissions[0].pulse_index != emissions[1].pulse_index) {
    early = emissions[0].pulse_index < emissions[1].pulse_index ? 0 : 1;
    late = 1 - early;
    const double mismatch =
        static_cast<double>(source.pulse_separation_ps - optics.arm_delay_difference_ps());
    const double arrival_gap = click_time(emissions[late], Arm::short_arm) - click_time(emissions[early], Arm::long_arm);
    if (std::abs(arrival_gap) < kWavepacketGate * static_cast<double>(source.coherence_time_ps)) {
      interfering = true;
      const double g = pair_overlap(emissions[early], emissions[late], source, mismatch);
      overlap_sq = g * g;
    }
  }

  std::size_t combos = 1;
  for (int i = 0; i < n; ++i) combos *= 8;
  out.outcomes.reserve(combos);
  std::array<std::size_t, kMaxPhotonsPerCycle> idx{};
  for (std::size_t c = 0; c < combos; ++c) {
    std::size_t rem = c;
    Outcome o;
    o.count = n;
    double p = 1.0;
    for (int i = 0; i < n; ++i) {
      idx[i] = rem % 8;
      rem /= 8;
      const auto& rc = detail::kRouteChoices[idx[i]];
      p *= route_p[idx[i]];
      o.clicks[i] = Click{rc.route.channel(), click_time(emissions[i], rc.arm), i, rc.arm};
    }
    if (interfering && detail::kRouteChoices[idx[early]].arm == Arm::long_arm &&
        detail::kRouteChoices[idx[late]].arm == Arm::short_arm) {
      p = net.interfering_probability(detail::kRouteChoices[idx[early]].route,
                                      detail::kRouteChoices[idx[late]].route, overlap_sq);
    }
    o.probability = p;
    out.outcomes.push_back(o);
  }
}

inline OutcomeDistribution joint_outcome_distribution(const CycleEmissions& emissions,
                                                      const InterferometerConfig& optics,
                                                      const SourceParams& source) {
  OutcomeDistribution d;
  joint_outcome_distribution(emissions, optics, source, optics.phase_difference(), d);
  return d;
}

// ── Chunked driver ─────────────────────────────────────────────────────────

inline constexpr std::int64_t kChunkCycles = 1 << 15;

/// RNG for one chunk of cycles, keyed only by (master_seed, chunk_index).
inline std::mt19937_64 chunk_rng(std::uint64_t master_seed, std::uint64_t chunk_index, std::uint32_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(chunk_index), static_cast<std::uint32_t>(chunk_index >> 32), stream};
  return std::mt19937_64(seq);
}

struct ChunkOutput {
  std::vector<TimeTag> tags;
  std::vector<TagOrigin> origins;
};

/// Applies efficiency, Gaussian jitter and dark counts for one cycle.
class DetectorModel {
public:
  DetectorModel(const DetectorConfig& cfg, std::int64_t cycle_length_ps)
      : cfg_(cfg), cycle_length_ps_(cycle_length_ps),
        dark_mean_(cfg.dark_count_rate_hz * 1e-12 * static_cast<double>(cycle_length_ps)) {}

  template <class URBG>
  void detect(const Click& c, std::int64_t cycle, std::int64_t cycle_start, const EmissionEvent& e, URBG& rng,
              ChunkOutput& out, bool record) const {
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= cfg_.efficiency[c.channel - 1]) return;
    double t = c.time_ps;
    if (cfg_.timing_jitter_ps > 0)
      t += std::normal_distribution<double>(0.0, static_cast<double>(cfg_.timing_jitter_ps))(rng);
    out.tags.push_back({cycle_start + std::llround(t), c.channel});
    if (record)
      out.origins.push_back({cycle, static_cast<std::int8_t>(e.pulse_index), static_cast<std::int8_t>(c.arm),
                             e.extra_photon, e.coherent});
  }

  template <class URBG>
  void dark_counts(std::int64_t cycle, std::int64_t cycle_start, URBG& rng, ChunkOutput& out, bool record) const {
    if (dark_mean_ <= 0.0) return;
    std::poisson_distribution<int> count(dark_mean_);
    std::uniform_int_distribution<std::int64_t> when(0, cycle_length_ps_ - 1);
    for (int ch = 1; ch <= kChannelCount; ++ch) {
      const int k = count(rng);
      for (int i = 0; i < k; ++i) {
        out.tags.push_back({cycle_start + when(rng), ch});
        if (record) out.origins.push_back(TagOrigin{cycle, -1, -1, false, false});
      }
    }
  }

private:
  DetectorConfig cfg_;
  std::int64_t cycle_length_ps_;
  double dark_mean_;
};

struct SimulationOptions {
  int workers = 1;
  bool record_origins = false;
};

namespace detail {

/// Runs `body(rng, first_cycle, last_cycle, out)` over fixed-size chunks on
/// `workers` threads and merges into a time-sorted stream. Output depends only
/// on the seed, never on the worker count.
template <class Body>
TimeTagStream run_chunked(std::int64_t n_cycles, std::uint64_t seed, const SimulationOptions& opt, Body body) {
  const std::int64_t n_chunks = (n_cycles + kChunkCycles - 1) / kChunkCycles;
  std::vector<ChunkOutput> chunks(static_cast<std::size_t>(n_chunks));
  std::atomic<std::int64_t> next{0};
  std::atomic<std::int64_t> completed_cycles{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    try {
      for (std::int64_t k = next++; k < n_chunks; k = next++) {
        auto rng = chunk_rng(seed, static_cast<std::uint64_t>(k));
        const std::int64_t first = k * kChunkCycles;
        const std::int64_t last = std::min(n_cycles, first + kChunkCycles);
        body(rng, first, last, chunks[static_cast<std::size_t>(k)]);
        completed_cycles += last - first;
      }
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
      next = n_chunks;
    }
  };
  const int workers = std::max(1, opt.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const std::bad_alloc&) {
      throw SimulationError("out of memory during simulation", completed_cycles.load());
    }
  }

  TimeTagStream stream;
  try {
    std::size_t total = 0;
    for (const auto& c : chunks) total += c.tags.size();
    stream.tags.reserve(total);
    if (opt.record_origins) stream.origins.reserve(total);
    for (auto& c : chunks) {
      stream.tags.insert(stream.tags.end(), c.tags.begin(), c.tags.end());
      if (opt.record_origins) stream.origins.insert(stream.origins.end(), c.origins.begin(), c.origins.end());
      c = ChunkOutput{};
    }
    auto less = [](const TimeTag& a, const TimeTag& b) {
      return a.time_ps != b.time_ps ? a.time_ps < b.time_ps : a.channel < b.channel;
    };
    if (!opt.record_origins) {
      std::stable_sort(stream.tags.begin(), stream.tags.end(), less);
    } else {
      std::vector<std::uint32_t> order(stream.tags.size());
      std::iota(order.begin(), order.end(), 0u);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return less(stream.tags[a], stream.tags[b]); });
      std::vector<TimeTag> tags(order.size());
      std::vector<TagOrigin> origins(order.size());
      for (std::size_t i = 0; i < order.size(); ++i) {
        tags[i] = stream.tags[order[i]];
        origins[i] = stream.origins[order[i]];
      }
      stream.tags = std::move(tags);
      stream.origins = std::move(origins);
    }
  } catch (const std::bad_alloc&) {
    throw SimulationError("out of memory while merging time tags", n_cycles);
  }
  return stream;
}

inline text::Header simulation_fingerprint(const char* kind, std::int64_t n_cycles, std::uint64_t seed,
                                           double phase) {
  text::Header h;
  h.set("kind", kind);
  h.set("n_cycles", std::to_string(n_cycles));
  h.set("master_seed", std::to_string(seed));
  h.set("phase_rad", text::format_double(phase));
  return h;
}

} // namespace detail

/// Simulates `n_cycles` excitation cycles of the interferometer experiment.
inline TimeTagStream run_simulation(const ExperimentConfig& config, std::int64_t n_cycles, std::uint64_t master_seed,
                                    const SimulationOptions& opt = {}) {
  config.validate();
  detail::require(n_cycles >= 1, "n_cycles", "must be >= 1");
  const auto& src = config.source;
  const auto& optics = config.optics;
  const DetectorModel detectors(config.detectors, src.repetition_period_ps);

  const PathNetwork nominal_net(optics.coupler_0, optics.coupler_a, optics.coupler_b, optics.phase_difference(), 0.0);
  std::array<double, 8> single_p{};
  for (std::size_t r = 0; r < 8; ++r)
    single_p[r] = nominal_net.probability(detail::kRouteChoices[r].route, detail::kRouteChoices[r].arm);
  const double mismatch = static_cast<double>(src.pulse_separation_ps - optics.arm_delay_difference_ps());
  const double gate = kWavepacketGate * static_cast<double>(src.coherence_time_ps);

  // Every photon is routed classically first. Unitarity keeps the total
  // weight of the interfering group (early photon long arm, late photon short
  // arm) equal to its classical weight, so when a cycle lands in that group
  // only the detector assignment inside it is redrawn from the two-photon
  // probabilities. This samples the same distribution as
  // joint_outcome_distribution without enumerating it.
  auto body = [&](std::mt19937_64& rng, std::int64_t first, std::int64_t last, ChunkOutput& out) {
    CycleEmissions em;
    std::discrete_distribution<int> route(single_p.begin(), single_p.end());
    std::array<int, kMaxPhotonsPerCycle> choice{};
    std::array<double, 16> group{};
    for (std::int64_t cycle = first; cycle < last; ++cycle) {
      const std::int64_t start = cycle * src.repetition_period_ps;
      sample_emissions(src, rng, em);
      const DriftedPhases phases = apply_drift(optics, rng);
      for (int i = 0; i < em.count; ++i) choice[i] = route(rng);
      if (em.count == 2 && em[0].pulse_index != em[1].pulse_index) {
        const int early = em[0].pulse_index < em[1].pulse_index ? 0 : 1, late = 1 - early;
        const auto& ce = detail::kRouteChoices[static_cast<std::size_t>(choice[early])];
        const auto& cl = detail::kRouteChoices[static_cast<std::size_t>(choice[late])];
        const double gap = mismatch + em[late].emission_time - em[early].emission_time;
        if (ce.arm == Arm::long_arm && cl.arm == Arm::short_arm && std::abs(gap) < gate) {
          const double g = pair_overlap(em[early], em[late], src, mismatch);
          if (g > 0.0) {
            const PathNetwork net(optics.coupler_0, optics.coupler_a, optics.coupler_b,
                                  phases.interference_phase(), 0.0);
            for (int e = 0; e < 4; ++e)
              for (int l = 0; l < 4; ++l)
                group[static_cast<std::size_t>(e * 4 + l)] =
                    net.interfering_probability(Route{e / 2, e % 2}, Route{l / 2, l % 2}, g * g);
            const int pick = std::discrete_distribution<int>(group.begin(), group.end())(rng);
            choice[early] = 4 + pick / 4; // long-arm entries are 4..7
            choice[late] = pick % 4;      // short-arm entries are 0..3
          }
        }
      }
      for (int i = 0; i < em.count; ++i) {
        const auto& rc = detail::kRouteChoices[static_cast<std::size_t>(choice[i])];
        const Click c{rc.route.channel(),
                      static_cast<double>(em[i].pulse_index * src.pulse_separation_ps) + em[i].emission_time +
                          detail::arm_delay(optics, rc.arm),
                      i, rc.arm};
        detectors.detect(c, cycle, start, em[i], rng, out, opt.record_origins);
      }
      detectors.dark_counts(cycle, start, rng, out, opt.record_origins);
    }
  };
  TimeTagStream s = detail::run_chunked(n_cycles, master_seed, opt, body);
  s.duration_ps = n_cycles * src.repetition_period_ps;
  s.fingerprint = detail::simulation_fingerprint("interferometer", n_cycles, master_seed, optics.phase_difference());
  return s;
}

/// Hanbury-Brown and Twiss arrangement: single-pulse excitation, one 50/50
/// coupler, detectors on channels 1 and 2 (efficiencies and jitter of those
/// two channels are used).
inline TimeTagStream run_hbt_simulation(const ExperimentConfig& config, std::int64_t n_cycles,
                                        std::uint64_t master_seed, const SimulationOptions& opt = {}) {
  config.validate();
  detail::require(n_cycles >= 1, "n_cycles", "must be >= 1");
  const auto& src = config.source;
  const DetectorModel detectors(config.detectors, src.repetition_period_ps);
  auto body = [&](std::mt19937_64& rng, std::int64_t first, std::int64_t last, ChunkOutput& out) {
    CycleEmissions em;
    std::bernoulli_distribution coin(0.5);
    for (std::int64_t cycle = first; cycle < last; ++cycle) {
      const std::int64_t start = cycle * src.repetition_period_ps;
      sample_emissions(src, rng, em, 1);
      for (int i = 0; i < em.count; ++i) {
        const Click c{coin(rng) ? 1 : 2, em[i].emission_time, i, Arm::short_arm};
        detectors.detect(c, cycle, start, em[i], rng, out, opt.record_origins);
      }
      detectors.dark_counts(cycle, start, rng, out, opt.record_origins);
    }
  };
  TimeTagStream s = detail::run_chunked(n_cycles, master_seed, opt, body);
  s.duration_ps = n_cycles * src.repetition_period_ps;
  s.fingerprint = detail::simulation_fingerprint("hbt", n_cycles, master_seed, 0.0);
  return s;
}

} // namespace franson
