#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "franson/analytic_model.hpp"
#include "franson/correlator.hpp"
#include "franson/montecarlo.hpp"

using namespace franson;
using std::numbers::pi;

namespace {

ExperimentConfig ideal() {
  ExperimentConfig c;
  c.source.g2_zero = 0.0;
  c.source.tail_fraction = 0.0;
  c.source.intrinsic_overlap = 1.0;
  c.detectors.efficiency = {1, 1, 1, 1};
  c.detectors.dark_count_rate_hz = 0.0;
  c.detectors.timing_jitter_ps = 0;
  return c;
}

CycleEmissions pair_at(double t_early, double t_late) {
  CycleEmissions em;
  em.push({0, t_early, true, false});
  em.push({1, t_late, true, false});
  return em;
}

double window_counts(const CorrelationHistogram& h, double half) {
  double s = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) s += h.counts[k] * bin_fraction(h, k, -half, half);
  return s;
}

} // namespace

TEST(JointDistribution, NoPhotonsIsSingleEmptyOutcome) {
  const auto c = ideal();
  const auto d = joint_outcome_distribution(CycleEmissions{}, c.optics, c.source);
  ASSERT_EQ(d.outcomes.size(), 1u);
  EXPECT_EQ(d.outcomes[0].count, 0);
  EXPECT_EQ(d.outcomes[0].probability, 1.0);
}

TEST(JointDistribution, SumsToOne) {
  auto c = ideal();
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    c.optics.phase_h = std::uniform_real_distribution<double>(0, 2 * pi)(rng);
    c.source.g2_zero = 0.3;
    const auto em = sample_emissions(c.source, rng);
    CycleEmissions buf;
    for (const auto& e : em) buf.push(e);
    EXPECT_NEAR(joint_outcome_distribution(buf, c.optics, c.source).total(), 1.0, 1e-12);
  }
}

TEST(JointDistribution, TimeCoincidentMassesFollowAmplitudes) {
  auto c = ideal();
  c.source.intrinsic_overlap = 0.9;
  c.optics.phase_h = pi / 3;
  const auto d = joint_outcome_distribution(pair_at(0.0, 0.0), c.optics, c.source);
  std::array<double, 4> m{};
  for (const auto& o : d.outcomes) {
    if (o.clicks[0].arm != Arm::long_arm || o.clicks[1].arm != Arm::short_arm) continue;
    const int a = std::min(o.clicks[0].channel, o.clicks[1].channel);
    const int b = std::max(o.clicks[0].channel, o.clicks[1].channel);
    for (std::size_t k = 0; k < 4; ++k)
      if (kCrossPairs[k] == ChannelPair{a, b}) m[k] += o.probability;
  }
  const double s = m[0] + m[1] + m[2] + m[3];
  const auto ref = enumerate_amplitudes(c.optics.coupler_a, c.optics.coupler_b, pi / 3, 0.9).as_array();
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(m[k] / s, ref[k], 1e-12);
}

TEST(JointDistribution, BalancedInPhaseSuppressesMixedPairs) {
  auto c = ideal();
  c.optics.coupler_a = c.optics.coupler_b = CouplerParams{};
  const auto d = joint_outcome_distribution(pair_at(0.0, 0.0), c.optics, c.source);
  for (const auto& o : d.outcomes) {
    if (o.clicks[0].arm != Arm::long_arm || o.clicks[1].arm != Arm::short_arm) continue;
    const int a = std::min(o.clicks[0].channel, o.clicks[1].channel);
    const int b = std::max(o.clicks[0].channel, o.clicks[1].channel);
    if ((a == 1 && b == 4) || (a == 2 && b == 3)) {
      EXPECT_NEAR(o.probability, 0.0, 1e-15);
    }
  }
}

TEST(RunSimulation, DarkSourceWithoutDarkCountsIsEmpty) {
  auto c = ideal();
  c.source.emission_probability = 0.0;
  const auto s = run_simulation(c, 100000, 1);
  EXPECT_TRUE(s.tags.empty());
  EXPECT_EQ(s.duration_ps, 100000 * c.source.repetition_period_ps);
}

TEST(RunSimulation, DarkCountRate) {
  auto c = ideal();
  c.source.emission_probability = 0.0;
  c.detectors.dark_count_rate_hz = 1e5;
  const auto s = run_simulation(c, 1000000, 3);
  // 1e5 /s x 12.5 ms x 4 detectors
  EXPECT_NEAR(static_cast<double>(s.tags.size()), 5000.0, 3.0 * std::sqrt(5000.0));
  EXPECT_NO_THROW(s.validate());
}

TEST(RunSimulation, SameSeedIsBitIdenticalAcrossWorkers) {
  const ExperimentConfig c;
  const auto a = run_simulation(c, 100000, 42, {1, false});
  const auto b = run_simulation(c, 100000, 42, {1, false});
  const auto w = run_simulation(c, 100000, 42, {4, false});
  EXPECT_EQ(a.tags, b.tags);
  EXPECT_EQ(a.tags, w.tags);
  const auto other = run_simulation(c, 100000, 43, {1, false});
  EXPECT_NE(a.tags, other.tags);
}

TEST(RunSimulation, OriginsAlignWithTags) {
  const ExperimentConfig c;
  const auto s = run_simulation(c, 50000, 5, {3, true});
  ASSERT_EQ(s.origins.size(), s.tags.size());
  for (std::size_t i = 0; i < s.tags.size(); ++i) {
    const auto& o = s.origins[i];
    if (o.is_dark()) continue;
    // arm delays and slow emission carry photons past their own cycle
    const auto offset = s.tags[i].time_ps - o.cycle * c.source.repetition_period_ps;
    EXPECT_GT(offset, c.optics.arm_delay_short_ps - 1000);
  }
  const auto plain = run_simulation(c, 50000, 5, {1, false});
  EXPECT_EQ(plain.tags, s.tags);
}

TEST(RunSimulation, TimeSortedWithHeader) {
  const ExperimentConfig c;
  const auto s = run_simulation(c.at_phase(1.25), 20000, 9);
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.fingerprint.get("master_seed").value_or(""), "9");
  EXPECT_EQ(s.fingerprint.get("phase_rad").value_or(""), text::format_double(1.25));
}

TEST(RunSimulation, RejectsInvalidConfig) {
  ExperimentConfig c;
  c.source.emission_probability = 1.5;
  EXPECT_THROW(run_simulation(c, 10, 1), ValidationError);
  EXPECT_THROW(run_simulation(ExperimentConfig{}, 0, 1), ValidationError);
}

TEST(RunSimulation, CentralPeakProportionsFollowRates) {
  auto c = ideal();
  const double phi = pi / 3;
  const auto s = run_simulation(c.at_phase(phi), 300000, 11, {2, false});
  std::array<double, 4> n{};
  for (std::size_t k = 0; k < 4; ++k) n[k] = window_counts(correlate(s, kCrossPairs[k]), 300.0);
  const double total = n[0] + n[1] + n[2] + n[3];
  const double g = std::sqrt(mean_prompt_overlap_squared(c.source));
  const auto ref = coincidence_rates(c.optics.coupler_a, c.optics.coupler_b, phi, g).as_array();
  for (std::size_t k = 0; k < 4; ++k) {
    const double sigma = std::sqrt(total * ref[k] * (1.0 - ref[k]));
    EXPECT_NEAR(n[k], total * ref[k], 4.0 * sigma) << kCrossPairs[k].str();
  }
}

TEST(RunSimulation, HistogramMatchesAnalyticModel) {
  const ExperimentConfig c = ExperimentConfig{}.at_phase(2.0);
  const std::int64_t n = 400000;
  const auto s = run_simulation(c, n, 21, {2, false});
  const AnalyticModel model(c);
  for (const auto& p : kCrossPairs) {
    const auto h = correlate(s, p, 20000, 200);
    const auto m = model.histogram(p, n, 20000, 200);
    double chi2 = 0.0;
    int dof = 0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      if (m.counts[k] < 10.0) continue;
      const double d = static_cast<double>(h.counts[k]) - m.counts[k];
      chi2 += d * d / m.counts[k];
      ++dof;
    }
    ASSERT_GT(dof, 50);
    EXPECT_LT(chi2 / dof, 1.3) << p.str() << " chi2 " << chi2 << " dof " << dof;
  }
}

TEST(HbtSimulation, SingleEmitterHasEmptyCentralPeak) {
  auto c = ideal();
  const auto s = run_hbt_simulation(c, 200000, 2);
  const auto h = correlate(s, {1, 2}, 51000, 50);
  EXPECT_EQ(window_counts(h, 300.0), 0.0);
  EXPECT_GT(h.total_events, 0);
}
