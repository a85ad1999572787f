#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "franson/source.hpp"

using namespace franson;

namespace {

SourceParams plain() {
  SourceParams p;
  p.g2_zero = 0.0;
  return p;
}

/// Log-linear slope fit over histogram bins [lo, hi) with counts > 0.
double fit_decay(const std::vector<double>& hist, double width, std::size_t lo, std::size_t hi) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(hi - lo), 2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(hi - lo));
  for (std::size_t k = lo; k < hi; ++k) {
    const double w = std::sqrt(hist[k]);
    X(static_cast<Eigen::Index>(k - lo), 0) = w;
    X(static_cast<Eigen::Index>(k - lo), 1) = w * (k + 0.5) * width;
    y(static_cast<Eigen::Index>(k - lo)) = w * std::log(hist[k]);
  }
  const Eigen::Vector2d a = X.colPivHouseholderQr().solve(y);
  return -1.0 / a(1);
}

} // namespace

TEST(SampleEmissions, DarkSourceIsEmpty) {
  SourceParams p;
  p.emission_probability = 0.0;
  p.g2_zero = 0.0;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_TRUE(sample_emissions(p, rng).empty());
}

TEST(SampleEmissions, NoTailMeansCoherentWithFastMean) {
  auto p = plain();
  p.tail_fraction = 0.0;
  p.emission_probability = 1.0;
  p.radiative_decay_ps = p.tau_fast_ps;
  std::mt19937_64 rng(2);
  double sum = 0.0;
  std::size_t n = 0;
  while (n < 1000000) {
    for (const auto& e : sample_emissions(p, rng)) {
      ASSERT_TRUE(e.coherent);
      ASSERT_GE(e.emission_time, 0.0);
      sum += e.emission_time;
      ++n;
    }
  }
  const double tau = static_cast<double>(p.tau_fast_ps);
  EXPECT_NEAR(sum / n, tau, 3.0 * tau / std::sqrt(static_cast<double>(n)));
}

TEST(SampleEmissions, FullTailFitsSlowExponential) {
  auto p = plain();
  p.tail_fraction = 1.0;
  p.emission_probability = 1.0;
  std::mt19937_64 rng(3);
  const double width = 100.0;
  std::vector<double> hist(100, 0.0);
  for (int i = 0; i < 500000; ++i)
    for (const auto& e : sample_emissions(p, rng)) {
      EXPECT_FALSE(e.coherent);
      const auto k = static_cast<std::size_t>(e.emission_time / width);
      if (k < hist.size()) hist[k] += 1.0;
    }
  const double tau = fit_decay(hist, width, 0, 60);
  EXPECT_NEAR(tau, static_cast<double>(p.tau_slow_ps), 0.02 * p.tau_slow_ps);
}

TEST(SampleEmissions, MixedProfileRecoversBothDecays) {
  auto p = plain();
  p.emission_probability = 1.0;
  p.tail_fraction = 0.08;
  p.radiative_decay_ps = p.tau_fast_ps;
  std::mt19937_64 rng(4);
  const double width = 20.0;
  std::vector<double> hist(1000, 0.0);
  for (int i = 0; i < 1000000; ++i)
    for (const auto& e : sample_emissions(p, rng)) {
      const auto k = static_cast<std::size_t>(e.emission_time / width);
      if (k < hist.size()) hist[k] += 1.0;
    }
  // Slow component from the late region, then the fast one from the
  // early region after subtracting the slow extrapolation.
  const double tau_slow = fit_decay(hist, width, 100, 500);
  double amp = 0.0, norm = 0.0;
  for (std::size_t k = 100; k < 500; ++k) {
    amp += hist[k];
    norm += std::exp(-(k + 0.5) * width / tau_slow);
  }
  amp /= norm;
  std::vector<double> fast(hist.size());
  for (std::size_t k = 0; k < hist.size(); ++k) fast[k] = hist[k] - amp * std::exp(-(k + 0.5) * width / tau_slow);
  const double tau_fast = fit_decay(fast, width, 0, 25);
  EXPECT_NEAR(tau_slow, static_cast<double>(p.tau_slow_ps), 0.05 * p.tau_slow_ps);
  EXPECT_NEAR(tau_fast, static_cast<double>(p.tau_fast_ps), 0.05 * p.tau_fast_ps);
}

TEST(SampleEmissions, EmissionRatePerPulse) {
  auto p = plain();
  p.emission_probability = 0.37;
  std::mt19937_64 rng(5);
  const int cycles = 200000;
  std::size_t n = 0;
  for (int i = 0; i < cycles; ++i) n += sample_emissions(p, rng).size();
  const double pulses = 2.0 * cycles;
  EXPECT_NEAR(n / pulses, 0.37, 3.0 * std::sqrt(0.37 * 0.63 / pulses));
}

TEST(SampleEmissions, ExtraPhotonsMatchConfiguredG2) {
  SourceParams p;
  p.emission_probability = 0.5;
  p.g2_zero = 0.2;
  std::mt19937_64 rng(6);
  // Per-pulse photon-number moments give g2 = <n(n-1)> / <n>^2.
  double n1 = 0.0, n2 = 0.0;
  const int cycles = 1000000;
  for (int i = 0; i < cycles; ++i) {
    int per[2] = {0, 0};
    for (const auto& e : sample_emissions(p, rng)) ++per[e.pulse_index];
    for (int k : per) {
      n1 += k;
      n2 += k * (k - 1);
    }
  }
  const double pulses = 2.0 * cycles;
  const double g2 = (n2 / pulses) / ((n1 / pulses) * (n1 / pulses));
  EXPECT_NEAR(g2, 0.2, 0.01);
}

TEST(TwoPhotonProbability, ReproducesG2) {
  for (double p : {0.1, 0.5, 1.0})
    for (double g : {0.0, 0.015, 0.3, 0.5}) {
      if (g * p > 0.5) continue;
      const double p2 = two_photon_probability(p, g);
      EXPECT_NEAR(2 * p2 / ((p + p2) * (p + p2)), g, 1e-12);
      EXPECT_LE(p2, p);
    }
}

TEST(PairOverlap, Examples) {
  SourceParams p;
  p.intrinsic_overlap = 1.0;
  EmissionEvent a{0, 30.0, true, false}, b{1, 30.0, true, false};
  EXPECT_DOUBLE_EQ(pair_overlap(a, b, p), 1.0);
  b.coherent = false;
  EXPECT_EQ(pair_overlap(a, b, p), 0.0);
  b.coherent = true;
  p.intrinsic_overlap = 0.95;
  b.emission_time = 30.0 + 2.0 * p.coherence_time_ps;
  EXPECT_NEAR(pair_overlap(a, b, p), 0.34948546911287020552, 1e-15);
  EXPECT_EQ(pair_overlap(a, b, p), pair_overlap(b, a, p));
  EmissionEvent c{0, 10.0, true, false};
  EXPECT_THROW(pair_overlap(a, c, p), ContractViolation);
}

TEST(MeanPromptOverlap, MatchesClosedFormWithWideGate) {
  SourceParams p;
  // E[exp(-|d|/c)] for d ~ Laplace(b) is 1 / (1 + b/c); the gate cuts off
  // a negligible part at these scales.
  const double b = static_cast<double>(p.radiative_decay_ps), c = static_cast<double>(p.coherence_time_ps);
  EXPECT_NEAR(mean_prompt_overlap_squared(p), p.intrinsic_overlap * p.intrinsic_overlap / (1.0 + b / c), 1e-6);
  // Default calibration: configured effective gamma^2 = 0.8904.
  EXPECT_NEAR(mean_prompt_overlap_squared(p), 0.8904, 5e-4);
}

TEST(SourceParams, Validation) {
  SourceParams p;
  EXPECT_NO_THROW(p.validate());
  p.tau_fast_ps = 3000;
  EXPECT_THROW(p.validate(), ValidationError);
  p = SourceParams{};
  p.pulse_separation_ps = 7000;
  EXPECT_THROW(p.validate(), ValidationError);
  p = SourceParams{};
  p.g2_zero = 1.5;
  EXPECT_THROW(p.validate(), ValidationError);
}
