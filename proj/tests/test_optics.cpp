#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "franson/optics.hpp"

using namespace franson;
using std::numbers::pi;

namespace {

CouplerParams coupler(double r) { return CouplerParams::from_reflectance(r); }

// Independent oracle: explicit 2x2 coupler matrices, the two post-selected
// paths per cross pair summed as amplitudes with the cross term weighted by
// the overlap squared.
std::array<double, 4> oracle_rates(double ra, double rb, double phi, double gamma) {
  using M = Eigen::Matrix2cd;
  const std::complex<double> i{0.0, 1.0};
  auto U = [&](double r) {
    M m;
    m << std::sqrt(1 - r), i * std::sqrt(r), i * std::sqrt(r), std::sqrt(1 - r);
    return m;
  };
  // side 0: in through B, out through A; side 1 the reverse. Phase on side 0's long arm.
  const M in[2] = {U(rb), U(ra)};
  const M out[2] = {U(ra), U(rb)};
  const double ph[2] = {phi, 0.0};
  auto amp = [&](int side, bool long_arm, int det) {
    const int arm = long_arm ? 0 : 1;
    std::complex<double> a = out[side](det, arm) * in[side](arm, 0);
    if (long_arm) a *= std::polar(1.0, ph[side]);
    return a;
  };
  std::array<double, 4> g{};
  int k = 0;
  for (int d0 = 0; d0 < 2; ++d0)
    for (int d1 = 0; d1 < 2; ++d1) {
      const auto a = amp(0, true, d0) * amp(1, false, d1);
      const auto b = amp(1, true, d1) * amp(0, false, d0);
      g[k++] = std::norm(a) + std::norm(b) + 2.0 * gamma * gamma * std::real(a * std::conj(b));
    }
  const double s = g[0] + g[1] + g[2] + g[3];
  for (auto& x : g) x /= s;
  return g;
}

} // namespace

TEST(CoincidenceRates, BalancedFullOverlap) {
  const auto r = coincidence_rates(coupler(0.5), coupler(0.5), 0.0, 1.0);
  EXPECT_NEAR(r.gamma_13, 0.5, 1e-15);
  EXPECT_NEAR(r.gamma_14, 0.0, 1e-15);
  EXPECT_NEAR(r.gamma_23, 0.0, 1e-15);
  EXPECT_NEAR(r.gamma_24, 0.5, 1e-15);
}

TEST(CoincidenceRates, NoOverlapEqualPartition) {
  for (double phi : {0.0, 1.0, pi}) {
    const auto r = coincidence_rates(coupler(0.5), coupler(0.5), phi, 0.0);
    for (double v : r.as_array()) EXPECT_NEAR(v, 0.25, 1e-15);
  }
}

TEST(CoincidenceRates, UnbalancedMatchesFrozenOracle) {
  // Computed with an exact rational evaluation of the amplitude sum.
  const std::array<double, 4> frozen{0.34064081632653061224, 0.14915510204081632653, 0.16446122448979591837,
                                     0.34574285714285714286};
  const auto r = coincidence_rates(coupler(0.6), coupler(0.55), pi / 3, 0.9).as_array();
  const auto e = enumerate_amplitudes(coupler(0.6), coupler(0.55), pi / 3, 0.9).as_array();
  const auto o = oracle_rates(0.6, 0.55, pi / 3, 0.9);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(r[k], frozen[k], 1e-14);
    EXPECT_NEAR(e[k], frozen[k], 1e-14);
    EXPECT_NEAR(o[k], frozen[k], 1e-14);
  }
}

TEST(CoincidenceRates, ValidationNamesField) {
  try {
    coincidence_rates(CouplerParams{1.2, -0.2}, coupler(0.5), 0.0, 1.0);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "coupler_a.reflectance");
  }
  EXPECT_THROW(coincidence_rates(coupler(0.5), coupler(0.5), 0.0, 1.5), ValidationError);
  EXPECT_THROW(visibilities(coupler(0.5), CouplerParams{0.5, 0.6}, 1.0), ValidationError);
}

TEST(Visibilities, Examples) {
  const auto v = visibilities(coupler(0.5), coupler(0.5), 1.0);
  for (double x : v.as_array()) EXPECT_NEAR(x, 1.0, 1e-15);
  const auto z = visibilities(coupler(0.3), coupler(0.7), 0.0);
  for (double x : z.as_array()) EXPECT_EQ(x, 0.0);
  const auto w = visibilities(coupler(0.5), coupler(0.4), 1.0);
  EXPECT_NEAR(w.v14, 0.92307692307692307692, 1e-15);
}

TEST(Visibilities, MatchFringeContrastOfRates) {
  const auto a = coupler(0.6), b = coupler(0.55);
  const double gamma = 0.8;
  std::array<double, 4> lo{1e9, 1e9, 1e9, 1e9}, hi{};
  for (int k = 0; k < 3600; ++k) {
    const auto r = unnormalized_coincidence_rates(a, b, 2 * pi * k / 3600, gamma).as_array();
    for (int j = 0; j < 4; ++j) {
      lo[j] = std::min(lo[j], r[j]);
      hi[j] = std::max(hi[j], r[j]);
    }
  }
  const auto v = visibilities(a, b, gamma).as_array();
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(v[j], (hi[j] - lo[j]) / (hi[j] + lo[j]), 1e-12);
}

TEST(PathNetwork, SinglePhotonProbabilitiesSumToOne) {
  const PathNetwork net(coupler(0.3), coupler(0.6), coupler(0.55), 1.1, -0.4);
  double s = 0.0;
  for (int side = 0; side < 2; ++side)
    for (int d = 0; d < 2; ++d)
      for (Arm a : {Arm::short_arm, Arm::long_arm}) s += net.probability({side, d}, a);
  EXPECT_NEAR(s, 1.0, 1e-14);
}

TEST(PathNetwork, InterferingGroupKeepsClassicalTotal) {
  const PathNetwork net(coupler(0.5), coupler(0.6), coupler(0.55), 0.7, 0.0);
  for (double g2 : {0.0, 0.3, 1.0}) {
    double classical = 0.0, quantum = 0.0;
    for (int e = 0; e < 4; ++e)
      for (int l = 0; l < 4; ++l) {
        const Route re{e / 2, e % 2}, rl{l / 2, l % 2};
        classical += net.probability(re, Arm::long_arm) * net.probability(rl, Arm::short_arm);
        quantum += net.interfering_probability(re, rl, g2);
      }
    EXPECT_NEAR(quantum, classical, 1e-14);
  }
}

TEST(PathNetwork, RouteChannelMapping) {
  for (int ch = 1; ch <= 4; ++ch) EXPECT_EQ(Route::from_channel(ch).channel(), ch);
  EXPECT_EQ(Route::from_channel(3).side, 1);
}

TEST(Drift, ZeroSigmaLeavesNominal) {
  InterferometerConfig c;
  c.phase_h = 1.3;
  c.phase_v = 0.2;
  std::mt19937_64 rng(1);
  for (auto mode : {DriftMode::none, DriftMode::common, DriftMode::independent}) {
    c.drift_mode = mode;
    const auto d = apply_drift(c, rng);
    EXPECT_DOUBLE_EQ(d.left, 1.1);
    EXPECT_DOUBLE_EQ(d.right, 1.1);
  }
}

TEST(Drift, CommonModeSharesDraw) {
  InterferometerConfig c;
  c.drift_mode = DriftMode::common;
  c.drift_sigma = 0.5;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto d = apply_drift(c, rng);
    EXPECT_EQ(d.left, d.right);
    EXPECT_EQ(d.interference_phase(), d.nominal);
  }
}

TEST(Drift, IndependentDampsFringeByGaussianFactor) {
  InterferometerConfig c;
  c.drift_mode = DriftMode::independent;
  std::mt19937_64 rng(3);
  for (double sigma : {0.5, 1.0, pi}) {
    c.drift_sigma = sigma;
    const int n = 200000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::cos(apply_drift(c, rng).interference_phase());
    EXPECT_NEAR(s / n, std::exp(-sigma * sigma), 4.0 / std::sqrt(n));
  }
}

TEST(Drift, NegativeSigmaRejected) {
  InterferometerConfig c;
  c.drift_sigma = -0.1;
  std::mt19937_64 rng(1);
  EXPECT_THROW(apply_drift(c, rng), ValidationError);
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(InterferometerConfig, RegimeCheck) {
  InterferometerConfig c;
  EXPECT_NO_THROW(c.validate_regime(175));
  EXPECT_THROW(c.validate_regime(200), ValidationError);
  c.arm_delay_long_ps = c.arm_delay_short_ps;
  EXPECT_THROW(c.validate(), ValidationError);
}
