#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "franson/correlator.hpp"
#include "franson/montecarlo.hpp"

using namespace franson;
using std::numbers::pi;

namespace {

TimeTagStream tags(std::vector<TimeTag> t) {
  TimeTagStream s;
  s.tags = std::move(t);
  s.duration_ps = s.tags.empty() ? 0 : s.tags.back().time_ps + 1;
  return s;
}

double sum(const CorrelationHistogram& h) {
  double s = 0.0;
  for (auto c : h.counts) s += static_cast<double>(c);
  return s;
}

} // namespace

TEST(Correlate, SingleChannelGivesEmptyHistogram) {
  const auto s = tags({{100, 1}, {900, 1}, {5000, 1}});
  const auto h = correlate(s, {1, 3});
  EXPECT_EQ(sum(h), 0.0);
  EXPECT_EQ(h.total_events, 0);
}

TEST(Correlate, TwoClicksLandInOneBin) {
  const auto s = tags({{1000, 1}, {1400, 3}});
  const auto h = correlate(s, {1, 3}, 16000, 100);
  EXPECT_EQ(h.total_events, 1);
  for (std::size_t k = 0; k < h.size(); ++k) EXPECT_EQ(h.counts[k], h.bin_center(k) == 400 ? 1 : 0);
}

TEST(Correlate, BinEdgesAreHalfOpen) {
  const auto h = CorrelationHistogram::make({1, 3}, 16000, 50);
  EXPECT_EQ(h.index_of(0), h.half_bins());
  EXPECT_EQ(h.index_of(-25), h.half_bins());
  EXPECT_EQ(h.index_of(24), h.half_bins());
  EXPECT_EQ(h.index_of(25), h.half_bins() + 1);
  EXPECT_EQ(h.index_of(-16025), 0);
  EXPECT_EQ(h.index_of(-16026), -1);
  EXPECT_EQ(h.index_of(16024), static_cast<std::int64_t>(h.size()) - 1);
  EXPECT_EQ(h.index_of(16025), -1);
  const auto edges = h.bin_edges();
  EXPECT_EQ(edges.size(), h.size() + 1);
  EXPECT_EQ(edges.front(), -16025.0);
}

TEST(Correlate, UncorrelatedStreamsAreFlat) {
  std::mt19937_64 rng(4);
  const std::int64_t duration = 10'000'000'000;
  std::uniform_int_distribution<std::int64_t> when(0, duration - 1);
  std::vector<TimeTag> t;
  for (int i = 0; i < 10000; ++i) t.push_back({when(rng), 1});
  for (int i = 0; i < 10000; ++i) t.push_back({when(rng), 3});
  std::sort(t.begin(), t.end(), [](const TimeTag& a, const TimeTag& b) { return a.time_ps < b.time_ps; });
  auto s = tags(std::move(t));
  s.duration_ps = duration;
  const auto h = correlate(s, {1, 3});
  // expected per bin: N1 N3 w / duration
  const double per_bin = 1e4 * 1e4 * 50.0 / static_cast<double>(duration);
  const double expected = per_bin * static_cast<double>(h.size());
  EXPECT_NEAR(sum(h), expected, 4.0 * std::sqrt(expected));
  double left = 0.0, right = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) (h.bin_center(k) < 0 ? left : right) += h.counts[k];
  EXPECT_NEAR(left, right, 4.0 * std::sqrt(left + right));
}

TEST(Correlate, RejectsBadPairs) {
  const auto s = tags({});
  EXPECT_THROW(correlate(s, {1, 1}), ValidationError);
  EXPECT_THROW(correlate(s, {0, 3}), ValidationError);
  EXPECT_THROW(correlate(s, {1, 5}), ValidationError);
  EXPECT_THROW(correlate(s, {1, 3}, 8000), ValidationError);
}

TEST(Correlate, InPhaseAndAntiPhaseShareSatellites) {
  ExperimentConfig c;
  c.optics.coupler_a = c.optics.coupler_b = CouplerParams{};
  const auto s0 = run_simulation(c.at_phase(0.0), 300000, 5);
  const auto s1 = run_simulation(c.at_phase(pi), 300000, 6);
  const auto h0 = correlate(s0, {1, 3});
  const auto h1 = correlate(s1, {1, 3});
  auto area = [](const CorrelationHistogram& h, double lo, double hi) {
    double a = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) a += h.counts[k] * bin_fraction(h, k, lo, hi);
    return a;
  };
  // same-cycle side peak at +1800 ps and the next-cycle peak at 12500 ps
  for (double center : {1800.0, 12500.0}) {
    const double a0 = area(h0, center - 300, center + 300), a1 = area(h1, center - 300, center + 300);
    EXPECT_NEAR(a0, a1, 4.0 * std::sqrt(a0 + a1)) << center;
  }
  const double z0 = area(h0, -300, 300), z1 = area(h1, -300, 300);
  EXPECT_GT(z0, 3.0 * z1);
}

TEST(Normalize, Example) {
  auto h = CorrelationHistogram::make({1, 3}, 20000, 50);
  h.counts[static_cast<std::size_t>(h.half_bins())] = 50;
  // 1000 counts in the normalization region, one bin at 8000 ps
  h.counts[static_cast<std::size_t>(h.half_bins() + 160)] = 1000;
  const auto n = normalize_correlation(h);
  EXPECT_DOUBLE_EQ(n.gamma_window, 0.05);
  EXPECT_DOUBLE_EQ(n.normalization_total, 1000.0);
  EXPECT_DOUBLE_EQ(n.central_total, 50.0);
  EXPECT_NEAR(n.gamma_error(), 0.05 * std::sqrt(1.0 / 50 + 1.0 / 1000), 1e-15);

  auto scaled = h;
  for (auto& c : scaled.counts) c *= 7;
  EXPECT_NEAR(normalize_correlation(scaled).gamma_window, n.gamma_window, 1e-15);
}

TEST(Normalize, EmptyRegionIsDegenerate) {
  auto h = CorrelationHistogram::make({1, 3}, 20000, 50);
  h.counts[static_cast<std::size_t>(h.half_bins())] = 50;
  h.counts.back() = 9; // beyond +-16000 ps
  EXPECT_THROW(normalize_correlation(h), DegenerateInputError);
}

TEST(Normalize, PartialBinsCountFractionally) {
  auto h = CorrelationHistogram::make({1, 3}, 20000, 50);
  // window edge at +300 ps cuts the bin centered at 300 in half
  h.counts[static_cast<std::size_t>(h.half_bins() + 6)] = 100;
  h.counts[static_cast<std::size_t>(h.half_bins() + 100)] = 100;
  const auto n = normalize_correlation(h);
  EXPECT_DOUBLE_EQ(n.central_total, 50.0);
  EXPECT_DOUBLE_EQ(n.normalization_total, 150.0);
}

TEST(GlobalRenormalize, ScalesMeanSumToOne) {
  GammaMap g;
  const double vals[2][4] = {{0.1, 0.2, 0.3, 0.4}, {0.3, 0.3, 0.3, 0.3}};
  for (int s = 0; s < 2; ++s)
    for (std::size_t k = 0; k < 4; ++k) g[{kCrossPairs[k], s * 1.0}] = vals[s][k];
  double scale = 0.0;
  const auto r = global_renormalize(g, &scale);
  EXPECT_NEAR(scale, 1.0 / 1.1, 1e-15);
  EXPECT_NEAR(r.at({kCrossPairs[3], 0.0}), 0.4 / 1.1, 1e-15);
  EXPECT_NEAR(r.at({kCrossPairs[0], 1.0}), 0.3 / 1.1, 1e-15);
}

TEST(GlobalRenormalize, AlreadyNormalizedIsUnchanged) {
  GammaMap g;
  for (std::size_t k = 0; k < 4; ++k) g[{kCrossPairs[k], 0.5}] = 0.25;
  const auto r = global_renormalize(g);
  for (const auto& [key, v] : r) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(GlobalRenormalize, MissingPairListed) {
  GammaMap g;
  for (std::size_t k = 0; k < 3; ++k) g[{kCrossPairs[k], 0.0}] = 0.25;
  try {
    global_renormalize(g);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("2,4"), std::string::npos);
  }
}

TEST(HistogramIo, RoundTripIsExact) {
  auto h = CorrelationHistogram::make({2, 4}, 16000, 50);
  std::mt19937_64 rng(1);
  for (auto& c : h.counts) c = static_cast<std::int64_t>(rng() % 1000);
  for (auto c : h.counts) h.total_events += c;
  text::Header meta;
  meta.set("phase_rad", "1.5");
  std::stringstream ss;
  write_histogram(ss, h, meta);
  text::Header back_meta;
  const auto back = read_histogram<std::int64_t>(ss, "<test>", &back_meta);
  EXPECT_EQ(back, h);
  EXPECT_EQ(back_meta, meta);
}

TEST(HistogramIo, RealRoundTripIsExact) {
  auto h = ModelHistogram::make({1, 4}, 16000, 50);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1e4);
  for (auto& c : h.counts) c = u(rng);
  for (auto c : h.counts) h.total_events += c;
  std::stringstream ss;
  write_histogram(ss, h);
  EXPECT_EQ(read_histogram<double>(ss), h);
}

TEST(HistogramIo, NormalizedRoundTripIsExact) {
  auto h = CorrelationHistogram::make({1, 3}, 20000, 50);
  std::mt19937_64 rng(3);
  for (auto& c : h.counts) c = static_cast<std::int64_t>(rng() % 97);
  const auto n = normalize_correlation(h);
  std::stringstream ss;
  write_normalized(ss, n);
  EXPECT_EQ(read_normalized(ss), n);
}

TEST(HistogramIo, MalformedRowReportsLine) {
  std::stringstream ss("# pair: 1,3\n# bin_width_ps: 50\n# half_range_ps: 50\n-50,1\n0,x\n50,2\n");
  try {
    read_histogram<std::int64_t>(ss);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
}

TEST(StreamIo, RoundTripIsExact) {
  const auto s = run_simulation(ExperimentConfig{}, 5000, 8);
  std::stringstream ss;
  write_stream(ss, s);
  const auto back = read_stream(ss);
  EXPECT_EQ(back.tags, s.tags);
  EXPECT_EQ(back.duration_ps, s.duration_ps);
  EXPECT_EQ(back.fingerprint, s.fingerprint);
}

TEST(StreamIo, BadChannelReportsLine) {
  std::stringstream ss("# duration_ps: 1000\n1,100\n7,200\n");
  try {
    read_stream(ss);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}
