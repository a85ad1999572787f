#pragma once

// Correlation histograms between detector pairs, the central-window
// normalization that turns them into coincidence probabilities, and the
// global renormalization across a phase scan.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "franson/error.hpp"
#include "franson/text_io.hpp"
#include "franson/timetag.hpp"

namespace franson {

struct ChannelPair {
  int first = 1;
  int second = 3;

  auto operator<=>(const ChannelPair&) const = default;
  std::string str() const { return std::to_string(first) + "," + std::to_string(second); }
};

/// The four cross pairs, one detector on each side.
inline constexpr std::array<ChannelPair, 4> kCrossPairs{{{1, 3}, {1, 4}, {2, 3}, {2, 4}}};

inline void validate_pair(const ChannelPair& p) {
  auto ok = [](int c) { return c >= 1 && c <= kChannelCount; };
  detail::require(ok(p.first) && ok(p.second), "pair", "channels must be in 1..4, got " + p.str());
  detail::require(p.first != p.second, "pair", "channels must differ, got " + p.str());
}

/// Overlap length of [lo, hi) with [a, b].
inline double interval_overlap(double lo, double hi, double a, double b) {
  return std::max(0.0, std::min(hi, b) - std::max(lo, a));
}

/// Uniform histogram of t_second - t_first. Bin k (0-based) is centered at
/// (k - n) * bin_width with n = half_range / bin_width, so zero delay sits at
/// the center of the middle bin.
template <class Count>
struct BasicCorrelationHistogram {
  ChannelPair pair{};
  std::int64_t bin_width_ps = 50;
  std::int64_t half_range_ps = 20000;
  std::vector<Count> counts;
  Count total_events{};

  std::int64_t half_bins() const { return half_range_ps / bin_width_ps; }
  std::size_t size() const { return counts.size(); }
  std::int64_t bin_center(std::size_t k) const {
    return (static_cast<std::int64_t>(k) - half_bins()) * bin_width_ps;
  }
  double bin_lo(std::size_t k) const { return static_cast<double>(bin_center(k)) - 0.5 * bin_width_ps; }
  double bin_hi(std::size_t k) const { return static_cast<double>(bin_center(k)) + 0.5 * bin_width_ps; }

  std::vector<double> bin_edges() const {
    std::vector<double> e;
    e.reserve(size() + 1);
    for (std::size_t k = 0; k < size(); ++k) e.push_back(bin_lo(k));
    if (!counts.empty()) e.push_back(bin_hi(size() - 1));
    return e;
  }

  /// Empty histogram with the given geometry.
  static BasicCorrelationHistogram make(ChannelPair p, std::int64_t half_range, std::int64_t bin_width) {
    detail::require(bin_width > 0, "bin_width_ps", "must be > 0");
    detail::require(half_range > 0 && half_range % bin_width == 0, "half_range_ps",
                    "must be a positive multiple of bin_width_ps");
    BasicCorrelationHistogram h;
    h.pair = p;
    h.bin_width_ps = bin_width;
    h.half_range_ps = half_range;
    h.counts.assign(static_cast<std::size_t>(2 * (half_range / bin_width) + 1), Count{});
    return h;
  }

  /// Index of the bin containing delay `d`, or -1 when out of range.
  /// Bin k covers [c - w/2, c + w/2), evaluated in doubled units so odd
  /// widths stay exact.
  std::int64_t index_of(std::int64_t d) const {
    const std::int64_t num = 2 * (d + half_bins() * bin_width_ps) + bin_width_ps;
    if (num < 0) return -1;
    const std::int64_t k = num / (2 * bin_width_ps);
    return k < static_cast<std::int64_t>(size()) ? k : -1;
  }

  bool operator==(const BasicCorrelationHistogram&) const = default;
};

using CorrelationHistogram = BasicCorrelationHistogram<std::int64_t>;
/// Expected counts (analytic mode); same layout, real-valued.
using ModelHistogram = BasicCorrelationHistogram<double>;

/// Full start-stop correlation: every click pair within range is counted.
inline CorrelationHistogram correlate(const TimeTagStream& stream, ChannelPair pair, std::int64_t half_range_ps = 20000,
                                      std::int64_t bin_width_ps = 50) {
  validate_pair(pair);
  detail::require(half_range_ps >= 16000, "half_range_ps", "must be >= 16000 to cover the normalization window");
  auto h = CorrelationHistogram::make(pair, half_range_ps, bin_width_ps);
  std::vector<std::int64_t> a, b;
  for (const auto& t : stream.tags) {
    if (t.channel == pair.first) a.push_back(t.time_ps);
    else if (t.channel == pair.second) b.push_back(t.time_ps);
  }
  const std::int64_t reach = half_range_ps + bin_width_ps;
  std::size_t start = 0;
  for (const std::int64_t ta : a) {
    while (start < b.size() && b[start] < ta - reach) ++start;
    for (std::size_t j = start; j < b.size() && b[j] - ta <= reach; ++j) {
      const auto k = h.index_of(b[j] - ta);
      if (k < 0) continue;
      ++h.counts[static_cast<std::size_t>(k)];
      ++h.total_events;
    }
  }
  return h;
}

struct NormalizedCorrelation {
  ChannelPair pair{};
  std::int64_t bin_width_ps = 50;
  std::int64_t half_range_ps = 20000;
  std::int64_t central_window_ps = 600;
  std::int64_t norm_half_range_ps = 16000;
  std::vector<double> values;
  double gamma_window = 0.0;
  double normalization_total = 0.0; ///< raw counts in the normalization region
  double central_total = 0.0;       ///< raw counts in the central window

  std::int64_t bin_center(std::size_t k) const {
    return (static_cast<std::int64_t>(k) - half_range_ps / bin_width_ps) * bin_width_ps;
  }

  /// Poisson counting error on gamma_window.
  double gamma_error() const {
    if (central_total <= 0.0 || normalization_total <= 0.0) return 0.0;
    return gamma_window * std::sqrt(1.0 / central_total + 1.0 / normalization_total);
  }

  /// Number of bins in the central window, counting partial bins fractionally.
  double central_bins() const { return static_cast<double>(central_window_ps) / static_cast<double>(bin_width_ps); }

  bool operator==(const NormalizedCorrelation&) const = default;
};

/// Fraction of bin `k` inside [a, b].
template <class H>
double bin_fraction(const H& h, std::size_t k, double a, double b) {
  const double lo = static_cast<double>(h.bin_center(k)) - 0.5 * h.bin_width_ps;
  return interval_overlap(lo, lo + h.bin_width_ps, a, b) / static_cast<double>(h.bin_width_ps);
}

/// Divides every bin by the counts within +-norm_half_range outside the
/// central window. Bins straddling a boundary contribute by overlap fraction.
template <class Count>
NormalizedCorrelation normalize_correlation(const BasicCorrelationHistogram<Count>& hist,
                                            std::int64_t central_window_ps = 600,
                                            std::int64_t norm_half_range_ps = 16000) {
  detail::require(central_window_ps > 0, "central_window_ps", "must be > 0");
  detail::require(2 * norm_half_range_ps > central_window_ps, "norm_half_range_ps",
                  "must exceed half the central window");
  detail::require(hist.half_range_ps >= norm_half_range_ps, "half_range_ps",
                  "histogram must cover +-norm_half_range_ps");
  const double c = 0.5 * static_cast<double>(central_window_ps);
  const double n = static_cast<double>(norm_half_range_ps);
  double norm = 0.0, central = 0.0;
  for (std::size_t k = 0; k < hist.size(); ++k) {
    const double v = static_cast<double>(hist.counts[k]);
    if (v == 0.0) continue;
    const double fc = bin_fraction(hist, k, -c, c);
    norm += v * (bin_fraction(hist, k, -n, n) - fc);
    central += v * fc;
  }
  if (!(norm > 0.0))
    throw DegenerateInputError("pair " + hist.pair.str() + ": no counts in the normalization region");
  NormalizedCorrelation out;
  out.pair = hist.pair;
  out.bin_width_ps = hist.bin_width_ps;
  out.half_range_ps = hist.half_range_ps;
  out.central_window_ps = central_window_ps;
  out.norm_half_range_ps = norm_half_range_ps;
  out.normalization_total = norm;
  out.central_total = central;
  out.values.resize(hist.size());
  for (std::size_t k = 0; k < hist.size(); ++k) out.values[k] = static_cast<double>(hist.counts[k]) / norm;
  double g = 0.0;
  for (std::size_t k = 0; k < out.values.size(); ++k) g += out.values[k] * bin_fraction(out, k, -c, c);
  out.gamma_window = g;
  return out;
}

// ── Global renormalization ──────────────────────────────────────────────────

using GammaKey = std::pair<ChannelPair, double>; ///< (pair, phase)
using GammaMap = std::map<GammaKey, double>;

/// Scales every value by one constant so that the mean over phase settings
/// of the four-pair sum is 1. Returns the applied factor through `scale`.
inline GammaMap global_renormalize(const GammaMap& gammas, double* scale = nullptr) {
  std::map<double, std::vector<ChannelPair>> by_phase;
  for (const auto& [key, v] : gammas) by_phase[key.second].push_back(key.first);
  detail::require(!by_phase.empty(), "gammas", "at least one phase setting is required");
  std::string gaps;
  for (const auto& [phase, pairs] : by_phase) {
    for (const auto& p : kCrossPairs) {
      if (std::find(pairs.begin(), pairs.end(), p) == pairs.end())
        gaps += (gaps.empty() ? "" : "; ") + std::string("phase ") + text::format_double(phase) + " missing pair " +
                p.str();
    }
  }
  if (!gaps.empty()) throw ValidationError("gammas", gaps);
  double mean = 0.0;
  for (const auto& [phase, pairs] : by_phase) {
    for (const auto& p : kCrossPairs) mean += gammas.at({p, phase});
  }
  mean /= static_cast<double>(by_phase.size());
  if (!(mean > 0.0)) throw DegenerateInputError("coincidence sums are zero");
  GammaMap out;
  for (const auto& [key, v] : gammas) out.emplace(key, v / mean);
  if (scale) *scale = 1.0 / mean;
  return out;
}

// ── File formats ────────────────────────────────────────────────────────────

namespace detail {

inline ChannelPair parse_pair(const std::string& s, const std::string& source) {
  auto parts = text::split(s, ',');
  if (parts.size() != 2) throw ParseError(source, 0, "pair must be 'i,j'");
  auto a = text::parse_int(parts[0]), b = text::parse_int(parts[1]);
  if (!a || !b) throw ParseError(source, 0, "pair must be 'i,j'");
  ChannelPair p{static_cast<int>(*a), static_cast<int>(*b)};
  try {
    validate_pair(p);
  } catch (const ValidationError& e) {
    throw ParseError(source, 0, e.what());
  }
  return p;
}

inline std::int64_t header_int(const text::Header& h, const std::string& key, const std::string& source) {
  auto v = text::parse_int(h.require(key, source));
  if (!v) throw ParseError(source, 0, "header '" + key + "' must be an integer");
  return *v;
}

inline double header_double(const text::Header& h, const std::string& key, const std::string& source) {
  auto v = text::parse_double(h.require(key, source));
  if (!v) throw ParseError(source, 0, "header '" + key + "' must be a number");
  return *v;
}

template <class T>
std::string format_value(T v) {
  if constexpr (std::is_integral_v<T>) return std::to_string(v);
  else return text::format_double(v);
}

/// Reads "bin_center_ps,value" rows and checks they follow the header's grid.
template <class T, class Parse>
std::vector<T> read_rows(std::istream& is, const std::string& source, std::size_t& line_no, std::string first,
                         std::int64_t first_center, std::int64_t bin_width, Parse parse) {
  std::vector<T> out;
  std::string line = std::move(first);
  auto handle = [&](const std::string& l) {
    auto cols = text::split(l, ',');
    if (cols.size() != 2) throw ParseError(source, line_no, "expected 'bin_center_ps,value'");
    auto c = text::parse_int(cols[0]);
    auto v = parse(cols[1]);
    if (!c || !v) throw ParseError(source, line_no, "expected 'bin_center_ps,value'");
    if (*c != first_center + static_cast<std::int64_t>(out.size()) * bin_width)
      throw ParseError(source, line_no, "bin centers must be contiguous and uniform");
    out.push_back(*v);
  };
  if (!line.empty()) handle(line);
  while (std::getline(is, line)) {
    ++line_no;
    if (text::trim(line).empty() || line[0] == '#') continue;
    handle(line);
  }
  return out;
}

} // namespace detail

/// `meta` entries are written first and come back through `read_histogram`.
template <class Count>
void write_histogram(std::ostream& os, const BasicCorrelationHistogram<Count>& h, const text::Header& meta = {}) {
  text::Header hd = meta;
  hd.set("pair", h.pair.str());
  hd.set("bin_width_ps", std::to_string(h.bin_width_ps));
  hd.set("half_range_ps", std::to_string(h.half_range_ps));
  hd.set("total_events", detail::format_value(h.total_events));
  hd.set("columns", "bin_center_ps,count");
  hd.write(os);
  for (std::size_t k = 0; k < h.size(); ++k) os << h.bin_center(k) << ',' << detail::format_value(h.counts[k]) << '\n';
}

template <class Count = std::int64_t>
BasicCorrelationHistogram<Count> read_histogram(std::istream& is, const std::string& source = "<histogram>",
                                                text::Header* meta = nullptr) {
  std::size_t line_no = 0;
  std::string first;
  const text::Header hd = text::read_header(is, source, line_no, first);
  if (meta) {
    meta->entries.clear();
    for (const auto& [k, v] : hd.entries)
      if (k != "pair" && k != "bin_width_ps" && k != "half_range_ps" && k != "total_events" && k != "columns")
        meta->entries.emplace_back(k, v);
  }
  BasicCorrelationHistogram<Count> h;
  h.pair = detail::parse_pair(hd.require("pair", source), source);
  h.bin_width_ps = detail::header_int(hd, "bin_width_ps", source);
  if (h.bin_width_ps <= 0) throw ParseError(source, 0, "bin_width_ps must be > 0");
  h.half_range_ps = hd.get("half_range_ps") ? detail::header_int(hd, "half_range_ps", source) : 0;
  auto parse = [](std::string_view s) -> std::optional<Count> {
    if constexpr (std::is_integral_v<Count>) {
      auto v = text::parse_int(s);
      if (!v || *v < 0) return std::nullopt;
      return static_cast<Count>(*v);
    } else {
      auto v = text::parse_double(s);
      if (!v || *v < 0.0) return std::nullopt;
      return *v;
    }
  };
  // Geometry comes from the first row when half_range is not in the header.
  std::int64_t first_center = -h.half_range_ps;
  if (!hd.get("half_range_ps")) {
    auto cols = text::split(first, ',');
    auto c = cols.empty() ? std::nullopt : text::parse_int(cols[0]);
    if (!c) throw ParseError(source, line_no, "expected 'bin_center_ps,count'");
    first_center = *c;
    h.half_range_ps = -first_center;
  }
  h.counts = detail::read_rows<Count>(is, source, line_no, first, first_center, h.bin_width_ps, parse);
  if (h.counts.size() != static_cast<std::size_t>(2 * h.half_bins() + 1))
    throw ParseError(source, line_no, "histogram must be symmetric about zero delay");
  if (auto te = hd.get("total_events")) {
    auto v = parse(*te);
    if (!v) throw ParseError(source, 0, "bad total_events");
    h.total_events = *v;
  } else {
    for (auto c : h.counts) h.total_events += c;
  }
  return h;
}

inline void write_normalized(std::ostream& os, const NormalizedCorrelation& n) {
  text::Header hd;
  hd.set("pair", n.pair.str());
  hd.set("bin_width_ps", std::to_string(n.bin_width_ps));
  hd.set("half_range_ps", std::to_string(n.half_range_ps));
  hd.set("central_window_ps", std::to_string(n.central_window_ps));
  hd.set("norm_half_range_ps", std::to_string(n.norm_half_range_ps));
  hd.set("gamma_window", text::format_double(n.gamma_window));
  hd.set("normalization_total", text::format_double(n.normalization_total));
  hd.set("central_total", text::format_double(n.central_total));
  hd.set("columns", "bin_center_ps,normalized_value");
  hd.write(os);
  for (std::size_t k = 0; k < n.values.size(); ++k)
    os << n.bin_center(k) << ',' << text::format_double(n.values[k]) << '\n';
}

inline NormalizedCorrelation read_normalized(std::istream& is, const std::string& source = "<normalized>") {
  std::size_t line_no = 0;
  std::string first;
  const text::Header hd = text::read_header(is, source, line_no, first);
  NormalizedCorrelation n;
  n.pair = detail::parse_pair(hd.require("pair", source), source);
  n.bin_width_ps = detail::header_int(hd, "bin_width_ps", source);
  n.half_range_ps = detail::header_int(hd, "half_range_ps", source);
  n.central_window_ps = detail::header_int(hd, "central_window_ps", source);
  n.norm_half_range_ps = detail::header_int(hd, "norm_half_range_ps", source);
  n.gamma_window = detail::header_double(hd, "gamma_window", source);
  n.normalization_total = detail::header_double(hd, "normalization_total", source);
  n.central_total = detail::header_double(hd, "central_total", source);
  if (n.bin_width_ps <= 0) throw ParseError(source, 0, "bin_width_ps must be > 0");
  n.values = detail::read_rows<double>(is, source, line_no, first, -n.half_range_ps, n.bin_width_ps,
                                       [](std::string_view s) { return text::parse_double(s); });
  return n;
}

template <class Count>
void save_histogram(const std::string& path, const BasicCorrelationHistogram<Count>& h, const text::Header& meta = {}) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_histogram(os, h, meta);
}

template <class Count = std::int64_t>
BasicCorrelationHistogram<Count> load_histogram(const std::string& path, text::Header* meta = nullptr) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_histogram<Count>(is, path, meta);
}

} // namespace franson
