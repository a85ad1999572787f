#pragma once

// Phase-scan orchestration shared by the all-in-one run and the staged
// simulate / correlate / analyze commands. Both paths go through the same
// functions and file headers, so their outputs agree byte for byte.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "franson/analysis.hpp"
#include "franson/analytic_model.hpp"
#include "franson/config.hpp"
#include "franson/correlator.hpp"
#include "franson/experiment.hpp"
#include "franson/montecarlo.hpp"
#include "franson/optics.hpp"
#include "franson/text_io.hpp"
#include "franson/timetag.hpp"

namespace franson {

namespace fs = std::filesystem;

/// Seed for phase setting `k`, derived only from the master seed.
inline std::uint64_t setting_seed(std::uint64_t master_seed, std::size_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(k), 0x5e77u};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline std::string setting_stem(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "setting_%02zu", k);
  return buf;
}

inline std::string pair_suffix(ChannelPair p) { return "_p" + std::to_string(p.first) + std::to_string(p.second); }

/// Simulated stream for setting `k`, with the setting recorded in its header.
inline TimeTagStream simulate_setting(const ExperimentConfig& cfg, std::size_t k) {
  const double phase = cfg.run.phase_scan.at(k);
  TimeTagStream s =
      run_simulation(cfg.at_phase(phase), cfg.run.n_cycles, setting_seed(cfg.run.master_seed, k), {cfg.run.workers, false});
  s.fingerprint.set("setting", std::to_string(k));
  s.fingerprint.set("config_fingerprint", config_fingerprint(cfg));
  return s;
}

/// Header carried from a stream to the histograms built from it.
inline text::Header histogram_meta(const TimeTagStream& s) {
  text::Header h = s.fingerprint;
  h.set("duration_ps", std::to_string(s.duration_ps));
  return h;
}

struct PairHistogram {
  ModelHistogram hist; ///< integer counts are held exactly in doubles
  text::Header meta;
};

inline ModelHistogram to_real(const CorrelationHistogram& h) {
  ModelHistogram m;
  m.pair = h.pair;
  m.bin_width_ps = h.bin_width_ps;
  m.half_range_ps = h.half_range_ps;
  m.counts.assign(h.counts.begin(), h.counts.end());
  m.total_events = static_cast<double>(h.total_events);
  return m;
}

inline std::vector<PairHistogram> correlate_stream(const TimeTagStream& s, const ExperimentConfig& cfg,
                                                   std::vector<CorrelationHistogram>* raw = nullptr) {
  std::vector<PairHistogram> out;
  const auto meta = histogram_meta(s);
  for (const auto& p : kCrossPairs) {
    auto h = correlate(s, p, cfg.analysis.half_range_ps, cfg.detectors.bin_width_ps);
    out.push_back({to_real(h), meta});
    if (raw) raw->push_back(std::move(h));
  }
  return out;
}

inline std::vector<PairHistogram> analytic_setting(const ExperimentConfig& cfg, std::size_t k) {
  const double phase = cfg.run.phase_scan.at(k);
  const AnalyticModel model(cfg.at_phase(phase));
  text::Header meta;
  meta.set("kind", "analytic");
  meta.set("n_cycles", std::to_string(cfg.run.n_cycles));
  meta.set("phase_rad", text::format_double(phase));
  meta.set("setting", std::to_string(k));
  meta.set("config_fingerprint", config_fingerprint(cfg));
  std::vector<PairHistogram> out;
  for (const auto& p : kCrossPairs)
    out.push_back({model.histogram(p, cfg.run.n_cycles, cfg.analysis.half_range_ps, cfg.detectors.bin_width_ps), meta});
  return out;
}

// ── Summary ─────────────────────────────────────────────────────────────────

struct PairSummary {
  ChannelPair pair{};
  double v1 = 0.0;
  double v1_error = 0.0;
  double v2 = 0.0;
  double v2_error = 0.0;
  double background = 0.0; ///< mean flat background per central window, renormalized
  double residual_rms = 0.0;
  int clipped = 0;
  bool fitted = true; ///< false when the scan was too short and min/max was used

  bool operator==(const PairSummary&) const = default;
};

struct SettingSum {
  std::size_t setting = 0;
  double phase = 0.0;
  double sum = 0.0;
  double error = 0.0;

  bool operator==(const SettingSum&) const = default;
};

struct ScanSummary {
  text::Header info;
  std::vector<PairSummary> pairs;
  OverlapResult overlap{};
  std::vector<SettingSum> sums;
  std::optional<VisibilitySet> model; ///< predicted visibilities at the effective overlap (analytic mode)

  const PairSummary& pair(ChannelPair p) const {
    for (const auto& s : pairs)
      if (s.pair == p) return s;
    throw ContractViolation("pair " + p.str() + " not in summary");
  }
};

inline bool operator==(const OverlapResult& a, const OverlapResult& b) {
  return a.v13 == b.v13 && a.g == b.g && a.gamma_squared == b.gamma_squared && a.gamma == b.gamma &&
         a.out_of_range == b.out_of_range && a.exceeds_nonlocality_threshold == b.exceeds_nonlocality_threshold;
}

inline bool operator==(const VisibilitySet& a, const VisibilitySet& b) { return a.as_array() == b.as_array(); }

inline bool operator==(const ScanSummary& a, const ScanSummary& b) {
  return a.info == b.info && a.pairs == b.pairs && a.overlap == b.overlap && a.sums == b.sums && a.model == b.model;
}

inline void write_summary(std::ostream& os, const ScanSummary& s) {
  auto f = [](double v) { return text::format_double(v); };
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "[run]\n";
  for (const auto& [k, v] : s.info.entries) os << k << ": " << v << '\n';
  for (const auto& p : s.pairs) {
    os << "\n[pair " << p.pair.str() << "]\n";
    os << "v1: " << f(p.v1) << "\nv1_error: " << f(p.v1_error) << "\nv2: " << f(p.v2) << "\nv2_error: " << f(p.v2_error)
       << "\nbackground: " << f(p.background) << "\nresidual_rms: " << f(p.residual_rms) << "\nclipped: " << p.clipped
       << "\nfitted: " << b(p.fitted) << '\n';
  }
  const auto& o = s.overlap;
  os << "\n[overlap]\nv13: " << f(o.v13) << "\ng: " << f(o.g) << "\ngamma_squared: " << f(o.gamma_squared)
     << "\ngamma: " << f(o.gamma) << "\nout_of_range: " << b(o.out_of_range)
     << "\nthreshold: " << f(kNonlocalityThreshold)
     << "\nexceeds_nonlocality_threshold: " << b(o.exceeds_nonlocality_threshold) << '\n';
  if (s.model) {
    os << "\n[model]\nv13: " << f(s.model->v13) << "\nv14: " << f(s.model->v14) << "\nv23: " << f(s.model->v23)
       << "\nv24: " << f(s.model->v24) << '\n';
  }
  os << "\n[sum_rule]\n";
  for (const auto& x : s.sums)
    os << "setting " << x.setting << ": " << f(x.phase) << "," << f(x.sum) << "," << f(x.error) << '\n';
}

inline ScanSummary read_summary(std::istream& is, const std::string& source = "<summary>") {
  ScanSummary s;
  std::string line, section;
  std::size_t line_no = 0;
  PairSummary* cur = nullptr;
  auto num = [&](std::string_view v) {
    auto d = text::parse_double(v);
    if (!d) throw ParseError(source, line_no, "expected a number");
    return *d;
  };
  auto flag = [&](std::string_view v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ParseError(source, line_no, "expected true or false");
  };
  while (std::getline(is, line)) {
    ++line_no;
    auto body = text::trim(line);
    if (body.empty()) continue;
    if (body.front() == '[') {
      section = std::string(body.substr(1, body.size() - 2));
      cur = nullptr;
      if (section.rfind("pair ", 0) == 0) {
        s.pairs.push_back({});
        cur = &s.pairs.back();
        cur->pair = detail::parse_pair(section.substr(5), source);
      } else if (section == "model") {
        s.model = VisibilitySet{};
      }
      continue;
    }
    const auto colon = body.find(':');
    if (colon == std::string_view::npos) throw ParseError(source, line_no, "expected 'key: value'");
    const std::string key(text::trim(body.substr(0, colon)));
    const auto val = text::trim(body.substr(colon + 1));
    if (section == "run") {
      s.info.entries.emplace_back(key, std::string(val));
    } else if (cur) {
      if (key == "v1") cur->v1 = num(val);
      else if (key == "v1_error") cur->v1_error = num(val);
      else if (key == "v2") cur->v2 = num(val);
      else if (key == "v2_error") cur->v2_error = num(val);
      else if (key == "background") cur->background = num(val);
      else if (key == "residual_rms") cur->residual_rms = num(val);
      else if (key == "clipped") cur->clipped = static_cast<int>(num(val));
      else if (key == "fitted") cur->fitted = flag(val);
      else throw ParseError(source, line_no, "unknown key '" + key + "'");
    } else if (section == "overlap") {
      auto& o = s.overlap;
      if (key == "v13") o.v13 = num(val);
      else if (key == "g") o.g = num(val);
      else if (key == "gamma_squared") o.gamma_squared = num(val);
      else if (key == "gamma") o.gamma = num(val);
      else if (key == "out_of_range") o.out_of_range = flag(val);
      else if (key == "exceeds_nonlocality_threshold") o.exceeds_nonlocality_threshold = flag(val);
      else if (key != "threshold") throw ParseError(source, line_no, "unknown key '" + key + "'");
    } else if (section == "model") {
      auto& m = *s.model;
      if (key == "v13") m.v13 = num(val);
      else if (key == "v14") m.v14 = num(val);
      else if (key == "v23") m.v23 = num(val);
      else if (key == "v24") m.v24 = num(val);
      else throw ParseError(source, line_no, "unknown key '" + key + "'");
    } else if (section == "sum_rule") {
      if (key.rfind("setting ", 0) != 0) throw ParseError(source, line_no, "expected 'setting k: phase,sum,error'");
      auto parts = text::split(val, ',');
      if (parts.size() != 3) throw ParseError(source, line_no, "expected 'phase,sum,error'");
      SettingSum x;
      x.setting = static_cast<std::size_t>(num(key.substr(8)));
      x.phase = num(parts[0]);
      x.sum = num(parts[1]);
      x.error = num(parts[2]);
      s.sums.push_back(x);
    } else {
      throw ParseError(source, line_no, "key outside a known section");
    }
  }
  return s;
}

// ── Analysis of a complete scan ─────────────────────────────────────────────

struct SettingHistograms {
  std::size_t setting = 0;
  double phase = 0.0;
  std::vector<PairHistogram> pairs; ///< the four cross pairs
};

struct FringeRow {
  double phase = 0.0;
  double gamma = 0.0;
  double gamma_error = 0.0;
  double background = 0.0;
};

struct ScanResult {
  std::vector<SettingHistograms> settings;
  std::vector<std::vector<NormalizedCorrelation>> normalized; ///< [setting][pair]
  std::map<ChannelPair, std::vector<FringeRow>> fringes;       ///< renormalized
  std::map<ChannelPair, FringeResult> fits;
  ScanSummary summary;
};

inline ScanResult analyze_scan(const ExperimentConfig& cfg, std::vector<SettingHistograms> settings) {
  detail::require(!settings.empty(), "settings", "at least one phase setting is required");
  ScanResult r;
  const auto peaks = franson_peak_positions(cfg.source, cfg.analysis.half_range_ps);
  GammaMap gammas;
  std::map<GammaKey, std::pair<double, double>> extra; // background, error
  for (const auto& s : settings) {
    std::vector<NormalizedCorrelation> row;
    for (const auto& ph : s.pairs) {
      auto n = normalize_correlation(ph.hist, cfg.analysis.central_window_ps, cfg.analysis.norm_half_range_ps);
      const double bg = estimate_background(n, cfg.analysis.background_start_ps, cfg.analysis.background_end_ps, peaks);
      const GammaKey key{n.pair, s.phase};
      if (gammas.count(key)) throw ValidationError("settings", "duplicate pair " + n.pair.str() + " at one phase");
      gammas[key] = n.gamma_window;
      extra[key] = {bg, n.gamma_error()};
      row.push_back(std::move(n));
    }
    r.normalized.push_back(std::move(row));
  }
  double scale = 1.0;
  const GammaMap renorm = global_renormalize(gammas, &scale);

  for (const auto& s : settings) {
    SettingSum sum{s.setting, s.phase, 0.0, 0.0};
    for (const auto& p : kCrossPairs) {
      const GammaKey key{p, s.phase};
      const auto& [bg, err] = extra.at(key);
      r.fringes[p].push_back({s.phase, renorm.at(key), err * scale, bg * scale});
      sum.sum += renorm.at(key);
      sum.error += (err * scale) * (err * scale);
    }
    sum.error = std::sqrt(sum.error);
    r.summary.sums.push_back(sum);
  }

  for (const auto& p : kCrossPairs) {
    const auto& rows = r.fringes[p];
    std::vector<BackgroundPoint> pts;
    std::vector<FringePoint> raw, sub;
    double bg_mean = 0.0;
    for (const auto& x : rows) {
      pts.push_back({x.phase, x.gamma, x.background});
      raw.push_back({x.phase, x.gamma});
      sub.push_back({x.phase, std::max(0.0, x.gamma - x.background)});
      bg_mean += x.background;
    }
    bg_mean /= static_cast<double>(rows.size());
    PairSummary ps;
    ps.pair = p;
    ps.background = bg_mean;
    try {
      const auto fit = corrected_visibility(pts, p);
      r.fits[p] = fit;
      ps.v1 = fit.visibility_raw;
      ps.v1_error = fit.visibility_error;
      ps.v2 = *fit.visibility_corrected;
      ps.v2_error = *fit.corrected_error;
      ps.residual_rms = fit.residual_rms;
      ps.clipped = fit.clipped_points;
    } catch (const ValidationError&) {
      // Too few settings for a fit: report the min/max contrast instead.
      ps.fitted = false;
      ps.v1 = minmax_visibility(raw);
      ps.v2 = minmax_visibility(sub);
      for (const auto& x : rows) ps.clipped += x.gamma < x.background ? 1 : 0;
    }
    r.summary.pairs.push_back(ps);
  }
  r.summary.overlap = extract_overlap(std::clamp(r.summary.pair({1, 3}).v2, 0.0, 1.0), cfg.source.g2_zero);
  r.summary.info.set("settings", std::to_string(settings.size()));
  r.summary.info.set("renormalization_scale", text::format_double(scale));
  r.settings = std::move(settings);
  return r;
}

// ── Files ───────────────────────────────────────────────────────────────────

inline void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
}

inline void write_fringe_csv(std::ostream& os, const std::vector<FringeRow>& rows) {
  os << "phase_rad,gamma,gamma_error,background,gamma_minus_background\n";
  for (const auto& r : rows)
    os << text::format_double(r.phase) << ',' << text::format_double(r.gamma) << ',' << text::format_double(r.gamma_error)
       << ',' << text::format_double(r.background) << ',' << text::format_double(r.gamma - r.background) << '\n';
}

/// Writes histograms, normalized correlations, fringe tables and the summary.
inline void write_scan_outputs(const fs::path& dir, const ScanResult& r) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < r.settings.size(); ++i) {
    const auto& s = r.settings[i];
    for (std::size_t j = 0; j < s.pairs.size(); ++j) {
      const auto& ph = s.pairs[j];
      const auto stem = setting_stem(s.setting) + pair_suffix(ph.hist.pair);
      save_histogram((dir / (stem + ".hist")).string(), ph.hist, ph.meta);
      std::ofstream os(dir / (stem + ".norm"));
      if (!os) throw std::runtime_error("cannot write " + (dir / (stem + ".norm")).string());
      write_normalized(os, r.normalized[i][j]);
    }
  }
  for (const auto& [p, rows] : r.fringes) {
    std::ofstream os(dir / ("fringe" + pair_suffix(p) + ".csv"));
    write_fringe_csv(os, rows);
  }
  std::ostringstream ss;
  write_summary(ss, r.summary);
  write_text_file(dir / "summary.txt", ss.str());
}

/// Groups histogram files into settings using their `setting` and
/// `phase_rad` header keys (absent keys mean setting 0 at phase 0).
inline std::vector<SettingHistograms> load_setting_histograms(const std::vector<fs::path>& files) {
  std::map<std::size_t, SettingHistograms> by_setting;
  for (const auto& f : files) {
    text::Header meta;
    auto h = load_histogram<double>(f.string(), &meta);
    std::size_t k = 0;
    double phase = 0.0;
    if (auto v = meta.get("setting")) {
      auto x = text::parse_int(*v);
      if (!x || *x < 0) throw ParseError(f.string(), 0, "bad setting index");
      k = static_cast<std::size_t>(*x);
    }
    if (auto v = meta.get("phase_rad")) {
      auto x = text::parse_double(*v);
      if (!x) throw ParseError(f.string(), 0, "bad phase_rad");
      phase = *x;
    }
    auto& s = by_setting[k];
    if (!s.pairs.empty() && s.phase != phase)
      throw ValidationError("histograms", "setting " + std::to_string(k) + " has inconsistent phases");
    s.setting = k;
    s.phase = phase;
    s.pairs.push_back({std::move(h), std::move(meta)});
  }
  std::vector<SettingHistograms> out;
  for (auto& [k, s] : by_setting) {
    std::sort(s.pairs.begin(), s.pairs.end(),
              [](const PairHistogram& a, const PairHistogram& b) { return a.hist.pair < b.hist.pair; });
    out.push_back(std::move(s));
  }
  return out;
}

inline ScanSummary summary_with_run_info(ScanSummary s, const std::vector<SettingHistograms>& settings) {
  text::Header info;
  if (!settings.empty() && !settings.front().pairs.empty()) {
    const auto& meta = settings.front().pairs.front().meta;
    for (const char* key : {"kind", "n_cycles", "config_fingerprint"})
      if (auto v = meta.get(key)) info.set(key, *v);
  }
  for (const auto& e : s.info.entries) info.set(e.first, e.second);
  s.info = info;
  return s;
}

/// All-in-one phase scan: simulate (or evaluate the model), correlate,
/// analyze and write every output file into `dir`.
inline ScanResult run_phase_scan(const ExperimentConfig& cfg, const fs::path& dir = {}) {
  cfg.validate();
  detail::require(!cfg.run.phase_scan.empty(), "run.phase_scan", "must not be empty for a phase scan");
  std::vector<SettingHistograms> settings;
  for (std::size_t k = 0; k < cfg.run.phase_scan.size(); ++k) {
    SettingHistograms s{k, cfg.run.phase_scan[k], {}};
    if (cfg.run.mode == RunMode::analytic) {
      s.pairs = analytic_setting(cfg, k);
    } else {
      s.pairs = correlate_stream(simulate_setting(cfg, k), cfg);
    }
    settings.push_back(std::move(s));
  }
  ScanResult r = analyze_scan(cfg, std::move(settings));
  r.summary = summary_with_run_info(r.summary, r.settings);
  if (cfg.run.mode == RunMode::analytic) {
    const AnalyticModel model(cfg);
    r.summary.model = visibilities(cfg.optics.coupler_a, cfg.optics.coupler_b,
                                   std::sqrt(model.effective_overlap_squared()));
  }
  if (!dir.empty()) {
    fs::create_directories(dir);
    write_text_file(dir / "config.txt", dump_config(cfg));
    write_scan_outputs(dir, r);
  }
  return r;
}

/// Staged analysis of histogram files written by `correlate`.
inline ScanResult analyze_files(const ExperimentConfig& cfg, const std::vector<fs::path>& files, const fs::path& dir = {}) {
  auto settings = load_setting_histograms(files);
  ScanResult r = analyze_scan(cfg, std::move(settings));
  r.summary = summary_with_run_info(r.summary, r.settings);
  if (!dir.empty()) write_scan_outputs(dir, r);
  return r;
}

} // namespace franson
