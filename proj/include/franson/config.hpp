#pragma once

// Flat "section.key = value" configuration files. Every key has a documented
// default; unknown keys are rejected. Times are integer picoseconds.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "franson/error.hpp"
#include "franson/experiment.hpp"
#include "franson/text_io.hpp"

namespace franson {

namespace detail {

struct ConfigKey {
  std::string name;
  std::function<void(ExperimentConfig&, std::string_view, const std::string&, std::size_t)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline double parse_real(std::string_view v, const std::string& src, std::size_t line, const std::string& key) {
  auto d = text::parse_double(v);
  if (!d) throw ParseError(src, line, key + ": expected a number, got '" + std::string(v) + "'");
  return *d;
}

inline std::int64_t parse_integer(std::string_view v, const std::string& src, std::size_t line,
                                  const std::string& key) {
  auto d = text::parse_int(v);
  if (!d) throw ParseError(src, line, key + ": expected an integer, got '" + std::string(v) + "'");
  return *d;
}

template <class Field>
ConfigKey real_key(std::string name, Field field) {
  return {name,
          [name, field](ExperimentConfig& c, std::string_view v, const std::string& s, std::size_t l) {
            field(c) = parse_real(v, s, l, name);
          },
          [field](ExperimentConfig c) { return text::format_double(field(c)); }};
}

template <class Field>
ConfigKey int_key(std::string name, Field field) {
  return {name,
          [name, field](ExperimentConfig& c, std::string_view v, const std::string& s, std::size_t l) {
            field(c) = parse_integer(v, s, l, name);
          },
          [field](ExperimentConfig c) { return std::to_string(field(c)); }};
}

inline ConfigKey coupler_key(std::string name, CouplerParams InterferometerConfig::*member, bool reflectance) {
  return {name,
          [name, member, reflectance](ExperimentConfig& c, std::string_view v, const std::string& s, std::size_t l) {
            const double x = parse_real(v, s, l, name);
            auto& cp = c.optics.*member;
            // Setting one coefficient implies the other for a lossless
            // coupler; a later key for the same coupler wins.
            if (reflectance) {
              cp.reflectance = x;
              cp.transmittance = 1.0 - x;
            } else {
              cp.transmittance = x;
              cp.reflectance = 1.0 - x;
            }
          },
          // Only the reflectance is dumped so a round trip cannot perturb it
          // through 1 - (1 - r).
          reflectance ? std::function<std::string(const ExperimentConfig&)>([member](const ExperimentConfig& c) {
            return text::format_double((c.optics.*member).reflectance);
          })
                      : nullptr};
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    using C = ExperimentConfig;
    k.push_back(real_key("source.emission_probability", [](C& c) -> double& { return c.source.emission_probability; }));
    k.push_back(real_key("source.g2_zero", [](C& c) -> double& { return c.source.g2_zero; }));
    k.push_back(real_key("source.tail_fraction", [](C& c) -> double& { return c.source.tail_fraction; }));
    k.push_back(int_key("source.tau_fast_ps", [](C& c) -> std::int64_t& { return c.source.tau_fast_ps; }));
    k.push_back(int_key("source.tau_slow_ps", [](C& c) -> std::int64_t& { return c.source.tau_slow_ps; }));
    k.push_back(int_key("source.radiative_decay_ps", [](C& c) -> std::int64_t& { return c.source.radiative_decay_ps; }));
    k.push_back(int_key("source.coherence_time_ps", [](C& c) -> std::int64_t& { return c.source.coherence_time_ps; }));
    k.push_back(real_key("source.intrinsic_overlap", [](C& c) -> double& { return c.source.intrinsic_overlap; }));
    k.push_back(int_key("source.pulse_separation_ps", [](C& c) -> std::int64_t& { return c.source.pulse_separation_ps; }));
    k.push_back(
        int_key("source.repetition_period_ps", [](C& c) -> std::int64_t& { return c.source.repetition_period_ps; }));

    for (auto [prefix, member] : {std::pair{"optics.coupler_0", &InterferometerConfig::coupler_0},
                                  std::pair{"optics.coupler_a", &InterferometerConfig::coupler_a},
                                  std::pair{"optics.coupler_b", &InterferometerConfig::coupler_b}}) {
      k.push_back(coupler_key(std::string(prefix) + ".reflectance", member, true));
      k.push_back(coupler_key(std::string(prefix) + ".transmittance", member, false));
    }
    k.push_back(int_key("optics.arm_delay_long_ps", [](C& c) -> std::int64_t& { return c.optics.arm_delay_long_ps; }));
    k.push_back(int_key("optics.arm_delay_short_ps", [](C& c) -> std::int64_t& { return c.optics.arm_delay_short_ps; }));
    k.push_back(real_key("optics.phase_h", [](C& c) -> double& { return c.optics.phase_h; }));
    k.push_back(real_key("optics.phase_v", [](C& c) -> double& { return c.optics.phase_v; }));
    k.push_back({"optics.drift_mode",
                 [](C& c, std::string_view v, const std::string& s, std::size_t l) {
                   if (v == "none") c.optics.drift_mode = DriftMode::none;
                   else if (v == "common") c.optics.drift_mode = DriftMode::common;
                   else if (v == "independent") c.optics.drift_mode = DriftMode::independent;
                   else throw ParseError(s, l, "optics.drift_mode: expected none, common or independent");
                 },
                 [](const C& c) { return std::string(to_string(c.optics.drift_mode)); }});
    k.push_back(real_key("optics.drift_sigma", [](C& c) -> double& { return c.optics.drift_sigma; }));

    for (int i = 0; i < 4; ++i)
      k.push_back(real_key("detectors.efficiency_" + std::to_string(i + 1),
                           [i](C& c) -> double& { return c.detectors.efficiency[static_cast<std::size_t>(i)]; }));
    k.push_back(real_key("detectors.dark_count_rate_hz", [](C& c) -> double& { return c.detectors.dark_count_rate_hz; }));
    k.push_back(int_key("detectors.timing_jitter_ps", [](C& c) -> std::int64_t& { return c.detectors.timing_jitter_ps; }));
    k.push_back(int_key("detectors.bin_width_ps", [](C& c) -> std::int64_t& { return c.detectors.bin_width_ps; }));

    k.push_back(int_key("run.n_cycles", [](C& c) -> std::int64_t& { return c.run.n_cycles; }));
    k.push_back({"run.master_seed",
                 [](C& c, std::string_view v, const std::string& s, std::size_t l) {
                   const auto x = parse_integer(v, s, l, "run.master_seed");
                   if (x < 0) throw ParseError(s, l, "run.master_seed: must be >= 0");
                   c.run.master_seed = static_cast<std::uint64_t>(x);
                 },
                 [](const C& c) { return std::to_string(c.run.master_seed); }});
    k.push_back({"run.phase_scan",
                 [](C& c, std::string_view v, const std::string& s, std::size_t l) {
                   c.run.phase_scan.clear();
                   if (text::trim(v).empty()) return;
                   for (auto part : text::split(v, ',')) c.run.phase_scan.push_back(parse_real(part, s, l, "run.phase_scan"));
                 },
                 [](const C& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.run.phase_scan.size(); ++i)
                     out += (i ? "," : "") + text::format_double(c.run.phase_scan[i]);
                   return out;
                 }});
    k.push_back({"run.phase_steps",
                 [](C& c, std::string_view v, const std::string& s, std::size_t l) {
                   const auto n = parse_integer(v, s, l, "run.phase_steps");
                   if (n < 1) throw ValidationError("run.phase_steps", "must be >= 1");
                   c.run.phase_scan = uniform_phase_scan(static_cast<int>(n));
                 },
                 nullptr});
    k.push_back({"run.mode",
                 [](C& c, std::string_view v, const std::string& s, std::size_t l) {
                   if (v == "analytic") c.run.mode = RunMode::analytic;
                   else if (v == "montecarlo") c.run.mode = RunMode::montecarlo;
                   else throw ParseError(s, l, "run.mode: expected analytic or montecarlo");
                 },
                 [](const C& c) { return std::string(to_string(c.run.mode)); }});
    k.push_back(int_key("run.workers", [](C& c) -> int& { return c.run.workers; }));

    k.push_back(int_key("analysis.central_window_ps", [](C& c) -> std::int64_t& { return c.analysis.central_window_ps; }));
    k.push_back(int_key("analysis.norm_half_range_ps", [](C& c) -> std::int64_t& { return c.analysis.norm_half_range_ps; }));
    k.push_back(int_key("analysis.half_range_ps", [](C& c) -> std::int64_t& { return c.analysis.half_range_ps; }));
    k.push_back(
        int_key("analysis.background_start_ps", [](C& c) -> std::int64_t& { return c.analysis.background_start_ps; }));
    k.push_back(int_key("analysis.background_end_ps", [](C& c) -> std::int64_t& { return c.analysis.background_end_ps; }));
    return k;
  }();
  return keys;
}

} // namespace detail

/// Parses config text; omitted keys keep their defaults. The result is
/// validated unless `validate` is false.
inline ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>", bool validate = true) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  const auto& keys = detail::config_keys();
  while (std::getline(is, line)) {
    ++line_no;
    auto body = text::trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected 'key = value'");
    const auto key = text::trim(body.substr(0, eq));
    auto value = text::trim(body.substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string_view::npos) value = text::trim(value.substr(0, hash));
    auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return k.name == key; });
    if (it == keys.end()) throw ParseError(source, line_no, "unknown key '" + std::string(key) + "'");
    it->set(cfg, value, source, line_no);
  }
  if (validate) cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config_string(const std::string& text, bool validate = true) {
  std::istringstream is(text);
  return parse_config(is, "<string>", validate);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path);
  return parse_config(is, path);
}

/// Every key with its current value, one "key = value" per line, in a form
/// `parse_config` reads back unchanged.
inline std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : detail::config_keys()) {
    if (!k.get) continue;
    out += k.name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

/// FNV-1a over the canonical dump, as 16 hex digits. The worker count
/// never changes results, so it is left out.
inline std::string config_fingerprint(const ExperimentConfig& cfg) {
  auto c = cfg;
  c.run.workers = 1;
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : dump_config(c)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace franson
