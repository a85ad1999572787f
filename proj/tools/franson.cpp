// Command-line front end: phase scans, staged simulate/correlate/analyze,
// HOM and HBT runs, and the defaults dump.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "franson/franson.hpp"

namespace fs = std::filesystem;
using namespace franson;

namespace {

struct CommonOptions {
  std::string config;
  std::string out = "out";
  std::optional<std::int64_t> cycles;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<int> workers;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "Config file (flat key = value)");
  app->add_option("--out", o.out, "Output directory")->capture_default_str();
  app->add_option("--cycles", o.cycles, "Override run.n_cycles");
  app->add_option("--seed", o.seed, "Override run.master_seed");
  app->add_option("--mode", o.mode, "Override run.mode")->check(CLI::IsMember({"analytic", "montecarlo"}));
  app->add_option("--workers", o.workers, "Override run.workers");
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.cycles) cfg.run.n_cycles = *o.cycles;
  if (o.mode) cfg.run.mode = *o.mode == "analytic" ? RunMode::analytic : RunMode::montecarlo;
  if (cfg.run.mode == RunMode::analytic) {
    if (o.seed) std::cerr << "warning: --seed is ignored in analytic mode\n";
    if (o.workers) std::cerr << "warning: --workers is ignored in analytic mode\n";
  } else {
    if (o.seed) cfg.run.master_seed = *o.seed;
    if (o.workers) cfg.run.workers = *o.workers;
  }
  cfg.validate();
  return cfg;
}

/// Expands directories into their files with the given extension, sorted.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in))
        if (e.is_regular_file() && e.path().extension() == ext) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(in);
    }
  }
  if (out.empty()) throw ValidationError("inputs", "no " + ext + " files found");
  return out;
}

void print_summary(const ScanSummary& s) {
  write_summary(std::cout, s);
}

int cmd_scan(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  const auto r = run_phase_scan(cfg, o.out);
  print_summary(r.summary);
  return 0;
}

int cmd_simulate(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  if (cfg.run.mode != RunMode::montecarlo)
    throw ValidationError("run.mode", "simulate produces time tags and needs montecarlo mode");
  fs::create_directories(o.out);
  write_text_file(fs::path(o.out) / "config.txt", dump_config(cfg));
  for (std::size_t k = 0; k < cfg.run.phase_scan.size(); ++k) {
    const auto s = simulate_setting(cfg, k);
    const auto path = fs::path(o.out) / (setting_stem(k) + ".tags");
    save_stream(path.string(), s);
    std::cout << path.string() << ": " << s.tags.size() << " tags\n";
  }
  return 0;
}

int cmd_correlate(const CommonOptions& o, const std::vector<std::string>& inputs) {
  const auto cfg = resolve_config(o);
  fs::create_directories(o.out);
  for (const auto& f : expand_inputs(inputs, ".tags")) {
    const auto stream = load_stream(f.string());
    const auto meta = histogram_meta(stream);
    for (const auto& p : kCrossPairs) {
      const auto h = correlate(stream, p, cfg.analysis.half_range_ps, cfg.detectors.bin_width_ps);
      const auto path = fs::path(o.out) / (f.stem().string() + pair_suffix(p) + ".hist");
      save_histogram(path.string(), h, meta);
    }
    std::cout << f.string() << ": " << stream.tags.size() << " tags correlated\n";
  }
  return 0;
}

int cmd_analyze(const CommonOptions& o, const std::vector<std::string>& inputs) {
  const auto cfg = resolve_config(o);
  const auto r = analyze_files(cfg, expand_inputs(inputs, ".hist"), o.out);
  print_summary(r.summary);
  return 0;
}

int cmd_hom(const CommonOptions& o, std::vector<std::int64_t> mismatches) {
  const auto cfg = resolve_config(o);
  if (mismatches.empty())
    for (std::int64_t m = -600; m <= 600; m += 100) mismatches.push_back(m);
  const auto r = hom_scan(cfg, mismatches, cfg.run.n_cycles, cfg.run.master_seed, cfg.run.workers);
  fs::create_directories(o.out);
  std::ofstream os(fs::path(o.out) / "hom.csv");
  write_hom(os, r);
  write_hom(std::cout, r);
  return 0;
}

int cmd_hbt(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  CorrelationHistogram h;
  const auto r = hbt_g2(cfg, cfg.run.n_cycles, cfg.run.master_seed, cfg.run.workers, &h);
  fs::create_directories(o.out);
  save_histogram((fs::path(o.out) / "hbt_p12.hist").string(), h);
  std::ofstream os(fs::path(o.out) / "g2.txt");
  write_hbt(os, r);
  write_hbt(std::cout, r);
  return 0;
}

void mark_incomplete(const std::string& dir, const std::string& what) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return;
  fs::remove(fs::path(dir) / "summary.txt", ec);
  std::ofstream os(fs::path(dir) / "INCOMPLETE");
  os << what << '\n';
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Franson interferometer simulator and coincidence analysis"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::vector<std::string> inputs;
  std::vector<std::int64_t> mismatches;

  auto* scan = app.add_subcommand("scan", "Full phase scan: simulate or evaluate, correlate, analyze");
  add_common(scan, opts);
  auto* simulate = app.add_subcommand("simulate", "Write one time-tag file per phase setting");
  add_common(simulate, opts);
  auto* corr = app.add_subcommand("correlate", "Histogram time-tag files for the four cross pairs");
  add_common(corr, opts);
  corr->add_option("inputs", inputs, "Time-tag files or directories")->required();
  auto* analyze = app.add_subcommand("analyze", "Normalize histograms, fit fringes, write the summary");
  add_common(analyze, opts);
  analyze->add_option("inputs", inputs, "Histogram files or directories")->required();
  auto* hom = app.add_subcommand("hom", "Two-photon dip versus delay mismatch");
  add_common(hom, opts);
  hom->add_option("--mismatch", mismatches, "Mismatches in ps (default -600..600 step 100)")->delimiter(',');
  auto* hbt = app.add_subcommand("hbt", "HBT g2(0) of the source");
  add_common(hbt, opts);
  auto* defaults = app.add_subcommand("defaults", "Print every config key with its default");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*defaults) {
      std::cout << dump_config(ExperimentConfig{});
      return 0;
    }
    if (*scan) return cmd_scan(opts);
    if (*simulate) return cmd_simulate(opts);
    if (*corr) return cmd_correlate(opts, inputs);
    if (*analyze) return cmd_analyze(opts, inputs);
    if (*hom) return cmd_hom(opts, mismatches);
    if (*hbt) return cmd_hbt(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    mark_incomplete(opts.out, e.what());
    return 1;
  }
  return 1;
}
