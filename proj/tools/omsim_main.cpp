// Batch front-end: resolves a scenario (preset or config file), runs the
// trajectory ensemble, writes spectra CSVs and a run report, and exits
// nonzero when a declared expected feature fails.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "omsim/config.hpp"
#include "omsim/runner.hpp"
#include "omsim/scenarios.hpp"

int main(int argc, char** argv) {
  CLI::App app{"stochastic cavity-optomechanics simulator"};

  std::string scenario;
  std::string config_path;
  std::size_t n_traj = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t workers = 0;
  std::string outdir;
  std::vector<double> theta_sweep;
  double heterodyne = -1.0;
  std::vector<double> filter_args;
  bool qlt_compare = false;
  bool components = false;
  bool mech_spectrum = false;
  bool deterministic_reduce = false;
  std::size_t welch = 0;
  bool hann = false;
  bool one_sided = false;

  app.add_option("--scenario", scenario,
                 "preset name (see --scenario list) or 'list'");
  app.add_option("--config", config_path, "config file path");
  app.add_option("--ntraj", n_traj, "trajectory count (0 = preset default)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--workers", workers,
                 "worker threads (0 = OMSIM_WORKERS or hardware)");
  app.add_option("--outdir", outdir, "output directory");
  app.add_option("--theta-sweep", theta_sweep,
                 "homodyne phases, radians (comma separated)")
      ->delimiter(',');
  app.add_option("--heterodyne", heterodyne, "heterodyne frequency Omega");
  app.add_option("--filter", filter_args,
                 "r-heterodyne filter: cutoff[,demod_phase]")
      ->delimiter(',')
      ->expected(1, 2);
  app.add_flag("--qlt-compare", qlt_compare,
               "compute analytic reference spectra and deviations");
  app.add_flag("--components", components, "emit output-field component spectra");
  app.add_flag("--mech-spectrum", mech_spectrum, "emit mechanical x spectrum");
  app.add_flag("--deterministic-reduce", deterministic_reduce,
               "force fixed reduction order (on by default)");
  app.add_option("--welch", welch, "Welch segments per trajectory (default 1)");
  app.add_flag("--hann", hann, "apply a Hann window before transforming");
  app.add_flag("--one-sided", one_sided, "fold emitted spectra onto omega >= 0");

  CLI11_PARSE(app, argc, argv);
  seed_set = seed_opt->count() > 0;

  if (scenario == "list") {
    for (const auto& n : omsim::preset_names()) std::printf("%s\n", n.c_str());
    return 0;
  }
  if (scenario.empty() && config_path.empty()) {
    std::fprintf(stderr, "error: need --scenario or --config\n");
    return 2;
  }

  omsim::RunConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::fprintf(stderr, "error: cannot open config '%s'\n",
                   config_path.c_str());
      return 2;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    const auto parsed = omsim::parse_config(ss.str());
    if (!parsed.ok()) {
      for (const auto& e : parsed.errors)
        std::fprintf(stderr, "%s:%d: %s\n", config_path.c_str(), e.line,
                     e.message.c_str());
      return 2;
    }
    cfg = *parsed.config;
  } else {
    try {
      cfg.scenario = omsim::preset(scenario);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 2;
    }
  }

  if (n_traj > 0) cfg.n_traj = n_traj;
  if (seed_set) cfg.master_seed = seed;
  if (workers > 0) cfg.workers = workers;
  if (!outdir.empty()) cfg.outdir = outdir;
  if (!theta_sweep.empty()) cfg.scenario.theta_sweep = theta_sweep;
  if (heterodyne >= 0.0) cfg.scenario.omega_het = heterodyne;
  if (!filter_args.empty()) {
    cfg.use_filter = true;
    cfg.scenario.filter.kind = omsim::FilterKind::r_heterodyne;
    cfg.scenario.filter.lowpass_cutoff = filter_args[0];
    cfg.scenario.filter.demod_phase =
        filter_args.size() > 1 ? filter_args[1] : 0.0;
  }
  if (qlt_compare) cfg.qlt_compare = true;
  if (components) cfg.components = true;
  if (mech_spectrum) cfg.mech_spectrum = true;
  if (deterministic_reduce) cfg.deterministic_reduce = true;
  if (welch > 0) cfg.welch_segments = welch;
  if (hann) cfg.hann = true;
  if (one_sided) cfg.one_sided = true;

  if (cfg.use_filter && !(cfg.scenario.omega_het > 0.0)) {
    std::fprintf(stderr, "error: --filter requires --heterodyne > 0\n");
    return 2;
  }
  if (cfg.use_filter &&
      cfg.scenario.filter.lowpass_cutoff >= cfg.scenario.omega_het) {
    std::fprintf(stderr, "error: filter cutoff must be below Omega\n");
    return 2;
  }

  try {
    const omsim::RunReport rep = omsim::run(cfg);
    std::fputs(rep.text().c_str(), stdout);
    return rep.ok() ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
