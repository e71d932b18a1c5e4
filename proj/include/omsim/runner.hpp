#pragma once

#include <functional>
#include <string>
#include <vector>

#include "omsim/config.hpp"
#include "omsim/detection.hpp"
#include "omsim/qlt.hpp"
#include "omsim/scenarios.hpp"

namespace omsim {

// Orchestration parameters of one trajectory ensemble.
struct EnsembleOptions {
  std::size_t n_traj = 100;
  std::uint64_t master_seed = 1;
  std::size_t workers = 0;  // 0 = OMSIM_WORKERS or hardware count
  std::size_t welch_segments = 1;
  bool hann_window = false;
  std::vector<double> theta_sweep = {0.0};
  double omega_het = 0.0;
  FilterSpec filter;  // applied when kind == r_heterodyne and omega_het > 0
  double filter_theta = 0.0;  // detection phase of the filtered channel
  std::size_t readout_mode = 0;
  std::size_t reference_mech = 0;
  bool want_mech = false;
  bool want_components = false;
  bool want_output_psd = true;
  long transient_steps = -1;
};

struct EnsembleResult {
  std::size_t requested = 0;
  std::size_t completed = 0;
  std::size_t diverged = 0;
  std::size_t failed = 0;  // worker-side errors, excluded like divergences
  std::vector<std::size_t> diverged_indices;  // capped sample
  std::vector<std::size_t> failed_indices;

  double shot_floor = 0.5;  // n_p + 1/2 of the readout bath
  Spectrum output_psd;      // complex a_out periodogram (raw units)
  std::vector<Spectrum> quad_psd;  // one per theta (raw units)
  Spectrum mech_psd;               // x = b + b^dag of the reference mode
  ComponentSpectra components;
  Spectrum filtered;  // r-heterodyne baseband spectrum (raw units)
};

EnsembleResult run_ensemble(const SystemSpec& spec, const TimeGrid& grid,
                            const EnsembleOptions& opt);

Spectrum to_shot_noise_units(const Spectrum& raw, double floor_value);

struct ComparisonResult {
  std::string name;
  double rms_rel_dev = 0.0;
  double error_bar = 0.0;  // expected statistical deviation level
  bool pass = false;
};

struct FeatureResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct RunReport {
  std::string scenario;
  double wall_seconds = 0.0;
  std::size_t requested = 0, completed = 0, diverged = 0, failed = 0;
  std::vector<std::size_t> diverged_indices;
  std::vector<std::size_t> failed_indices;
  std::vector<ComparisonResult> comparisons;
  std::vector<FeatureResult> features;

  bool ok() const;
  std::string text() const;
  std::string json() const;
};

// RMS of (a-b)/b over bins of `ref` whose |omega| lies in [lo, hi].
double rms_relative_deviation(const Spectrum& measured,
                              const std::vector<double>& reference, double lo,
                              double hi);

// Full batch entry point: runs the ensemble(s), evaluates the preset's
// declared features, writes spectra and the report under cfg.outdir.
RunReport run(const RunConfig& cfg);

}  // namespace omsim
