#pragma once

#include <string>
#include <vector>

#include "omsim/detection.hpp"
#include "omsim/model.hpp"
#include "omsim/propagator.hpp"

namespace omsim {

// Declarative acceptance hooks carried by each preset; evaluated against
// measured spectra by the runner and the acceptance suite.
struct ExpectedFeature {
  enum class Kind {
    flat_floor,               // |band mean - 1| <= tol, shot-noise units
    qlt_agreement,            // RMS rel. dev. vs analytic <= tol on [omega0, delta]
    subfloor_dip,             // analytic & sampled PSD dip below 1 somewhere
    peak_near,                // spectral peak within tol bins of omega0
    split_sidebands,          // peaks at omega0 +- delta, splitting 2*delta
    central_peak_dominates,   // feature at DC exceeds feature at omega0
    mech_symmetric,           // |S(w) - S(-w)| within tol standard errors
    nonmonotonic_upper_sideband,  // w2 scan suppresses then restores peak
    g2_square_scaling,        // feature height scales as g2^2
    detuning_structure,       // nonlinear feature survives detuning change
  };
  Kind kind;
  double omega0 = 0.0;
  double delta = 0.0;
  double tol = 0.0;

  std::string describe() const;
};

struct ScenarioPreset {
  std::string name;
  SystemSpec system;
  TimeGrid grid;
  std::vector<double> theta_sweep;
  double omega_het = 0.0;
  FilterSpec filter;
  std::size_t ensemble_size = 0;
  std::size_t readout_mode = 0;
  std::size_t reference_mech = 0;  // mechanical mode fixing the frequency unit
  bool expensive = false;
  std::vector<ExpectedFeature> expected;

  double omega_ref() const { return system.mechanical[reference_mech].omega_m; }
};

const std::vector<std::string>& preset_names();
ScenarioPreset preset(const std::string& name);  // throws on unknown name

}  // namespace omsim
