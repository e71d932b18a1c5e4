#include "omsim/scenarios.hpp"

#include <numbers>
#include <stdexcept>

namespace omsim {

namespace {

constexpr double kPi = std::numbers::pi;

// All presets use the mechanical frequency as the unit of rate and a
// coarse grid of 2^14 samples unless noted. Numeric values are chosen to
// sit inside the regime constraints each scenario is meant to exercise.

ScenarioPreset make_decoupled_floor() {
  ScenarioPreset p;
  p.name = "decoupled_floor";
  p.system.optical = {{1.0, 0.0, 0.0}};
  p.system.mechanical = {{0.04, 1.0, 0.0}};
  p.system.couplings = {{0, 0, 0.0, 0.0}};
  // 2^14 coarse samples; the kick step sets the residual floor deficit
  // (~kappa dt), so it is kept small here.
  p.grid = TimeGrid(204.8, 0.0125, 0.0125);
  p.theta_sweep = {0.0};
  p.ensemble_size = 500;
  p.expected = {
      {ExpectedFeature::Kind::flat_floor, 0.0, 0.0, 0.03},
      {ExpectedFeature::Kind::mech_symmetric, 0.0, 0.0, 3.0},
  };
  return p;
}

ScenarioPreset make_squeezing_linear() {
  ScenarioPreset p;
  p.name = "squeezing_linear";
  // Back-action dominated (vacuum mechanical bath), sideband resolved,
  // slightly red detuned. Weak coupling keeps the incoherent transduction
  // peak small compared to the ponderomotive correlations, which is what
  // puts the quadrature dips cleanly below the floor.
  p.system.optical = {{1.0, -0.3, 0.0}};
  p.system.mechanical = {{0.04, 1.0, 0.0}};
  p.system.couplings = {{0, 0, 0.06, 0.0}};
  p.grid = TimeGrid(1638.4, 0.025, 0.0125);
  p.theta_sweep = {0.0, kPi / 8.0, kPi / 4.0, 3.0 * kPi / 8.0};
  // Default detection is homodyne; heterodyne runs pick their own carrier
  // and reuse this cutoff.
  p.filter = {FilterKind::r_heterodyne, 0.0, 2.2};
  p.ensemble_size = 500;
  p.expected = {
      {ExpectedFeature::Kind::qlt_agreement, 0.5, 1.5, 0.05},
      {ExpectedFeature::Kind::subfloor_dip, 0.0, 0.0, 3.0},
      {ExpectedFeature::Kind::mech_symmetric, 0.0, 0.0, 3.0},
  };
  return p;
}

ScenarioPreset make_modulated_split_sideband() {
  ScenarioPreset p;
  p.name = "modulated_split_sideband";
  // Slowly modulated trap: w_d << w_M, coupling g1(t) = 2 g_bar sin(w_d t),
  // mechanical frequency modulated at 2 w_d.
  p.system.optical = {{1.0, 0.0, 0.0}};
  p.system.mechanical = {{0.02, 1.0, 3.0}};
  p.system.couplings = {{0, 0, 0.0, 0.0}};
  p.system.modulation = Modulation{0.10, 0.05, 0.05, true};
  p.grid = TimeGrid(1638.4, 0.05, 0.0125);
  p.theta_sweep = {kPi / 2.0};
  p.ensemble_size = 1000;
  p.expected = {
      {ExpectedFeature::Kind::split_sidebands, 1.0, 0.05, 1.0},
      {ExpectedFeature::Kind::nonmonotonic_upper_sideband, 1.05, 0.05, 3.0},
      {ExpectedFeature::Kind::mech_symmetric, 0.0, 0.0, 3.0},
  };
  return p;
}

ScenarioPreset make_mixed_g1_g2() {
  ScenarioPreset p;
  p.name = "mixed_g1_g2";
  // Linear + position-squared coupling, sideband resolved so the 2 w_M
  // sideband is cavity-filtered well below the DC one.
  p.system.optical = {{1.0, 0.0, 0.0}};
  p.system.mechanical = {{0.04, 1.0, 3.0}};
  p.system.couplings = {{0, 0, 0.10, 0.02}};
  p.grid = TimeGrid(1638.4, 0.05, 0.0125);
  p.theta_sweep = {kPi / 2.0};
  p.ensemble_size = 600;
  // the x^2 back-action shifts the oscillator slightly, so the second
  // harmonic is looked for in a few-bin window around 2 w_m
  p.expected = {
      {ExpectedFeature::Kind::peak_near, 0.0, 0.0, 2.0},
      {ExpectedFeature::Kind::peak_near, 2.0, 0.0, 4.0},
      {ExpectedFeature::Kind::central_peak_dominates, 2.0, 0.0, 1.0},
      {ExpectedFeature::Kind::mech_symmetric, 0.0, 0.0, 3.0},
  };
  return p;
}

ScenarioPreset make_pure_g2_ground_state() {
  ScenarioPreset p;
  p.name = "pure_g2_ground_state";
  // Pure x^2 coupling at zero bath temperature. The output features are
  // driven by zero-point motion only; the rectified response at DC is the
  // one robustly measurable at desk scale, and the coupling sits well
  // below the parametric runaway threshold.
  p.system.optical = {{2.0, 0.0, 0.0}};
  p.system.mechanical = {{0.1, 1.0, 0.0}};
  p.system.couplings = {{0, 0, 0.0, 0.03}};
  p.grid = TimeGrid(1638.4, 0.05, 0.0125);
  p.theta_sweep = {kPi / 2.0};
  p.ensemble_size = 10000;
  p.expensive = true;
  p.expected = {
      {ExpectedFeature::Kind::peak_near, 0.0, 0.0, 2.0},
      {ExpectedFeature::Kind::mech_symmetric, 0.0, 0.0, 3.0},
      {ExpectedFeature::Kind::g2_square_scaling, 0.0, 0.0, 3.0},
      {ExpectedFeature::Kind::detuning_structure, 0.0, 0.5, 3.0},
  };
  return p;
}

}  // namespace

std::string ExpectedFeature::describe() const {
  switch (kind) {
    case Kind::flat_floor:
      return "flat shot-noise floor, |mean-1| <= " + std::to_string(tol);
    case Kind::qlt_agreement:
      return "RMS relative deviation vs analytic spectra <= " +
             std::to_string(tol) + " on [" + std::to_string(omega0) + ", " +
             std::to_string(delta) + "]";
    case Kind::subfloor_dip:
      return "sub-floor quadrature dip present";
    case Kind::peak_near:
      return "spectral peak near omega = " + std::to_string(omega0);
    case Kind::split_sidebands:
      return "split sidebands at " + std::to_string(omega0) + " +- " +
             std::to_string(delta);
    case Kind::central_peak_dominates:
      return "DC feature exceeds the one at omega = " + std::to_string(omega0);
    case Kind::mech_symmetric:
      return "mechanical spectrum symmetric within " + std::to_string(tol) +
             " standard errors";
    case Kind::nonmonotonic_upper_sideband:
      return "upper sideband suppressed then restored under omega_2 scan";
    case Kind::g2_square_scaling:
      return "nonlinear feature height scales as g2^2";
    case Kind::detuning_structure:
      return "nonlinear feature present at detuning " + std::to_string(delta);
  }
  return "?";
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "decoupled_floor", "squeezing_linear", "modulated_split_sideband",
      "mixed_g1_g2", "pure_g2_ground_state"};
  return names;
}

ScenarioPreset preset(const std::string& name) {
  if (name == "decoupled_floor") return make_decoupled_floor();
  if (name == "squeezing_linear") return make_squeezing_linear();
  if (name == "modulated_split_sideband") return make_modulated_split_sideband();
  if (name == "mixed_g1_g2") return make_mixed_g1_g2();
  if (name == "pure_g2_ground_state") return make_pure_g2_ground_state();
  throw std::invalid_argument("unknown scenario preset: " + name);
}

}  // namespace omsim
