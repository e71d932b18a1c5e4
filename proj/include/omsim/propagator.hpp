#pragma once

#include <cstdint>
#include <vector>

#include "omsim/model.hpp"
#include "omsim/noise.hpp"

namespace omsim {

// Two nested grids: deterministic integration advances with fine_step,
// noise kicks and output samples live on coarse_step.
struct TimeGrid {
  double total_span = 0.0;   // recorded span T
  double coarse_step = 0.0;  // kick/sample spacing
  double fine_step = 0.0;    // integrator substep

  std::size_t n_coarse = 0;  // T / coarse_step
  std::size_t substeps = 0;  // coarse_step / fine_step

  TimeGrid() = default;
  // Throws std::invalid_argument unless both ratios are (near-)integers
  // and all steps are positive.
  TimeGrid(double total_span, double coarse_step, double fine_step);
};

// Output normalisation constant for the imprecision term of the output
// field. The default keeps the pure-noise trace {C dW_j} at a flat
// spectral density of n_p + 1/2 under the detection module's convention.
struct OutputNormalization {
  double c = 0.0;
  static OutputNormalization standard(double kappa, double coarse_step);
};

// Calibration hook: rescales C so that the measured decoupled floor of
// this spec/grid equals n_p + 1/2 under the frozen FFT normalisation,
// absorbing the O(kappa dt) residual of the discrete map.
OutputNormalization calibrate_output_norm(const SystemSpec& spec,
                                          const TimeGrid& grid,
                                          std::size_t n_traj,
                                          std::uint64_t master_seed,
                                          std::size_t readout_mode = 0);

struct TrajectoryRecord {
  std::vector<double> t;             // coarse sample times
  std::vector<cplx> a_out;           // correlated output field of readout mode
  std::vector<cplx> readout_kick;    // the kick paired into each a_out sample
  // Post-kick intracavity amplitudes, one row per mode (optical first).
  std::vector<std::vector<cplx>> modes;

  std::uint64_t master_seed = 0;
  std::uint64_t trajectory_index = 0;
  std::uint64_t spec_hash = 0;
  std::size_t readout_mode = 0;

  bool divergent = false;
  std::size_t divergence_step = 0;  // coarse step at which state left range
};

struct TrajectoryOptions {
  std::size_t readout_mode = 0;  // index into spec.optical
  // Imprecision normalisation; <=0 means use the standard value.
  double output_c = 0.0;
  // Steps discarded before recording; negative means the default
  // max(10/kappa, 10/gamma) rounded up to whole coarse steps.
  long transient_steps = -1;
  bool record_modes = true;
  bool record_kicks = true;
};

std::size_t default_transient_steps(const SystemSpec& spec,
                                    const TimeGrid& grid);

// Noise-free propagation over one coarse interval starting at time t,
// classic fixed-step RK4 with grid.substeps stages of grid.fine_step.
ModeState deterministic_interval(const SystemSpec& spec, const ModeState& state,
                                 double t, const TimeGrid& grid);

// X(t_j) = X(t_j^-) + dW_j, componentwise on the direct amplitudes.
ModeState apply_kick(const ModeState& state, const KickVector& kick);

// a_out(t_j) = C dW - sqrt(kappa) (a(t_j^-) + dW) with the same draw dW
// used in the intracavity update.
cplx output_sample(cplx intracavity_a_minus, cplx kick_a, double kappa,
                   double c);

TrajectoryRecord run_trajectory(const SystemSpec& spec, const TimeGrid& grid,
                                NoiseStream stream,
                                const TrajectoryOptions& opt = {});

}  // namespace omsim
