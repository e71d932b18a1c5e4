#include "omsim/propagator.hpp"

#include <cmath>
#include <stdexcept>

namespace omsim {

namespace {

bool near_integer(double x, double tol = 1e-6) {
  return std::abs(x - std::round(x)) < tol * std::max(1.0, std::abs(x));
}

bool state_in_range(const ModeState& s) {
  for (const auto& z : s) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    if (std::abs(z.real()) > 1e12 || std::abs(z.imag()) > 1e12) return false;
  }
  return true;
}

// One RK4 substep of the direct-component equations.
void rk4_step(const SystemSpec& spec, std::vector<cplx>& y, double t, double h,
              std::vector<cplx>& k1, std::vector<cplx>& k2,
              std::vector<cplx>& k3, std::vector<cplx>& k4,
              std::vector<cplx>& tmp) {
  const std::size_t n = y.size();
  mode_velocities(spec, y.data(), t, k1.data());
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
  mode_velocities(spec, tmp.data(), t + 0.5 * h, k2.data());
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
  mode_velocities(spec, tmp.data(), t + 0.5 * h, k3.data());
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
  mode_velocities(spec, tmp.data(), t + h, k4.data());
  for (std::size_t i = 0; i < n; ++i)
    y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

struct Workspace {
  std::vector<cplx> k1, k2, k3, k4, tmp;
  explicit Workspace(std::size_t n) : k1(n), k2(n), k3(n), k4(n), tmp(n) {}
};

void integrate_interval(const SystemSpec& spec, ModeState& state, double t,
                        const TimeGrid& grid, Workspace& ws) {
  for (std::size_t s = 0; s < grid.substeps; ++s)
    rk4_step(spec, state, t + static_cast<double>(s) * grid.fine_step,
             grid.fine_step, ws.k1, ws.k2, ws.k3, ws.k4, ws.tmp);
}

}  // namespace

TimeGrid::TimeGrid(double total_span_, double coarse_step_, double fine_step_)
    : total_span(total_span_), coarse_step(coarse_step_), fine_step(fine_step_) {
  if (!(fine_step > 0.0) || !(coarse_step > 0.0) || !(total_span > 0.0))
    throw std::invalid_argument("TimeGrid: steps and span must be > 0");
  if (fine_step > coarse_step)
    throw std::invalid_argument("TimeGrid: fine_step must not exceed coarse_step");
  const double sub = coarse_step / fine_step;
  const double n = total_span / coarse_step;
  if (!near_integer(sub))
    throw std::invalid_argument("TimeGrid: coarse_step/fine_step must be an integer");
  if (!near_integer(n))
    throw std::invalid_argument("TimeGrid: total_span/coarse_step must be an integer");
  substeps = static_cast<std::size_t>(std::llround(sub));
  n_coarse = static_cast<std::size_t>(std::llround(n));
  if (substeps == 0 || n_coarse == 0)
    throw std::invalid_argument("TimeGrid: empty grid");
}

OutputNormalization OutputNormalization::standard(double kappa,
                                                  double coarse_step) {
  return {1.0 / (std::sqrt(kappa) * coarse_step)};
}

OutputNormalization calibrate_output_norm(const SystemSpec& spec,
                                          const TimeGrid& grid,
                                          std::size_t n_traj,
                                          std::uint64_t master_seed,
                                          std::size_t readout_mode) {
  // The bin average of the output periodogram equals dt * <|a_out|^2>, and
  //   <|a_out|^2> = sigma^2 C^2 - 2 sqrt(kappa) sigma^2 C + kappa <|a_post|^2>
  // for the decoupled readout (the kick is uncorrelated with a(t^-)), so the
  // C that puts the floor exactly at n_p + 1/2 solves a known quadratic with
  // only <|a_post|^2> measured.
  SystemSpec dec = spec;
  for (auto& c : dec.couplings) {
    c.g1 = 0.0;
    c.g2 = 0.0;
  }
  dec.modulation.reset();

  const double kappa = dec.optical[readout_mode].kappa;
  const double n_occ = dec.optical[readout_mode].n_occ;
  const double dt = grid.coarse_step;
  const double sigma2 = kappa * (n_occ + 0.5) * dt;

  TrajectoryOptions opt;
  opt.readout_mode = readout_mode;
  opt.record_kicks = false;
  double msq = 0.0;
  std::size_t count = 0;
  for (std::uint64_t i = 0; i < n_traj; ++i) {
    const auto rec = run_trajectory(dec, grid, fork_stream(master_seed, i), opt);
    if (rec.divergent) continue;
    for (const auto& a : rec.modes[readout_mode]) {
      msq += std::norm(a);
      ++count;
    }
  }
  if (count == 0)
    throw std::runtime_error("calibrate_output_norm: no usable trajectories");
  msq /= static_cast<double>(count);

  const double target = (n_occ + 0.5) / dt;
  const double disc =
      kappa - (kappa * msq - target) / sigma2;  // (C - sqrt(kappa))^2
  if (disc <= 0.0)
    throw std::runtime_error("calibrate_output_norm: no real solution");
  return {std::sqrt(kappa) + std::sqrt(disc)};
}

std::size_t default_transient_steps(const SystemSpec& spec,
                                    const TimeGrid& grid) {
  double slowest = 0.0;
  for (const auto& o : spec.optical) slowest = std::max(slowest, 10.0 / o.kappa);
  for (const auto& m : spec.mechanical)
    slowest = std::max(slowest, 10.0 / m.gamma);
  return static_cast<std::size_t>(std::ceil(slowest / grid.coarse_step));
}

ModeState deterministic_interval(const SystemSpec& spec, const ModeState& state,
                                 double t, const TimeGrid& grid) {
  if (state.size() != spec.n_modes())
    throw std::invalid_argument("deterministic_interval: state size mismatch");
  ModeState y = state;
  Workspace ws(y.size());
  integrate_interval(spec, y, t, grid, ws);
  if (!state_in_range(y))
    throw std::runtime_error("deterministic_interval: state diverged");
  return y;
}

ModeState apply_kick(const ModeState& state, const KickVector& kick) {
  if (state.size() != kick.size())
    throw std::invalid_argument("apply_kick: size mismatch");
  ModeState y = state;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += kick[i];
  return y;
}

cplx output_sample(cplx intracavity_a_minus, cplx kick_a, double kappa,
                   double c) {
  return c * kick_a - std::sqrt(kappa) * (intracavity_a_minus + kick_a);
}

TrajectoryRecord run_trajectory(const SystemSpec& spec, const TimeGrid& grid,
                                NoiseStream stream,
                                const TrajectoryOptions& opt) {
  if (opt.readout_mode >= spec.optical.size())
    throw std::invalid_argument("run_trajectory: readout mode out of range");

  const std::size_t n_modes = spec.n_modes();
  const std::size_t l = opt.readout_mode;
  const double kappa = spec.optical[l].kappa;
  const double c = opt.output_c > 0.0
                       ? opt.output_c
                       : OutputNormalization::standard(kappa, grid.coarse_step).c;
  const std::size_t n_transient =
      opt.transient_steps >= 0 ? static_cast<std::size_t>(opt.transient_steps)
                               : default_transient_steps(spec, grid);

  TrajectoryRecord rec;
  rec.master_seed = stream.master_seed;
  rec.trajectory_index = stream.trajectory_index;
  rec.spec_hash = spec.content_hash();
  rec.readout_mode = l;
  rec.t.resize(grid.n_coarse);
  rec.a_out.resize(grid.n_coarse);
  if (opt.record_kicks) rec.readout_kick.resize(grid.n_coarse);
  if (opt.record_modes)
    rec.modes.assign(n_modes, std::vector<cplx>(grid.n_coarse));

  ModeState state(n_modes, cplx{0.0, 0.0});
  KickVector kick(n_modes);
  Workspace ws(n_modes);
  double t = 0.0;

  for (std::size_t step = 0; step < n_transient + grid.n_coarse; ++step) {
    integrate_interval(spec, state, t, grid, ws);
    draw_kick_into(stream, spec, grid.coarse_step, kick);
    const cplx a_minus = state[l];
    for (std::size_t i = 0; i < n_modes; ++i) state[i] += kick[i];
    t += grid.coarse_step;

    if (!state_in_range(state)) {
      rec.divergent = true;
      rec.divergence_step = step;
      return rec;
    }
    if (step < n_transient) continue;

    const std::size_t j = step - n_transient;
    rec.t[j] = t;
    rec.a_out[j] = output_sample(a_minus, kick[l], kappa, c);
    if (opt.record_kicks) rec.readout_kick[j] = kick[l];
    if (opt.record_modes)
      for (std::size_t i = 0; i < n_modes; ++i) rec.modes[i][j] = state[i];
  }
  return rec;
}

}  // namespace omsim
