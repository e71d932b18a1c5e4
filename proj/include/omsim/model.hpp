#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace omsim {

using cplx = std::complex<double>;

// One cavity field mode. Rates are angular frequencies; n_occ is the
// bath photon occupancy feeding this mode.
struct OpticalMode {
  double kappa = 1.0;     // energy decay rate
  double detuning = 0.0;  // drive-cavity detuning
  double n_occ = 0.0;     // bath occupancy n_p
};

struct MechanicalMode {
  double gamma = 1e-2;  // mechanical damping rate
  double omega_m = 1.0; // mechanical frequency (mean value when modulated)
  double n_occ = 0.0;   // bath occupancy n_m
};

// Bilinear / position-squared interaction between one optical and one
// mechanical mode:  g1 (a^dag + a) x  +  g2 (a^dag + a) x^2, x = b + b^dag.
struct Coupling {
  std::size_t optical_index = 0;
  std::size_t mechanical_index = 0;
  double g1 = 0.0;
  double g2 = 0.0;
};

// Slow drive of the trap: g1(t) = 2 g_bar sin(w_d t) on the (single)
// coupling, omega_m(t) = omega_m + 2 w2 cos(2 w_d t) on its mechanical mode.
struct Modulation {
  double g_bar = 0.0;
  double omega_d = 0.0;
  double omega_2 = 0.0;
  bool enabled = false;
};

struct SystemSpec {
  std::vector<OpticalMode> optical;
  std::vector<MechanicalMode> mechanical;
  std::vector<Coupling> couplings;
  std::optional<Modulation> modulation;

  std::size_t n_modes() const { return optical.size() + mechanical.size(); }
  std::size_t state_dim() const { return 2 * n_modes(); }
  bool has_nonlinear() const;
  bool is_modulated() const;
  // FNV-1a over the numeric content; used to tag trajectory records.
  std::uint64_t content_hash() const;
};

// Complex amplitude of every mode at one instant, optical modes first.
// The conjugate partners of the full 2n-dimensional vector are implicit:
// entry 2k is the mode amplitude, entry 2k+1 its complex conjugate.
using ModeState = std::vector<cplx>;

struct SpecViolation {
  std::string field;
  std::string message;
};

// Checks every structural invariant; returns an empty list when the spec
// is well formed. Never throws.
std::vector<SpecViolation> validate_spec(const SystemSpec& spec);

// Effective linear coupling of coupling c at time t (modulation applied).
double coupling_g1_at(const SystemSpec& spec, std::size_t c, double t);
// Effective mechanical frequency of mode m at time t.
double mech_omega_at(const SystemSpec& spec, std::size_t m, double t);

// Drift matrix A(t) of the linearised equations dX/dt = A(t) X in the
// interleaved (a1, a1*, a2, a2*, ..., b1, b1*, ...) representation.
// Rejects specs with any nonzero g2.
Eigen::MatrixXcd drift_linear(const SystemSpec& spec, double t);

// Deterministic velocity A(X, t) for the (possibly nonlinear) system,
// returned in the same 2n interleaved layout. Throws on non-finite input.
std::vector<cplx> drift_nonlinear(const SystemSpec& spec,
                                  const ModeState& state, double t);

// Velocity of the direct components only (one complex entry per mode).
// This is the hot path used by the propagator; `out` must have n_modes
// entries. Conjugate components follow by conjugation.
void mode_velocities(const SystemSpec& spec, const cplx* state, double t,
                     cplx* out);

}  // namespace omsim
