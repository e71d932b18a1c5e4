#include "omsim/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace omsim {

namespace {

constexpr cplx kImag{0.0, 1.0};

bool finite(const cplx& z) {
  return std::isfinite(z.real()) && std::isfinite(z.imag());
}

void hash_double(std::uint64_t& h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) {
    h ^= (bits >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ull;
  }
}

}  // namespace

bool SystemSpec::has_nonlinear() const {
  for (const auto& c : couplings)
    if (c.g2 != 0.0) return true;
  return false;
}

bool SystemSpec::is_modulated() const {
  return modulation.has_value() && modulation->enabled;
}

std::uint64_t SystemSpec::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& o : optical) {
    hash_double(h, o.kappa);
    hash_double(h, o.detuning);
    hash_double(h, o.n_occ);
  }
  for (const auto& m : mechanical) {
    hash_double(h, m.gamma);
    hash_double(h, m.omega_m);
    hash_double(h, m.n_occ);
  }
  for (const auto& c : couplings) {
    hash_double(h, static_cast<double>(c.optical_index));
    hash_double(h, static_cast<double>(c.mechanical_index));
    hash_double(h, c.g1);
    hash_double(h, c.g2);
  }
  if (is_modulated()) {
    hash_double(h, modulation->g_bar);
    hash_double(h, modulation->omega_d);
    hash_double(h, modulation->omega_2);
  }
  return h;
}

std::vector<SpecViolation> validate_spec(const SystemSpec& spec) {
  std::vector<SpecViolation> out;
  auto add = [&](std::string field, std::string msg) {
    out.push_back({std::move(field), std::move(msg)});
  };

  if (spec.optical.empty()) add("optical", "at least one optical mode required");
  if (spec.mechanical.empty())
    add("mechanical", "at least one mechanical mode required");

  for (std::size_t i = 0; i < spec.optical.size(); ++i) {
    const auto& o = spec.optical[i];
    const std::string p = "optical[" + std::to_string(i) + "].";
    if (!(o.kappa > 0.0)) add(p + "kappa", "must be > 0");
    if (!(o.n_occ >= 0.0)) add(p + "n_occ", "must be >= 0");
    if (!std::isfinite(o.detuning)) add(p + "detuning", "must be finite");
  }
  for (std::size_t i = 0; i < spec.mechanical.size(); ++i) {
    const auto& m = spec.mechanical[i];
    const std::string p = "mechanical[" + std::to_string(i) + "].";
    if (!(m.gamma > 0.0)) add(p + "gamma", "must be > 0");
    if (!(m.omega_m > 0.0)) add(p + "omega_m", "must be > 0");
    if (!(m.n_occ >= 0.0)) add(p + "n_occ", "must be >= 0");
  }
  for (std::size_t i = 0; i < spec.couplings.size(); ++i) {
    const auto& c = spec.couplings[i];
    const std::string p = "coupling[" + std::to_string(i) + "].";
    if (c.optical_index >= spec.optical.size())
      add(p + "optical_index", "no such optical mode");
    if (c.mechanical_index >= spec.mechanical.size())
      add(p + "mechanical_index", "no such mechanical mode");
    if (!std::isfinite(c.g1)) add(p + "g1", "must be finite");
    if (!std::isfinite(c.g2)) add(p + "g2", "must be finite");
  }
  if (spec.is_modulated()) {
    const auto& mod = *spec.modulation;
    if (!(mod.omega_d > 0.0)) add("modulation.omega_d", "must be > 0 when enabled");
    if (!std::isfinite(mod.g_bar)) add("modulation.g_bar", "must be finite");
    if (!std::isfinite(mod.omega_2)) add("modulation.omega_2", "must be finite");
    if (spec.couplings.size() != 1)
      add("modulation", "modulation targets exactly one coupling; spec has " +
                            std::to_string(spec.couplings.size()));
  }
  return out;
}

double coupling_g1_at(const SystemSpec& spec, std::size_t c, double t) {
  if (spec.is_modulated() && c == 0)
    return 2.0 * spec.modulation->g_bar * std::sin(spec.modulation->omega_d * t);
  return spec.couplings[c].g1;
}

double mech_omega_at(const SystemSpec& spec, std::size_t m, double t) {
  double w = spec.mechanical[m].omega_m;
  if (spec.is_modulated() && !spec.couplings.empty() &&
      m == spec.couplings[0].mechanical_index)
    w += 2.0 * spec.modulation->omega_2 *
         std::cos(2.0 * spec.modulation->omega_d * t);
  return w;
}

void mode_velocities(const SystemSpec& spec, const cplx* state, double t,
                     cplx* out) {
  const std::size_t n_opt = spec.optical.size();
  const std::size_t n_mech = spec.mechanical.size();

  for (std::size_t i = 0; i < n_opt; ++i) {
    const auto& o = spec.optical[i];
    out[i] = (kImag * o.detuning - 0.5 * o.kappa) * state[i];
  }
  for (std::size_t i = 0; i < n_mech; ++i) {
    const auto& m = spec.mechanical[i];
    out[n_opt + i] =
        (-kImag * mech_omega_at(spec, i, t) - 0.5 * m.gamma) * state[n_opt + i];
  }
  for (std::size_t c = 0; c < spec.couplings.size(); ++c) {
    const auto& cp = spec.couplings[c];
    const std::size_t io = cp.optical_index;
    const std::size_t im = n_opt + cp.mechanical_index;
    const double g1 = coupling_g1_at(spec, c, t);
    const double x = 2.0 * state[im].real();  // b + b*
    const double q = 2.0 * state[io].real();  // a + a*
    out[io] += kImag * (g1 * x);
    out[im] += kImag * (g1 * q);
    if (cp.g2 != 0.0) {
      out[io] += kImag * (cp.g2 * x * x);
      out[im] += kImag * (2.0 * cp.g2 * q * x);
    }
  }
}

Eigen::MatrixXcd drift_linear(const SystemSpec& spec, double t) {
  if (spec.has_nonlinear())
    throw std::invalid_argument(
        "drift_linear: spec has nonzero g2; use drift_nonlinear");

  const std::size_t n_opt = spec.optical.size();
  const std::size_t dim = spec.state_dim();
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim, dim);

  for (std::size_t i = 0; i < n_opt; ++i) {
    const auto& o = spec.optical[i];
    a(2 * i, 2 * i) = kImag * o.detuning - 0.5 * o.kappa;
  }
  for (std::size_t i = 0; i < spec.mechanical.size(); ++i) {
    const auto& m = spec.mechanical[i];
    const std::size_t r = 2 * (n_opt + i);
    a(r, r) = -kImag * mech_omega_at(spec, i, t) - 0.5 * m.gamma;
  }
  for (std::size_t c = 0; c < spec.couplings.size(); ++c) {
    const auto& cp = spec.couplings[c];
    const std::size_t ro = 2 * cp.optical_index;
    const std::size_t rm = 2 * (n_opt + cp.mechanical_index);
    const cplx ig1 = kImag * coupling_g1_at(spec, c, t);
    a(ro, rm) += ig1;
    a(ro, rm + 1) += ig1;
    a(rm, ro) += ig1;
    a(rm, ro + 1) += ig1;
  }

  // Conjugate rows: row 2k+1 equals row 2k conjugated with every
  // direct/conjugate column pair swapped.
  for (std::size_t k = 0; 2 * k < dim; ++k) {
    for (std::size_t j = 0; 2 * j < dim; ++j) {
      a(2 * k + 1, 2 * j) = std::conj(a(2 * k, 2 * j + 1));
      a(2 * k + 1, 2 * j + 1) = std::conj(a(2 * k, 2 * j));
    }
  }
  return a;
}

std::vector<cplx> drift_nonlinear(const SystemSpec& spec,
                                  const ModeState& state, double t) {
  if (state.size() != spec.n_modes())
    throw std::invalid_argument("drift_nonlinear: state size mismatch");
  for (const auto& z : state)
    if (!finite(z)) throw std::invalid_argument("drift_nonlinear: non-finite state");

  std::vector<cplx> direct(spec.n_modes());
  mode_velocities(spec, state.data(), t, direct.data());

  std::vector<cplx> full(spec.state_dim());
  for (std::size_t k = 0; k < spec.n_modes(); ++k) {
    full[2 * k] = direct[k];
    full[2 * k + 1] = std::conj(direct[k]);
  }
  return full;
}

}  // namespace omsim
