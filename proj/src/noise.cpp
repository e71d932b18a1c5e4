#include "omsim/noise.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace omsim {

namespace {

// splitmix64 finalizer; full-period bijective mixer.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t key_of(std::uint64_t seed, std::uint64_t traj,
                     std::uint64_t counter, std::uint64_t slot) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ (traj * 0x9e3779b97f4a7c15ull));
  h = mix64(h ^ (counter * 0xc2b2ae3d27d4eb4full));
  h = mix64(h ^ (slot * 0x165667b19e3779f9ull));
  return h;
}

// Uniform in (0, 1]; never returns 0 so log() below is safe.
double to_unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace

NoiseStream fork_stream(std::uint64_t master_seed,
                        std::uint64_t trajectory_index) {
  return NoiseStream{master_seed, trajectory_index, 0};
}

void normal_pair(std::uint64_t master_seed, std::uint64_t trajectory_index,
                 std::uint64_t counter, std::uint64_t slot, double& n0,
                 double& n1) {
  const std::uint64_t k = key_of(master_seed, trajectory_index, counter, slot);
  const double u1 = to_unit_open(k);
  const double u2 = to_unit_open(mix64(k));
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  n0 = r * std::cos(phi);
  n1 = r * std::sin(phi);
}

KickVector draw_kick(NoiseStream& stream, const SystemSpec& spec,
                     double dt_coarse) {
  KickVector kick(spec.n_modes());
  draw_kick_into(stream, spec, dt_coarse, kick);
  return kick;
}

void draw_kick_into(NoiseStream& stream, const SystemSpec& spec,
                    double dt_coarse, KickVector& kick) {
  if (!(dt_coarse > 0.0))
    throw std::invalid_argument("draw_kick: dt_coarse must be > 0");

  const std::size_t n_opt = spec.optical.size();
  const std::size_t n_modes = spec.n_modes();
  const double amp = std::sqrt(0.5 * dt_coarse);

  for (std::size_t k = 0; k < n_modes; ++k) {
    double rate, occ;
    if (k < n_opt) {
      rate = spec.optical[k].kappa;
      occ = spec.optical[k].n_occ;
    } else {
      rate = spec.mechanical[k - n_opt].gamma;
      occ = spec.mechanical[k - n_opt].n_occ;
    }
    double n0, n1;
    normal_pair(stream.master_seed, stream.trajectory_index, stream.counter, k,
                n0, n1);
    const double pref = std::sqrt(rate * (occ + 0.5));
    kick[k] = pref * amp * cplx{n0, n1};
  }
  ++stream.counter;
}

}  // namespace omsim
