#pragma once

#include <cstdint>
#include <vector>

#include "omsim/model.hpp"

namespace omsim {

// Counter-based random stream. The kick at index j of trajectory i under
// master seed s is a pure function of (s, i, j), so streams are splittable,
// replayable and independent of worker scheduling.
struct NoiseStream {
  std::uint64_t master_seed = 0;
  std::uint64_t trajectory_index = 0;
  std::uint64_t counter = 0;
};

// One complex Wiener increment per mode, ordered as in ModeState.
using KickVector = std::vector<cplx>;

NoiseStream fork_stream(std::uint64_t master_seed,
                        std::uint64_t trajectory_index);

// Standard normal pair derived from the (seed, trajectory, counter, slot)
// tuple. Exposed for tests of the generator itself.
void normal_pair(std::uint64_t master_seed, std::uint64_t trajectory_index,
                 std::uint64_t counter, std::uint64_t slot, double& n0,
                 double& n1);

// Gaussian kick vector for one coarse step: mode k receives
// sqrt(rate_k (n_k + 1/2)) * zeta with zeta a circular complex normal of
// total variance dt_coarse. Advances the stream counter by one.
KickVector draw_kick(NoiseStream& stream, const SystemSpec& spec,
                     double dt_coarse);

// Same draw without the allocation; out must have n_modes entries.
void draw_kick_into(NoiseStream& stream, const SystemSpec& spec,
                    double dt_coarse, KickVector& out);

}  // namespace omsim
