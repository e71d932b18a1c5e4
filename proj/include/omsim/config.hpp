#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "omsim/scenarios.hpp"

namespace omsim {

// Fully resolved batch-run description: a scenario (preset, possibly with
// overrides, or a system built entirely from config sections) plus
// orchestration knobs.
struct RunConfig {
  ScenarioPreset scenario;
  std::size_t n_traj = 0;  // 0 = scenario ensemble size
  std::uint64_t master_seed = 1;
  std::size_t workers = 0;  // 0 = OMSIM_WORKERS or hardware default
  std::string outdir = "out";
  bool qlt_compare = false;
  bool components = false;
  bool mech_spectrum = false;
  bool use_filter = false;
  bool deterministic_reduce = true;
  std::size_t welch_segments = 1;
  bool hann = false;
  bool one_sided = false;

  std::size_t effective_n_traj() const {
    return n_traj > 0 ? n_traj : scenario.ensemble_size;
  }
};

struct ParseError {
  int line = 0;  // 0 when the error is not tied to a single line
  std::string message;
};

struct ParseResult {
  std::optional<RunConfig> config;
  std::vector<ParseError> errors;
  bool ok() const { return config.has_value() && errors.empty(); }
};

// Parses the sectioned key = value format described in the README.
// Unknown sections or keys are errors; the assembled system spec is
// validated and violations are reported with the section's line number.
ParseResult parse_config(const std::string& text);

}  // namespace omsim
