#include <doctest.h>

#include "omsim/qlt.hpp"
#include "omsim/scenarios.hpp"

using namespace omsim;

TEST_CASE("every preset is well formed and stable in its linear reduction") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    const auto p = preset(name);
    CHECK(p.name == name);
    CHECK(validate_spec(p.system).empty());
    CHECK(p.ensemble_size > 0);
    CHECK(!p.theta_sweep.empty());
    CHECK(!p.expected.empty());
    CHECK(p.grid.n_coarse > 0);

    SystemSpec linear = p.system;
    for (auto& c : linear.couplings) c.g2 = 0.0;
    linear.modulation.reset();
    CHECK(stability_check(drift_linear(linear, 0.0)).stable);

    for (const auto& f : p.expected) CHECK(!f.describe().empty());
  }
}

TEST_CASE("decoupled_floor has no coupling and cold input") {
  const auto p = preset("decoupled_floor");
  for (const auto& c : p.system.couplings) {
    CHECK(c.g1 == 0.0);
    CHECK(c.g2 == 0.0);
  }
  CHECK(p.system.optical[0].n_occ == 0.0);
}

TEST_CASE("modulated preset satisfies the slow-modulation regime") {
  const auto p = preset("modulated_split_sideband");
  REQUIRE(p.system.is_modulated());
  const auto& mod = *p.system.modulation;
  CHECK(mod.omega_d > 0.0);
  CHECK(mod.omega_d < 0.2 * p.system.mechanical[0].omega_m);  // w_d << w_M
  // split peaks must be separable on the frequency grid
  const double bin = 2.0 * std::numbers::pi / p.grid.total_span;
  CHECK(mod.omega_d > 4.0 * bin);
}

TEST_CASE("squeezing and mixed presets are sideband resolved") {
  for (const char* name : {"squeezing_linear", "mixed_g1_g2"}) {
    const auto p = preset(name);
    CHECK(p.system.mechanical[0].omega_m >=
          0.5 * p.system.optical[0].kappa);
  }
}

TEST_CASE("pure g2 preset is cold and flagged expensive") {
  const auto p = preset("pure_g2_ground_state");
  CHECK(p.system.mechanical[0].n_occ == 0.0);  // T_B = 0
  CHECK(p.system.couplings[0].g1 == 0.0);
  CHECK(p.system.couplings[0].g2 != 0.0);
  CHECK(p.expensive);
  CHECK(p.ensemble_size >= 10000);
}

TEST_CASE("unknown preset name throws") {
  CHECK_THROWS_AS(preset("no_such_thing"), std::invalid_argument);
}
