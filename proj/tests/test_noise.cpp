#include <doctest.h>

#include <cmath>

#include "omsim/detection.hpp"
#include "omsim/noise.hpp"

using namespace omsim;
using doctest::Approx;

namespace {

SystemSpec vacuum_cavity(double kappa = 2.0) {
  SystemSpec s;
  s.optical = {{kappa, 0.0, 0.0}};
  s.mechanical = {{0.1, 1.0, 0.0}};
  s.couplings = {{0, 0, 0.0, 0.0}};
  return s;
}

}  // namespace

TEST_CASE("draw_kick is deterministic in (seed, trajectory, counter)") {
  SystemSpec s = vacuum_cavity();
  NoiseStream st1 = fork_stream(42, 0);
  NoiseStream st2 = fork_stream(42, 0);
  for (int j = 0; j < 16; ++j) {
    const auto k1 = draw_kick(st1, s, 0.1);
    const auto k2 = draw_kick(st2, s, 0.1);
    REQUIRE(k1.size() == k2.size());
    for (std::size_t i = 0; i < k1.size(); ++i) CHECK(k1[i] == k2[i]);
  }
  CHECK(st1.counter == 16);
}

TEST_CASE("zero decay rate gives an identically zero kick") {
  SystemSpec s = vacuum_cavity();
  s.optical[0].kappa = 0.0;  // hypothetical, bypasses validate_spec
  NoiseStream st = fork_stream(1, 1);
  const auto k = draw_kick(st, s, 0.1);
  CHECK(std::abs(k[0]) == 0.0);
  CHECK(std::abs(k[1]) > 0.0);
}

TEST_CASE("kick second moment matches kappa (n_p + 1/2) dt") {
  // Monte-Carlo against the closed-form prefactor: kappa=2, n_p=0, dt=0.1
  // gives <|dW|^2> = 2 * 0.5 * 0.1 = 0.1.
  SystemSpec s = vacuum_cavity(2.0);
  NoiseStream st = fork_stream(314159, 0);
  const std::size_t n = 1000000;
  double acc = 0.0, acc_re = 0.0, acc_im = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto k = draw_kick(st, s, 0.1);
    acc += std::norm(k[0]);
    acc_re += k[0].real();
    acc_im += k[0].imag();
  }
  const double second_moment = acc / static_cast<double>(n);
  CHECK(second_moment == Approx(0.1).epsilon(0.01));
  // zero mean within 4 standard errors (sigma_mean = sqrt(0.05/n))
  const double se = std::sqrt(0.05 / static_cast<double>(n));
  CHECK(std::abs(acc_re / static_cast<double>(n)) < 4.0 * se);
  CHECK(std::abs(acc_im / static_cast<double>(n)) < 4.0 * se);
}

TEST_CASE("mechanical kick scaling uses gamma (n_m + 1/2)") {
  SystemSpec s = vacuum_cavity(2.0);
  s.mechanical[0].gamma = 0.5;
  s.mechanical[0].n_occ = 2.0;
  NoiseStream st = fork_stream(2718, 3);
  const std::size_t n = 400000;
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += std::norm(draw_kick(st, s, 0.2)[1]);
  // 0.5 * 2.5 * 0.2 = 0.25
  CHECK(acc / static_cast<double>(n) == Approx(0.25).epsilon(0.015));
}

TEST_CASE("forked streams are reproducible and mutually uncorrelated") {
  SystemSpec s = vacuum_cavity();

  SUBCASE("same fork twice") {
    NoiseStream a = fork_stream(42, 0);
    NoiseStream b = fork_stream(42, 0);
    CHECK(a.master_seed == b.master_seed);
    CHECK(a.trajectory_index == b.trajectory_index);
    CHECK(a.counter == 0);
  }

  auto correlation = [&](NoiseStream a, NoiseStream b) {
    const std::size_t n = 10000;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double xa = draw_kick(a, s, 0.1)[0].real();
      const double xb = draw_kick(b, s, 0.1)[0].real();
      sab += xa * xb;
      saa += xa * xa;
      sbb += xb * xb;
    }
    return sab / std::sqrt(saa * sbb);
  };

  SUBCASE("different trajectory indices") {
    CHECK(std::abs(correlation(fork_stream(42, 0), fork_stream(42, 1))) < 0.02);
  }
  SUBCASE("different master seeds") {
    CHECK(std::abs(correlation(fork_stream(42, 0), fork_stream(43, 0))) < 0.02);
  }
}

TEST_CASE("the bare kick sequence has a white periodogram") {
  // feeds the propagator's flat-floor normalisation: no frequency
  // structure beyond statistical scatter
  SystemSpec s = vacuum_cavity(2.0);
  const double dt = 0.1;
  const std::size_t n = 512, reps = 200;
  std::vector<std::vector<cplx>> traces(reps, std::vector<cplx>(n));
  for (std::size_t r = 0; r < reps; ++r) {
    NoiseStream st = fork_stream(606, r);
    for (std::size_t j = 0; j < n; ++j) traces[r][j] = draw_kick(st, s, dt)[0];
  }
  const auto sp = psd(traces, dt, {});
  const double level = 2.0 * 0.5 * dt * dt;  // kappa (n+1/2) dt * dt
  double mean = 0.0;
  for (double v : sp.psd) mean += v;
  mean /= static_cast<double>(sp.psd.size());
  CHECK(mean == Approx(level).epsilon(0.02));
  for (double v : sp.psd)
    CHECK(std::abs(v - level) < 7.0 * level / std::sqrt(double(reps)));
}

TEST_CASE("draw_kick requires a positive coarse step") {
  SystemSpec s = vacuum_cavity();
  NoiseStream st = fork_stream(1, 0);
  CHECK_THROWS_AS(draw_kick(st, s, 0.0), std::invalid_argument);
}
