#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "omsim/detection.hpp"

using namespace omsim;
using doctest::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> times(std::size_t n, double dt) {
  std::vector<double> t(n);
  for (std::size_t j = 0; j < n; ++j) t[j] = static_cast<double>(j + 1) * dt;
  return t;
}

std::vector<cplx> circular_white(std::mt19937& rng, std::size_t n,
                                 double sigma) {
  std::normal_distribution<double> dist(0.0, sigma / std::sqrt(2.0));
  std::vector<cplx> x(n);
  for (auto& z : x) z = cplx{dist(rng), dist(rng)};
  return x;
}

}  // namespace

TEST_CASE("quadrature trace basics") {
  const std::size_t n = 64;
  const auto t = times(n, 0.1);
  std::vector<cplx> ones(n, cplx{1.0, 0.0});
  std::vector<cplx> eyes(n, cplx{0.0, 1.0});

  SUBCASE("constant 1 at theta 0 gives constant 2") {
    const auto x = quadrature_of(ones, t, {0.0, 0.0});
    for (double v : x) CHECK(v == Approx(2.0));
  }
  SUBCASE("constant i at theta pi/2 gives constant 2") {
    const auto x = quadrature_of(eyes, t, {kPi / 2.0, 0.0});
    for (double v : x) CHECK(v == Approx(2.0));
  }
  SUBCASE("theta + pi flips the sign only") {
    std::mt19937 rng(1);
    const auto y = circular_white(rng, n, 1.0);
    const auto x0 = quadrature_of(y, t, {0.4, 0.0});
    const auto x1 = quadrature_of(y, t, {0.4 + kPi, 0.0});
    for (std::size_t j = 0; j < n; ++j) CHECK(x0[j] == Approx(-x1[j]));
  }
}

TEST_CASE("psd of a quadrature is pi-periodic in theta") {
  std::mt19937 rng(2);
  const std::size_t n = 256;
  const double dt = 0.05;
  const auto t = times(n, dt);
  const auto y = circular_white(rng, n, 1.0);
  PsdOptions opt;
  opt.quadrature_convention = true;
  const auto s0 = psd({quadrature_of(y, t, {0.7, 0.0})}, dt, opt);
  const auto s1 = psd({quadrature_of(y, t, {0.7 + kPi, 0.0})}, dt, opt);
  for (std::size_t i = 0; i < s0.psd.size(); ++i)
    CHECK(s0.psd[i] == Approx(s1.psd[i]).epsilon(1e-12));
}

TEST_CASE("parseval: bins times bin width reproduce the mean square") {
  // Odd length keeps every +-frequency pair, making the identity exact.
  std::mt19937 rng(3);
  const std::size_t n = 1001;
  const double dt = 0.2;
  const auto y = circular_white(rng, n, 1.7);
  const auto s = psd({y}, dt, {});
  double total = 0.0;
  const double df = s.bin_width() / (2.0 * kPi);
  for (double v : s.psd) total += v * df;
  double msq = 0.0;
  for (const auto& z : y) msq += std::norm(z);
  msq /= static_cast<double>(n);
  CHECK(total == Approx(msq).epsilon(1e-10));
}

TEST_CASE("white complex noise sits at sigma^2 dt") {
  std::mt19937 rng(4);
  const std::size_t n = 512, n_traces = 400;
  const double dt = 0.1, sigma = 1.3;
  std::vector<std::vector<cplx>> traces;
  traces.reserve(n_traces);
  for (std::size_t k = 0; k < n_traces; ++k)
    traces.push_back(circular_white(rng, n, sigma));
  const auto s = psd(traces, dt, {});
  const double level = sigma * sigma * dt;
  double mean = 0.0;
  for (double v : s.psd) mean += v;
  mean /= static_cast<double>(s.psd.size());
  CHECK(mean == Approx(level).epsilon(0.01));
  for (std::size_t i = 0; i < s.psd.size(); ++i)
    CHECK(std::abs(s.psd[i] - level) < 7.0 * level / std::sqrt(400.0));
  CHECK(s.n_avg == n_traces);
}

TEST_CASE("pure complex tone lands in a single bin") {
  const std::size_t n = 256;
  const double dt = 0.1;
  const double w0 = 2.0 * kPi * 32.0 / (static_cast<double>(n) * dt);
  const auto t = times(n, dt);
  std::vector<cplx> y(n);
  for (std::size_t j = 0; j < n; ++j) y[j] = std::exp(cplx{0.0, w0 * t[j]});
  const auto s = psd({y}, dt, {});
  const std::size_t peak = s.index_of(w0);
  CHECK(s.omega[peak] == Approx(w0));
  double rest = 0.0;
  for (std::size_t i = 0; i < s.psd.size(); ++i)
    if (i != peak) rest += s.psd[i];
  CHECK(s.psd[peak] == Approx(static_cast<double>(n) * dt));
  CHECK(rest < 1e-18 * s.psd[peak]);
}

TEST_CASE("component spectra reassemble the quadrature psd exactly") {
  std::mt19937 rng(5);
  const std::size_t n = 512;
  const double dt = 0.1;
  const auto t = times(n, dt);
  // introduce aa-type correlations by mixing in the conjugate
  std::vector<std::vector<cplx>> traces;
  for (int k = 0; k < 6; ++k) {
    auto z = circular_white(rng, n, 1.0);
    for (auto& v : z) v = v + 0.35 * std::conj(v);
    traces.push_back(std::move(z));
  }
  const auto cs = psd_components(traces, dt);

  for (double theta : {0.0, 0.3, kPi / 4.0}) {
    const auto reassembled = cs.assemble_quadrature(theta);
    PsdOptions qopt;
    qopt.quadrature_convention = true;
    std::vector<std::vector<double>> quads;
    for (const auto& z : traces) quads.push_back(quadrature_of(z, t, {theta, 0.0}));
    const auto direct = psd(quads, dt, qopt);
    REQUIRE(direct.psd.size() == reassembled.size());
    for (std::size_t i = 0; i < reassembled.size(); ++i)
      CHECK(reassembled[i] ==
            Approx(direct.psd[i]).epsilon(1e-10).scale(direct.psd[i] + 1e-12));
  }

  SUBCASE("conjugate pairing of the anomalous components") {
    for (std::size_t i = 0; i < cs.omega.size(); ++i) {
      CHECK(cs.s_adag_adag[i] == std::conj(cs.s_aa[i]));
      CHECK(cs.s_aa_dag[i] >= 0.0);
      CHECK(cs.s_adag_a[i] >= 0.0);
    }
  }
}

TEST_CASE("uncorrelated circular noise has vanishing s_aa") {
  std::mt19937 rng(6);
  const std::size_t n = 256, n_traces = 200;
  const double dt = 0.1;
  std::vector<std::vector<cplx>> traces;
  for (std::size_t k = 0; k < n_traces; ++k)
    traces.push_back(circular_white(rng, n, 1.0));
  const auto cs = psd_components(traces, dt);
  // |s_aa| ~ level / sqrt(n_traces); allow 4 sigma with level = s_aa_dag
  for (std::size_t i = 0; i < cs.omega.size(); ++i) {
    const double level = cs.s_aa_dag[i];
    CHECK(std::abs(cs.s_aa[i]) < 4.5 * level / std::sqrt(200.0));
  }
}

TEST_CASE("hann window preserves the white level") {
  std::mt19937 rng(8);
  const std::size_t n = 512, n_traces = 300;
  const double dt = 0.1, sigma = 0.9;
  std::vector<std::vector<cplx>> traces;
  for (std::size_t k = 0; k < n_traces; ++k)
    traces.push_back(circular_white(rng, n, sigma));
  PsdOptions opt;
  opt.hann_window = true;
  const auto s = psd(traces, dt, opt);
  double mean = 0.0;
  for (double v : s.psd) mean += v;
  mean /= static_cast<double>(s.psd.size());
  CHECK(mean == Approx(sigma * sigma * dt).epsilon(0.02));
}

TEST_CASE("one-sided folding sums the +- bins and keeps the power") {
  std::mt19937 rng(9);
  const std::size_t n = 257;
  const double dt = 0.1;
  const auto y = circular_white(rng, n, 1.1);
  const auto two = psd({y}, dt, {});
  const auto one = fold_one_sided(two);
  REQUIRE(one.omega.front() == 0.0);
  for (std::size_t i = 0; i < one.omega.size(); ++i) {
    CHECK(one.omega[i] >= 0.0);
    if (one.omega[i] > 0.0) {
      const std::size_t ip = two.index_of(one.omega[i]);
      const std::size_t im = two.index_of(-one.omega[i]);
      CHECK(one.psd[i] == Approx(two.psd[ip] + two.psd[im]));
    }
  }
  double total_two = 0.0, total_one = 0.0;
  for (double v : two.psd) total_two += v;
  for (double v : one.psd) total_one += v;
  CHECK(total_one == Approx(total_two));
}

TEST_CASE("psd rejects mismatched trace lengths") {
  std::vector<std::vector<cplx>> traces = {std::vector<cplx>(16),
                                           std::vector<cplx>(8)};
  CHECK_THROWS_AS(psd(traces, 0.1, {}), std::invalid_argument);
}

TEST_CASE("r-heterodyne filter demodulates a pure carrier to 1") {
  const std::size_t n = 1024;
  const double dt = 0.1;
  const auto t = times(n, dt);
  // carrier on the bin grid
  const double omega = 2.0 * kPi * 128.0 / (static_cast<double>(n) * dt);
  std::vector<double> x(n);
  for (std::size_t j = 0; j < n; ++j) x[j] = 2.0 * std::cos(omega * t[j]);
  FilterSpec f{FilterKind::r_heterodyne, 0.0, omega / 3.0};
  const auto z = r_heterodyne_filter(x, t, omega, f);
  for (const auto& v : z) CHECK(std::abs(v - cplx{1.0, 0.0}) < 1e-9);
}

TEST_CASE("filter preconditions") {
  const std::size_t n = 64;
  const auto t = times(n, 0.1);
  std::vector<double> x(n, 0.0);
  CHECK_THROWS_AS(
      r_heterodyne_filter(x, t, 0.0, {FilterKind::r_heterodyne, 0.0, 0.1}),
      std::invalid_argument);
  CHECK_THROWS_AS(
      r_heterodyne_filter(x, t, 1.0, {FilterKind::r_heterodyne, 0.0, 1.5}),
      std::invalid_argument);
}

TEST_CASE("filtered white noise is flat inside the cutoff and zero outside") {
  std::mt19937 rng(7);
  const std::size_t n = 2048;
  const double dt = 0.1;
  const auto t = times(n, dt);
  const double omega = 2.0 * kPi * 512.0 / (static_cast<double>(n) * dt);
  const double cutoff = omega / 2.5;
  std::normal_distribution<double> dist(0.0, 1.0);

  std::vector<std::vector<cplx>> base;
  for (int k = 0; k < 50; ++k) {
    std::vector<double> x(n);
    for (auto& v : x) v = dist(rng);
    base.push_back(
        r_heterodyne_filter(x, t, omega, {FilterKind::r_heterodyne, 0.0, cutoff}));
  }
  // full-grid spectrum of the baseband traces
  const auto s = psd(base, dt, {});
  double inside = 0.0, outside = 0.0;
  std::size_t n_in = 0;
  for (std::size_t i = 0; i < s.omega.size(); ++i) {
    if (std::abs(s.omega[i]) <= 0.9 * cutoff) {
      inside += s.psd[i];
      ++n_in;
    } else if (std::abs(s.omega[i]) > 1.05 * cutoff) {
      outside = std::max(outside, s.psd[i]);
    }
  }
  inside /= static_cast<double>(n_in);
  CHECK(inside > 0.0);
  CHECK(outside < 1e-20 * inside);
}
