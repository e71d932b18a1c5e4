#pragma once

#include <vector>

#include <Eigen/Dense>

#include "omsim/detection.hpp"
#include "omsim/model.hpp"

namespace omsim {

struct StabilityReport {
  bool stable = false;
  double max_real_part = 0.0;
  Eigen::VectorXcd eigenvalues;
  std::string summary() const;
};

// True iff every eigenvalue of the drift matrix has negative real part.
StabilityReport stability_check(const Eigen::MatrixXcd& drift);

// Transfer matrix M(omega) = (-i omega I - A)^(-1) of the linear system.
struct FrequencyResponse {
  Eigen::MatrixXcd drift;
  Eigen::MatrixXcd transfer(double omega) const;
};

// Analytic output-field spectra of the linearised, time-independent
// system, in the same estimator conventions as the detection module:
// the decoupled-cavity floor of s_aa_dag + s_adag_a equals n_p + 1/2.
struct QltSpectrum {
  std::vector<double> omega;
  std::vector<double> s_aa_dag;
  std::vector<double> s_adag_a;
  std::vector<cplx> s_aa;
  std::vector<cplx> s_adag_adag;
  std::vector<double> s_corr;     // e^{2i theta} S_a+a+ + e^{-2i theta} S_aa
  std::vector<double> s_x_theta;  // assembled quadrature PSD at config theta
  double floor = 0.5;             // n_p + 1/2 of the readout bath

  std::vector<double> assemble(double theta) const;
};

QltSpectrum qlt_output_spectra(const SystemSpec& spec,
                               const DetectionConfig& det,
                               const std::vector<double>& omega_grid,
                               std::size_t readout_mode = 0);

// Symmetrised displacement spectrum of x = b + b^dag for one mechanical
// mode, same 1/2-per-quadrature convention as the detection estimators.
std::vector<double> qlt_mechanical_spectrum(
    const SystemSpec& spec, const std::vector<double>& omega_grid,
    std::size_t mech_mode = 0);

// Reference curve for the r-heterodyne comparison:
// S_aa+(Omega+w) + S_a+a(Omega-w) + S_a+a+(w) e^{2i theta} + S_aa(w) e^{-2i theta}.
std::vector<double> qlt_heterodyne_target(const SystemSpec& spec,
                                          const DetectionConfig& det,
                                          const std::vector<double>& omega_grid,
                                          std::size_t readout_mode = 0);

}  // namespace omsim
