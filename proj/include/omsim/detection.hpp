#pragma once

#include <span>
#include <string>
#include <vector>

#include "omsim/model.hpp"
#include "omsim/propagator.hpp"

namespace omsim {

// Local-oscillator settings. omega_het = 0 selects homodyne detection.
struct DetectionConfig {
  double theta = 0.0;
  double omega_het = 0.0;
};

enum class SpectrumNorm { raw, shot_noise_unit };

// Two-sided spectrum on a symmetric angular-frequency grid (the unpaired
// Nyquist bin of even-length records is dropped, DC sits at the centre).
struct Spectrum {
  std::vector<double> omega;
  std::vector<double> psd;
  std::vector<double> std_err;  // per-bin standard error of the mean
  std::size_t n_avg = 0;
  SpectrumNorm norm = SpectrumNorm::raw;

  std::size_t index_of(double w) const;  // nearest bin
  double bin_width() const;
};

struct FilterKind {
  enum Value { none, r_heterodyne };
};

struct FilterSpec {
  FilterKind::Value kind = FilterKind::none;
  double demod_phase = 0.0;
  double lowpass_cutoff = 0.0;  // angular frequency, must stay below omega_het
};

struct PsdOptions {
  SpectrumNorm norm = SpectrumNorm::raw;
  // Raw floor used for shot-noise-unit rescaling (n_p + 1/2 of the
  // readout bath in the conventions used throughout).
  double floor_value = 0.5;
  // Real-valued quadrature traces carry a factor 1/2 so that the
  // decoupled-cavity floor sits at n_p + 1/2, matching the analytic side.
  bool quadrature_convention = false;
  std::size_t welch_segments = 1;
  bool hann_window = false;
};

// X_theta(t_j) built from the recorded output field against the reference
// oscillator exp(-i(Omega t + theta)); real by construction.
std::vector<double> quadrature_trace(const TrajectoryRecord& record,
                                     const DetectionConfig& det);

// Same rotation applied to an arbitrary complex trace with its time axis.
std::vector<double> quadrature_of(std::span<const cplx> trace,
                                  std::span<const double> t,
                                  const DetectionConfig& det);

// Trajectory-averaged periodogram. All traces must share one length.
// Density convention: a white complex sequence of variance s^2 has a flat
// two-sided density s^2 * dt; bins integrate against df = dw / (2 pi).
Spectrum psd(const std::vector<std::vector<cplx>>& traces, double dt,
             const PsdOptions& opt = {});
Spectrum psd(const std::vector<std::vector<double>>& traces, double dt,
             const PsdOptions& opt = {});

// Cross-periodograms of the output field with itself and its conjugate.
// s_aa_dag/s_adag_a are real and nonnegative; s_aa and s_adag_adag form a
// conjugate pair; the four reassemble the quadrature PSD bin by bin.
struct ComponentSpectra {
  std::vector<double> omega;
  std::vector<double> s_aa_dag;
  std::vector<double> s_adag_a;
  std::vector<cplx> s_aa;
  std::vector<cplx> s_adag_adag;
  std::size_t n_avg = 0;

  std::vector<double> assemble_quadrature(double theta) const;
};

ComponentSpectra psd_components(const std::vector<std::vector<cplx>>& traces,
                                double dt);

// Recovers a baseband complex trace carrying homodyne-like correlations
// from a real heterodyne quadrature trace: brick-wall band-pass around
// +-Omega, demodulation by exp(+i(Omega t + demod_phase)), brick-wall
// low-pass at the cutoff. A pure input tone 2cos(Omega t) maps to 1.
std::vector<cplx> r_heterodyne_filter(std::span<const double> het_trace,
                                      std::span<const double> t,
                                      double omega_het,
                                      const FilterSpec& filter);

// Spectrum of the filtered trace: quadrature PSD of z + z* at phase 0,
// restricted to |omega| below the filter cutoff. Demodulating the real
// trace folds the white floor of the far band at 2*Omega into baseband;
// that image contribution is exactly flat at the bath floor (n_p + 1/2)
// whenever the image band is feature-free, and `image_floor` subtracts it.
Spectrum filtered_psd(const std::vector<std::vector<cplx>>& baseband_traces,
                      double dt, double lowpass_cutoff,
                      const PsdOptions& opt = {}, double image_floor = 0.0);

// Folds the two-sided spectrum onto positive frequencies, S(w) + S(-w);
// the DC bin is kept as is.
Spectrum fold_one_sided(const Spectrum& two_sided);

void write_spectrum_csv(const Spectrum& spectrum, const std::string& path,
                        double omega_ref = 1.0);

}  // namespace omsim
