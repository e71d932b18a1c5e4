#include "omsim/detection.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace omsim {

namespace {

std::mutex g_fftw_mutex;

void fft_transform(std::vector<cplx>& data, int sign) {
  const int n = static_cast<int>(data.size());
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::scoped_lock lock(g_fftw_mutex);
    plan = fftw_plan_dft_1d(n, buf, buf, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::scoped_lock lock(g_fftw_mutex);
    fftw_destroy_plan(plan);
  }
}

void fft_forward(std::vector<cplx>& data) { fft_transform(data, FFTW_FORWARD); }

void fft_inverse(std::vector<cplx>& data) {
  fft_transform(data, FFTW_BACKWARD);
  const double inv = 1.0 / static_cast<double>(data.size());
  for (auto& z : data) z *= inv;
}

// Raw FFT bin k -> angular frequency, principal zone.
double bin_omega(std::size_t k, std::size_t m, double dt) {
  const double dw = 2.0 * std::numbers::pi / (static_cast<double>(m) * dt);
  const auto ks = static_cast<long long>(k);
  const auto ms = static_cast<long long>(m);
  return dw * static_cast<double>(2 * ks <= ms ? ks : ks - ms);
}

// Output ordering: ascending frequency, symmetric about DC. Even-length
// records drop the unpaired Nyquist bin.
std::vector<std::size_t> symmetric_order(std::size_t m) {
  std::vector<std::size_t> idx;
  if (m % 2 == 0) {
    idx.reserve(m - 1);
    for (std::size_t i = 0; i + 1 < m; ++i) idx.push_back((i + m / 2 + 1) % m);
  } else {
    idx.reserve(m);
    for (std::size_t i = 0; i < m; ++i) idx.push_back((i + (m + 1) / 2) % m);
  }
  return idx;
}

struct Accumulator {
  std::vector<double> mean, m2;
  std::size_t n = 0;
  explicit Accumulator(std::size_t bins) : mean(bins, 0.0), m2(bins, 0.0) {}
  void add(const std::vector<double>& sample) {
    ++n;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double d = sample[i] - mean[i];
      mean[i] += d / static_cast<double>(n);
      m2[i] += d * (sample[i] - mean[i]);
    }
  }
  std::vector<double> std_error() const {
    std::vector<double> se(mean.size(), 0.0);
    if (n > 1)
      for (std::size_t i = 0; i < se.size(); ++i)
        se[i] = std::sqrt(m2[i] / (static_cast<double>(n) *
                                   static_cast<double>(n - 1)));
    return se;
  }
};

Spectrum psd_impl(const std::vector<std::vector<cplx>>& traces, double dt,
                  const PsdOptions& opt) {
  if (traces.empty()) throw std::invalid_argument("psd: no traces");
  const std::size_t n_full = traces.front().size();
  for (const auto& tr : traces)
    if (tr.size() != n_full)
      throw std::invalid_argument("psd: traces have mismatched lengths");
  if (opt.welch_segments == 0 || n_full % opt.welch_segments != 0)
    throw std::invalid_argument("psd: segment count must divide trace length");
  const std::size_t m = n_full / opt.welch_segments;
  if (m < 2) throw std::invalid_argument("psd: segments too short");

  std::vector<double> window(m, 1.0);
  if (opt.hann_window) {
    for (std::size_t j = 0; j < m; ++j)
      window[j] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                       static_cast<double>(j) /
                                       static_cast<double>(m));
  }
  double wpow = 0.0;
  for (double w : window) wpow += w * w;
  wpow /= static_cast<double>(m);

  double scale = dt / (static_cast<double>(m) * wpow);
  if (opt.quadrature_convention) scale *= 0.5;
  if (opt.norm == SpectrumNorm::shot_noise_unit) scale /= opt.floor_value;

  Accumulator acc(m);
  std::vector<cplx> buf(m);
  std::vector<double> pgram(m);
  for (const auto& tr : traces) {
    for (std::size_t s = 0; s < opt.welch_segments; ++s) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = tr[s * m + j] * window[j];
      fft_forward(buf);
      for (std::size_t k = 0; k < m; ++k) pgram[k] = scale * std::norm(buf[k]);
      acc.add(pgram);
    }
  }

  const auto order = symmetric_order(m);
  Spectrum sp;
  sp.n_avg = acc.n;
  sp.norm = opt.norm;
  sp.omega.resize(order.size());
  sp.psd.resize(order.size());
  const auto se = acc.std_error();
  sp.std_err.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    sp.omega[i] = bin_omega(order[i], m, dt);
    sp.psd[i] = acc.mean[order[i]];
    sp.std_err[i] = se[order[i]];
  }
  return sp;
}

}  // namespace

std::size_t Spectrum::index_of(double w) const {
  const auto it = std::lower_bound(omega.begin(), omega.end(), w);
  if (it == omega.begin()) return 0;
  if (it == omega.end()) return omega.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - omega.begin());
  return (w - omega[hi - 1] <= omega[hi] - w) ? hi - 1 : hi;
}

double Spectrum::bin_width() const {
  return omega.size() > 1 ? omega[1] - omega[0] : 0.0;
}

std::vector<double> quadrature_of(std::span<const cplx> trace,
                                  std::span<const double> t,
                                  const DetectionConfig& det) {
  if (trace.size() != t.size())
    throw std::invalid_argument("quadrature_of: trace/time size mismatch");
  std::vector<double> x(trace.size());
  for (std::size_t j = 0; j < trace.size(); ++j) {
    const double phase = det.omega_het * t[j] + det.theta;
    x[j] = 2.0 * (trace[j] * std::exp(cplx{0.0, -phase})).real();
  }
  return x;
}

std::vector<double> quadrature_trace(const TrajectoryRecord& record,
                                     const DetectionConfig& det) {
  if (record.a_out.size() < 2)
    throw std::invalid_argument("quadrature_trace: record too short");
  return quadrature_of(record.a_out, record.t, det);
}

Spectrum psd(const std::vector<std::vector<cplx>>& traces, double dt,
             const PsdOptions& opt) {
  return psd_impl(traces, dt, opt);
}

Spectrum psd(const std::vector<std::vector<double>>& traces, double dt,
             const PsdOptions& opt) {
  std::vector<std::vector<cplx>> c(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i)
    c[i].assign(traces[i].begin(), traces[i].end());
  return psd_impl(c, dt, opt);
}

ComponentSpectra psd_components(const std::vector<std::vector<cplx>>& traces,
                                double dt) {
  if (traces.empty()) throw std::invalid_argument("psd_components: no traces");
  const std::size_t m = traces.front().size();
  for (const auto& tr : traces)
    if (tr.size() != m)
      throw std::invalid_argument("psd_components: mismatched lengths");

  const double scale = 0.5 * dt / static_cast<double>(m);
  std::vector<double> aa_dag(m, 0.0), adag_a(m, 0.0);
  std::vector<cplx> aa(m, cplx{0.0, 0.0});
  std::vector<cplx> buf(m);
  for (const auto& tr : traces) {
    buf.assign(tr.begin(), tr.end());
    fft_forward(buf);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t km = (m - k) % m;  // the -omega bin
      aa_dag[k] += scale * std::norm(buf[k]);
      adag_a[k] += scale * std::norm(buf[km]);
      aa[k] += scale * buf[k] * buf[km];
    }
  }
  const double inv = 1.0 / static_cast<double>(traces.size());

  const auto order = symmetric_order(m);
  ComponentSpectra cs;
  cs.n_avg = traces.size();
  cs.omega.resize(order.size());
  cs.s_aa_dag.resize(order.size());
  cs.s_adag_a.resize(order.size());
  cs.s_aa.resize(order.size());
  cs.s_adag_adag.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t k = order[i];
    cs.omega[i] = bin_omega(k, m, dt);
    cs.s_aa_dag[i] = aa_dag[k] * inv;
    cs.s_adag_a[i] = adag_a[k] * inv;
    cs.s_aa[i] = aa[k] * inv;
    cs.s_adag_adag[i] = std::conj(aa[k] * inv);
  }
  return cs;
}

std::vector<double> ComponentSpectra::assemble_quadrature(double theta) const {
  std::vector<double> out(omega.size());
  const cplx rot = std::exp(cplx{0.0, -2.0 * theta});
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = s_aa_dag[i] + s_adag_a[i] + 2.0 * (rot * s_aa[i]).real();
  return out;
}

std::vector<cplx> r_heterodyne_filter(std::span<const double> het_trace,
                                      std::span<const double> t,
                                      double omega_het,
                                      const FilterSpec& filter) {
  if (!(omega_het > 0.0))
    throw std::invalid_argument("r_heterodyne_filter: omega_het must be > 0");
  if (!(filter.lowpass_cutoff > 0.0) || filter.lowpass_cutoff >= omega_het)
    throw std::invalid_argument(
        "r_heterodyne_filter: cutoff must satisfy 0 < cutoff < omega_het");
  if (het_trace.size() != t.size() || het_trace.size() < 2)
    throw std::invalid_argument("r_heterodyne_filter: bad trace");

  const std::size_t m = het_trace.size();
  const double dt = t[1] - t[0];

  // Band-pass around +-omega_het; removes the baseband originals and the
  // 2*Omega demodulation images in one pass.
  std::vector<cplx> buf(m);
  for (std::size_t j = 0; j < m; ++j) buf[j] = het_trace[j];
  fft_forward(buf);
  for (std::size_t k = 0; k < m; ++k) {
    const double w = std::abs(bin_omega(k, m, dt));
    if (std::abs(w - omega_het) > filter.lowpass_cutoff) buf[k] = 0.0;
  }
  fft_inverse(buf);

  // Demodulate and low-pass to baseband.
  for (std::size_t j = 0; j < m; ++j)
    buf[j] *= std::exp(cplx{0.0, omega_het * t[j] + filter.demod_phase});
  fft_forward(buf);
  for (std::size_t k = 0; k < m; ++k)
    if (std::abs(bin_omega(k, m, dt)) > filter.lowpass_cutoff) buf[k] = 0.0;
  fft_inverse(buf);
  return buf;
}

Spectrum filtered_psd(const std::vector<std::vector<cplx>>& baseband_traces,
                      double dt, double lowpass_cutoff, const PsdOptions& opt,
                      double image_floor) {
  std::vector<std::vector<double>> real_traces(baseband_traces.size());
  for (std::size_t i = 0; i < baseband_traces.size(); ++i) {
    real_traces[i].resize(baseband_traces[i].size());
    for (std::size_t j = 0; j < baseband_traces[i].size(); ++j)
      real_traces[i][j] = 2.0 * baseband_traces[i][j].real();
  }
  PsdOptions o = opt;
  o.quadrature_convention = true;
  Spectrum full = psd(real_traces, dt, o);

  Spectrum sp;
  sp.n_avg = full.n_avg;
  sp.norm = full.norm;
  for (std::size_t i = 0; i < full.omega.size(); ++i) {
    if (std::abs(full.omega[i]) <= lowpass_cutoff) {
      sp.omega.push_back(full.omega[i]);
      sp.psd.push_back(full.psd[i] - image_floor);
      sp.std_err.push_back(full.std_err[i]);
    }
  }
  return sp;
}

Spectrum fold_one_sided(const Spectrum& two_sided) {
  Spectrum sp;
  sp.n_avg = two_sided.n_avg;
  sp.norm = two_sided.norm;
  for (std::size_t i = 0; i < two_sided.omega.size(); ++i) {
    const double w = two_sided.omega[i];
    if (w < 0.0) continue;
    if (w == 0.0) {
      sp.omega.push_back(0.0);
      sp.psd.push_back(two_sided.psd[i]);
      sp.std_err.push_back(two_sided.std_err[i]);
      continue;
    }
    const std::size_t j = two_sided.index_of(-w);
    sp.omega.push_back(w);
    sp.psd.push_back(two_sided.psd[i] + two_sided.psd[j]);
    sp.std_err.push_back(std::sqrt(two_sided.std_err[i] * two_sided.std_err[i] +
                                   two_sided.std_err[j] * two_sided.std_err[j]));
  }
  return sp;
}

void write_spectrum_csv(const Spectrum& spectrum, const std::string& path,
                        double omega_ref) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("write_spectrum_csv: cannot open " + path);
  std::fprintf(f, "# norm=%s omega_ref=%.12g\n",
               spectrum.norm == SpectrumNorm::shot_noise_unit ? "shot-noise-unit"
                                                              : "raw",
               omega_ref);
  std::fprintf(f, "omega,psd,n_avg\n");
  for (std::size_t i = 0; i < spectrum.omega.size(); ++i)
    std::fprintf(f, "%.12g,%.12g,%zu\n", spectrum.omega[i] / omega_ref,
                 spectrum.psd[i], spectrum.n_avg);
  std::fclose(f);
}

}  // namespace omsim
