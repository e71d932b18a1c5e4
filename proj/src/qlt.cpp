#include "omsim/qlt.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace omsim {

namespace {

constexpr cplx kImag{0.0, 1.0};

void require_qlt_applicable(const SystemSpec& spec) {
  if (spec.is_modulated())
    throw std::invalid_argument("qlt: modulated specs are not supported");
  if (spec.has_nonlinear())
    throw std::invalid_argument("qlt: nonlinear (g2 != 0) specs are not supported");
}

// Four spectral components of one complex observable, evaluated from the
// rows of G(w) = (i w I - A)^(-1), the Fourier convention matching the
// discrete estimators in detection.cpp. `direct_row`/`conj_row` are the
// transfer vectors of the observable and of its conjugate at +w and -w.
struct ComponentEvaluator {
  Eigen::MatrixXcd drift;
  std::vector<double> bath_weight;  // (n_k + 1/2) per mode
  std::vector<double> sqrt_rate;    // sqrt(kappa) / sqrt(gamma) per mode
  std::size_t obs_mode = 0;         // global mode index of the observable
  bool input_output = false;        // add the a_in delta term (output field)
  double out_rate = 0.0;            // kappa of the readout mode

  Eigen::MatrixXcd green(double w) const {
    const auto n = drift.rows();
    Eigen::MatrixXcd m = kImag * w * Eigen::MatrixXcd::Identity(n, n) - drift;
    return m.partialPivLu().inverse();
  }

  // Transfer coefficients from each noise channel into the observable (row
  // 2*obs_mode) and its conjugate (row 2*obs_mode+1).
  void rows(double w, Eigen::RowVectorXcd& t_dir, Eigen::RowVectorXcd& t_con) const {
    const Eigen::MatrixXcd g = green(w);
    const auto dim = drift.rows();
    const std::size_t pd = 2 * obs_mode, pc = 2 * obs_mode + 1;
    t_dir.resize(dim);
    t_con.resize(dim);
    const double so = std::sqrt(out_rate);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double sr = sqrt_rate[static_cast<std::size_t>(i) / 2];
      if (input_output) {
        t_dir(i) = -so * sr * g(pd, i);
        t_con(i) = -so * sr * g(pc, i);
      } else {
        t_dir(i) = sr * g(pd, i);
        t_con(i) = sr * g(pc, i);
      }
    }
    if (input_output) {
      t_dir(static_cast<Eigen::Index>(pd)) += 1.0;
      t_con(static_cast<Eigen::Index>(pc)) += 1.0;
    }
  }

  struct Components {
    double aa_dag, adag_a;
    cplx aa, adag_adag;
  };

  Components at(double w) const {
    Eigen::RowVectorXcd tp, tcp, tm, tcm;
    rows(w, tp, tcp);
    rows(-w, tm, tcm);
    cplx aa_dag{}, adag_a{}, aa{}, adag_adag{};
    for (std::size_t k = 0; 2 * k < static_cast<std::size_t>(drift.rows()); ++k) {
      const double wgt = 0.5 * bath_weight[k];
      const auto d = static_cast<Eigen::Index>(2 * k);
      aa_dag += wgt * (tp(d) * tcm(d + 1) + tp(d + 1) * tcm(d));
      adag_a += wgt * (tcp(d) * tm(d + 1) + tcp(d + 1) * tm(d));
      aa += wgt * (tp(d) * tm(d + 1) + tp(d + 1) * tm(d));
      adag_adag += wgt * (tcp(d) * tcm(d + 1) + tcp(d + 1) * tcm(d));
    }
    return {aa_dag.real(), adag_a.real(), aa, adag_adag};
  }
};

ComponentEvaluator make_evaluator(const SystemSpec& spec, std::size_t obs_mode,
                                  bool input_output) {
  require_qlt_applicable(spec);
  const auto violations = validate_spec(spec);
  if (!violations.empty())
    throw std::invalid_argument("qlt: invalid spec: " + violations.front().field +
                                " " + violations.front().message);

  ComponentEvaluator ev;
  ev.drift = drift_linear(spec, 0.0);
  const auto stab = stability_check(ev.drift);
  if (!stab.stable)
    throw std::runtime_error("qlt: drift matrix is not strictly stable; " +
                             stab.summary());

  for (const auto& o : spec.optical) {
    ev.bath_weight.push_back(o.n_occ + 0.5);
    ev.sqrt_rate.push_back(std::sqrt(o.kappa));
  }
  for (const auto& m : spec.mechanical) {
    ev.bath_weight.push_back(m.n_occ + 0.5);
    ev.sqrt_rate.push_back(std::sqrt(m.gamma));
  }
  ev.obs_mode = obs_mode;
  ev.input_output = input_output;
  ev.out_rate = input_output ? spec.optical[obs_mode].kappa : 0.0;
  return ev;
}

}  // namespace

std::string StabilityReport::summary() const {
  std::ostringstream os;
  os << (stable ? "stable" : "unstable") << ", max Re(lambda) = " << max_real_part
     << ", eigenvalues:";
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i)
    os << " (" << eigenvalues(i).real() << (eigenvalues(i).imag() < 0 ? "" : "+")
       << eigenvalues(i).imag() << "i)";
  return os.str();
}

StabilityReport stability_check(const Eigen::MatrixXcd& drift) {
  if (drift.rows() != drift.cols())
    throw std::invalid_argument("stability_check: matrix must be square");
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(drift, false);
  StabilityReport rep;
  rep.eigenvalues = solver.eigenvalues();
  rep.max_real_part = rep.eigenvalues.real().maxCoeff();
  rep.stable = rep.max_real_part < 0.0;
  return rep;
}

Eigen::MatrixXcd FrequencyResponse::transfer(double omega) const {
  const auto n = drift.rows();
  Eigen::MatrixXcd m =
      -kImag * omega * Eigen::MatrixXcd::Identity(n, n) - drift;
  return m.partialPivLu().inverse();
}

std::vector<double> QltSpectrum::assemble(double theta) const {
  std::vector<double> out(omega.size());
  const cplx rot = std::exp(cplx{0.0, -2.0 * theta});
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = s_aa_dag[i] + s_adag_a[i] + 2.0 * (rot * s_aa[i]).real();
  return out;
}

QltSpectrum qlt_output_spectra(const SystemSpec& spec,
                               const DetectionConfig& det,
                               const std::vector<double>& omega_grid,
                               std::size_t readout_mode) {
  if (readout_mode >= spec.optical.size())
    throw std::invalid_argument("qlt_output_spectra: readout mode out of range");
  const auto ev = make_evaluator(spec, readout_mode, true);

  QltSpectrum qs;
  qs.omega = omega_grid;
  qs.floor = spec.optical[readout_mode].n_occ + 0.5;
  qs.s_aa_dag.reserve(omega_grid.size());
  const cplx rot = std::exp(cplx{0.0, -2.0 * det.theta});
  for (double w : omega_grid) {
    const auto c = ev.at(w);
    qs.s_aa_dag.push_back(c.aa_dag);
    qs.s_adag_a.push_back(c.adag_a);
    qs.s_aa.push_back(c.aa);
    qs.s_adag_adag.push_back(c.adag_adag);
    const double corr = 2.0 * (rot * c.aa).real();
    qs.s_corr.push_back(corr);
    qs.s_x_theta.push_back(c.aa_dag + c.adag_a + corr);
  }
  return qs;
}

std::vector<double> qlt_mechanical_spectrum(
    const SystemSpec& spec, const std::vector<double>& omega_grid,
    std::size_t mech_mode) {
  if (mech_mode >= spec.mechanical.size())
    throw std::invalid_argument("qlt_mechanical_spectrum: mode out of range");
  const auto ev =
      make_evaluator(spec, spec.optical.size() + mech_mode, false);

  std::vector<double> out;
  out.reserve(omega_grid.size());
  for (double w : omega_grid) {
    const auto c = ev.at(w);
    out.push_back(c.aa_dag + c.adag_a + 2.0 * c.aa.real());
  }
  return out;
}

std::vector<double> qlt_heterodyne_target(const SystemSpec& spec,
                                          const DetectionConfig& det,
                                          const std::vector<double>& omega_grid,
                                          std::size_t readout_mode) {
  if (!(det.omega_het > 0.0))
    throw std::invalid_argument("qlt_heterodyne_target: omega_het must be > 0");
  const auto ev = make_evaluator(spec, readout_mode, true);

  std::vector<double> out;
  out.reserve(omega_grid.size());
  const cplx rot = std::exp(cplx{0.0, -2.0 * det.theta});
  for (double w : omega_grid) {
    const double incoh = ev.at(det.omega_het + w).aa_dag +
                         ev.at(det.omega_het - w).adag_a;
    const cplx aa = ev.at(w).aa;
    out.push_back(incoh + 2.0 * (rot * aa).real());
  }
  return out;
}

}  // namespace omsim
