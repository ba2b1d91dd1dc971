#include "spin_core.hpp"
#include <cmath>
#include <stdexcept>
#include "units.hpp"

namespace mdd {

using namespace std::complex_literals;

std::pair<double, double> zeeman_splittings(const HyperfineLevels& levels, double b) {
  if (b < 0.0) throw std::domain_error("field must be >= 0");
  double lin = levels.gyromagnetic * b;
  double quad = levels.quadratic_coeff * b * b;
  return {lin + quad, lin - quad};
}

Mat4 build_rotating_hamiltonian(const HyperfineLevels& levels, const DriveSet& drives,
                                double b_actual, SegmentKind kind) {
  auto [wp, wm] = zeeman_splittings(levels, b_actual);
  auto [wp0, wm0] = zeeman_splittings(levels, drives.nominal_field);

  Mat4 h = Mat4::Zero();
  h(kIdxM, kIdxM) = -(wm - wm0);
  h(kIdxP, kIdxP) = +(wp - wp0);

  cplx g_mw = drives.omega_mw / 2.0;
  h(kIdxM, kIdx0p) = g_mw;
  h(kIdx0p, kIdxM) = std::conj(g_mw);
  h(kIdxP, kIdx0p) = g_mw;
  h(kIdx0p, kIdxP) = std::conj(g_mw);

  double amp, phi;
  switch (kind) {
    case SegmentKind::signal:    amp = drives.omega_s;  phi = drives.phi_s;  break;
    case SegmentKind::pi_pulse:  amp = drives.omega_pi; phi = drives.phi_pi; break;
    case SegmentKind::free_evolution: amp = 0.0; phi = 0.0; break;
    default: throw std::invalid_argument("unknown segment kind");
  }
  if (amp != 0.0) {
    cplx g_rf = 0.5 * amp * std::exp(cplx(0.0, -phi));
    h(kIdxP, kIdx0) = g_rf;
    h(kIdx0, kIdxP) = std::conj(g_rf);
  }
  return h;
}

const Mat4& dressed_basis_unitary() {
  static const Mat4 u = [] {
    const double r2 = 1.0 / std::sqrt(2.0);
    Mat4 m = Mat4::Zero();
    // columns: |0>, |D> = (|+1>-|-1>)/sqrt2, |u>,|d> = (|B> +- |0'>)/sqrt2
    m(kIdx0, 0) = 1.0;
    m(kIdxM, 1) = -r2;
    m(kIdxP, 1) = +r2;
    m(kIdx0p, 2) = r2;
    m(kIdxM, 2) = 0.5;
    m(kIdxP, 2) = 0.5;
    m(kIdx0p, 3) = -r2;
    m(kIdxM, 3) = 0.5;
    m(kIdxP, 3) = 0.5;
    return m;
  }();
  return u;
}

Mat4 to_dressed_basis(const Mat4& m) {
  const Mat4& u = dressed_basis_unitary();
  return u.adjoint() * m * u;
}

Vec4 to_dressed_basis(const Vec4& s) { return dressed_basis_unitary().adjoint() * s; }

Mat4 from_dressed_basis(const Mat4& m) {
  const Mat4& u = dressed_basis_unitary();
  return u * m * u.adjoint();
}

Vec4 from_dressed_basis(const Vec4& s) { return dressed_basis_unitary() * s; }

namespace {

void require_hermitian(const Mat4& h) {
  double scale = h.norm();
  double dev = (h - h.adjoint()).norm();
  if (dev > 1e-12 * (scale > 0.0 ? scale : 1.0))
    throw std::invalid_argument("Hamiltonian is not Hermitian");
}

} // namespace

Mat4 segment_propagator(const Mat4& h, double dt) {
  if (dt < 0.0) throw std::domain_error("dt must be >= 0");
  require_hermitian(h);
  Eigen::SelfAdjointEigenSolver<Mat4> es(h);
  Eigen::Vector4cd phases;
  for (int k = 0; k < 4; ++k)
    phases(k) = std::exp(cplx(0.0, -es.eigenvalues()(k) * dt));
  Mat4 u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
  // one Newton-Schulz step toward the unitary manifold: the exact
  // exponential is unitary, and the eigenvector basis misses it by a
  // systematic ~1e-16 that would otherwise accumulate linearly over
  // long pulse trains
  return 0.5 * u * (3.0 * Mat4::Identity() - u.adjoint() * u);
}

Vec4 propagate_segment(const Vec4& s, const Mat4& h, double dt) {
  Vec4 out = segment_propagator(h, dt) * s;
  project_unit_norm(out);
  return out;
}

double ideal_two_level_population(double omega_0_eff, double t) {
  if (t < 0.0) throw std::domain_error("t must be >= 0");
  double c = std::cos(0.5 * omega_0_eff * t);
  return c * c;
}

Mat4 build_lab_frame_hamiltonian(const HyperfineLevels& levels, const DriveSet& drives,
                                 double b_actual, double t, int f1, int f2) {
  auto [wp, wm] = zeeman_splittings(levels, b_actual);
  auto [wp0, wm0] = zeeman_splittings(levels, drives.nominal_field);

  Mat4 h = Mat4::Zero();
  h(kIdx0p, kIdx0p) = -levels.omega_hfs;
  h(kIdxM, kIdxM) = -wm;
  h(kIdxP, kIdxP) = +wp;

  // drive frequencies locked to resonance at the nominal field
  double w_mw_minus = levels.omega_hfs - wm0;
  double w_mw_plus  = levels.omega_hfs + wp0;
  double w_rf = wp0;

  double mw = drives.omega_mw;
  h(kIdxM, kIdx0p) += mw * std::cos(w_mw_minus * t);
  h(kIdx0p, kIdxM) += mw * std::cos(w_mw_minus * t);
  h(kIdxP, kIdx0p) += mw * std::cos(w_mw_plus * t);
  h(kIdx0p, kIdxP) += mw * std::cos(w_mw_plus * t);

  double rf = 0.0;
  if (f1) rf += drives.omega_s * std::cos(w_rf * t + drives.phi_s);
  if (f2) rf += drives.omega_pi * std::cos(w_rf * t + drives.phi_pi);
  h(kIdxP, kIdx0) += rf;
  h(kIdx0, kIdxP) += rf;
  return h;
}

Vec4 integrate_lab_frame_direct(const HyperfineLevels& levels, const DriveSet& drives,
                                double b_actual, Vec4 s, double t_total, double dt,
                                int f1, int f2) {
  if (t_total < 0.0 || dt <= 0.0) throw std::domain_error("bad integration window");
  long n = static_cast<long>(std::ceil(t_total / dt));
  double h_step = t_total / static_cast<double>(n);
  for (long k = 0; k < n; ++k) {
    double t_mid = (static_cast<double>(k) + 0.5) * h_step;
    Mat4 h = build_lab_frame_hamiltonian(levels, drives, b_actual, t_mid, f1, f2);
    s = segment_propagator(h, h_step) * s;
  }
  return s;
}

Vec4 integrate_interaction_frame(const HyperfineLevels& levels, const DriveSet& drives,
                                 double b_actual, Vec4 s, double t_total, double dt,
                                 int f1, int f2) {
  if (t_total < 0.0 || dt <= 0.0) throw std::domain_error("bad integration window");
  auto [wp, wm] = zeeman_splittings(levels, b_actual);
  auto [wp0, wm0] = zeeman_splittings(levels, drives.nominal_field);
  double w_rf = wp0;

  Mat4 h_static = Mat4::Zero();
  h_static(kIdxM, kIdxM) = -(wm - wm0);
  h_static(kIdxP, kIdxP) = +(wp - wp0);
  cplx g_mw = drives.omega_mw / 2.0;
  h_static(kIdxM, kIdx0p) = g_mw;
  h_static(kIdx0p, kIdxM) = g_mw;
  h_static(kIdxP, kIdx0p) = g_mw;
  h_static(kIdx0p, kIdxP) = g_mw;

  // f1/f2 exclusivity is the caller's contract; f2 wins if both are set
  double amp = 0.0, phi = 0.0;
  if (f1) { amp = drives.omega_s; phi = drives.phi_s; }
  if (f2) { amp = drives.omega_pi; phi = drives.phi_pi; }

  long n = static_cast<long>(std::ceil(t_total / dt));
  double h_step = t_total / static_cast<double>(n);
  for (long k = 0; k < n; ++k) {
    double t_mid = (static_cast<double>(k) + 0.5) * h_step;
    Mat4 h = h_static;
    if (amp != 0.0) {
      // full cosine in the frame rotating at w_rf: co-rotating half plus
      // the counter-rotating half at 2 w_rf
      cplx g = 0.5 * amp * (std::exp(cplx(0.0, -phi)) +
                            std::exp(cplx(0.0, 2.0 * w_rf * t_mid + phi)));
      h(kIdxP, kIdx0) = g;
      h(kIdx0, kIdxP) = std::conj(g);
    }
    s = segment_propagator(h, h_step) * s;
  }
  return s;
}

} // namespace mdd
