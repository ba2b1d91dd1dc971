#include <doctest.h>
#include <cmath>
#include <stdexcept>
#include "spin_core.hpp"
#include "units.hpp"

using namespace mdd;

namespace {

HyperfineLevels paper_levels() {
  HyperfineLevels lv;
  lv.omega_hfs = angular(12.6428e9);
  lv.gyromagnetic = angular(14.0e9);  // rad/(s T)
  lv.quadratic_coeff = 0.0;
  return lv;
}

DriveSet mw_only() {
  DriveSet d;
  d.omega_mw = angular(25e3);
  d.nominal_field = 0.765e-3;
  return d;
}

} // namespace

TEST_SUITE("spin_core") {

TEST_CASE("zeeman splittings") {
  HyperfineLevels lv = paper_levels();
  auto [wp, wm] = zeeman_splittings(lv, 0.765e-3);
  CHECK(wp == doctest::Approx(angular(10.71e6)).epsilon(1e-12));
  CHECK(wm == wp);  // no quadratic term

  lv.quadratic_coeff = -9.741e10;  // rad/(s T^2)
  auto [wp2, wm2] = zeeman_splittings(lv, 0.765e-3);
  double quad = -9.741e10 * 0.765e-3 * 0.765e-3;
  CHECK(wp2 - wm2 == doctest::Approx(2.0 * quad).epsilon(1e-12));
  CHECK(wp2 + wm2 == doctest::Approx(2.0 * angular(10.71e6)).epsilon(1e-12));

  auto [zp, zm] = zeeman_splittings(lv, 0.0);
  CHECK(zp == 0.0);
  CHECK(zm == 0.0);
  CHECK_THROWS_AS(zeeman_splittings(lv, -1e-6), std::domain_error);
}

TEST_CASE("rotating-frame structure at a detuned field") {
  HyperfineLevels lv = paper_levels();
  DriveSet d = mw_only();
  d.omega_s = angular(10.0);
  d.phi_s = 0.3;
  // 0.05 uT above nominal at 14 GHz/T shifts both transitions by 700 Hz
  Mat4 h = build_rotating_hamiltonian(lv, d, 0.765e-3 + 0.05e-6, SegmentKind::signal);
  CHECK(std::real(h(kIdx0p, kIdx0p)) == 0.0);
  CHECK(std::real(h(kIdx0, kIdx0)) == 0.0);
  CHECK(std::real(h(kIdxM, kIdxM)) == doctest::Approx(-angular(700.0)).epsilon(1e-9));
  CHECK(std::real(h(kIdxP, kIdxP)) == doctest::Approx(+angular(700.0)).epsilon(1e-9));

  // both MW tones always on; drive amplitudes are flop rates, so the
  // matrix element carries half of each
  CHECK(std::abs(h(kIdxM, kIdx0p) - cplx(d.omega_mw / 2.0, 0.0)) < 1e-9);
  CHECK(std::abs(h(kIdxP, kIdx0p) - cplx(d.omega_mw / 2.0, 0.0)) < 1e-9);
  cplx want = 0.5 * d.omega_s * std::exp(cplx(0.0, -0.3));
  CHECK(std::abs(h(kIdxP, kIdx0) - want) < 1e-12);
  CHECK(std::abs(h(kIdx0, kIdxP) - std::conj(want)) < 1e-12);
  CHECK((h - h.adjoint()).norm() < 1e-15 * h.norm());

  Mat4 hf = build_rotating_hamiltonian(lv, d, 0.765e-3, SegmentKind::free_evolution);
  CHECK(std::abs(hf(kIdxP, kIdx0)) == 0.0);
  Mat4 hp = build_rotating_hamiltonian(lv, d, 0.765e-3, SegmentKind::pi_pulse);
  CHECK(std::abs(hp(kIdxP, kIdx0)) == 0.0);  // omega_pi defaults to zero
}

TEST_CASE("resonant spectrum splits into 0,0 and a symmetric pair") {
  HyperfineLevels lv = paper_levels();
  DriveSet d = mw_only();
  Mat4 h = build_rotating_hamiltonian(lv, d, d.nominal_field, SegmentKind::free_evolution);
  Eigen::SelfAdjointEigenSolver<Mat4> es(h);
  double g = d.omega_mw / std::sqrt(2.0);
  CHECK(es.eigenvalues()(0) == doctest::Approx(-g).epsilon(1e-12));
  CHECK(std::abs(es.eigenvalues()(1)) < 1e-12 * g);
  CHECK(std::abs(es.eigenvalues()(2)) < 1e-12 * g);
  CHECK(es.eigenvalues()(3) == doctest::Approx(+g).epsilon(1e-12));
}

TEST_CASE("dressed-basis transform") {
  const Mat4& u = dressed_basis_unitary();
  CHECK((u.adjoint() * u - Mat4::Identity()).norm() < 1e-15);

  // |+1> splits evenly over the dark and the two split states
  Vec4 bare_p = Vec4::Unit(kIdxP);
  Vec4 p1 = to_dressed_basis(bare_p);
  const double r2 = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(p1(0)) < 1e-15);
  CHECK(std::abs(p1(1) - cplx(r2, 0.0)) < 1e-14);
  CHECK(std::abs(p1(2) - cplx(0.5, 0.0)) < 1e-14);
  CHECK(std::abs(p1(3) - cplx(0.5, 0.0)) < 1e-14);

  HyperfineLevels lv = paper_levels();
  DriveSet d = mw_only();
  Mat4 h = build_rotating_hamiltonian(lv, d, d.nominal_field, SegmentKind::free_evolution);
  Mat4 hd = to_dressed_basis(h);
  double g = d.omega_mw / std::sqrt(2.0);
  Mat4 want = Mat4::Zero();
  want(2, 2) = +g;
  want(3, 3) = -g;
  CHECK((hd - want).norm() < 1e-12 * g);

  Vec4 s(cplx(0.1, 0.2), cplx(0.3, -0.1), cplx(0.5, 0.0), cplx(0.2, 0.7));
  CHECK((from_dressed_basis(to_dressed_basis(s)) - s).norm() < 1e-14);
  CHECK((from_dressed_basis(to_dressed_basis(h)) - h).norm() < 1e-14 * h.norm());
}

TEST_CASE("segment propagator basics") {
  HyperfineLevels lv = paper_levels();
  DriveSet d = mw_only();
  d.omega_s = angular(100.0);
  Mat4 h = build_rotating_hamiltonian(lv, d, d.nominal_field, SegmentKind::signal);

  CHECK((segment_propagator(h, 0.0) - Mat4::Identity()).norm() < 1e-15);
  CHECK_THROWS_AS(segment_propagator(h, -1.0), std::domain_error);

  Mat4 bad = h;
  bad(0, 1) += cplx(0.0, 1.0);
  CHECK_THROWS_AS(segment_propagator(bad, 1e-3), std::invalid_argument);

  Mat4 u1 = segment_propagator(h, 1.7e-3);
  CHECK((u1.adjoint() * u1 - Mat4::Identity()).norm() < 1e-14);

  Mat4 u2 = segment_propagator(h, 0.6e-3);
  Mat4 u3 = segment_propagator(h, 2.3e-3);
  CHECK((u2 * u1 - u3).norm() < 1e-12);
}

TEST_CASE("two-level oracle") {
  double w = angular(7.0);
  CHECK(ideal_two_level_population(w, 0.0) == 1.0);
  CHECK(ideal_two_level_population(w, pi / w) < 1e-28);
  CHECK(ideal_two_level_population(w, two_pi / w) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ideal_two_level_population(w, 0.5 * pi / w) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(ideal_two_level_population(w, -1.0), std::domain_error);
}

TEST_CASE("bare pair driven at W flops at rate W") {
  HyperfineLevels lv = paper_levels();
  DriveSet d;  // no dressing
  d.omega_s = angular(100.0);
  d.nominal_field = 0.765e-3;
  Mat4 h = build_rotating_hamiltonian(lv, d, d.nominal_field, SegmentKind::signal);
  Vec4 s = propagate_segment(Vec4::Unit(kIdx0), h, pi / d.omega_s);
  CHECK(std::norm(s(kIdxP)) == doctest::Approx(1.0).epsilon(1e-10));
  s = propagate_segment(Vec4::Unit(kIdx0), h, 0.5 * pi / d.omega_s);
  CHECK(std::norm(s(kIdxP)) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("dressed pair flops at the sqrt(2)-reduced rate") {
  HyperfineLevels lv = paper_levels();
  DriveSet d = mw_only();
  d.omega_s = angular(10.0);
  Mat4 h = build_rotating_hamiltonian(lv, d, d.nominal_field, SegmentKind::signal);
  double w0 = d.omega_s / std::sqrt(2.0);
  double period = two_pi / w0;
  double worst = 0.0;
  for (int k = 0; k <= 50; ++k) {
    double t = period * k / 50.0;
    Vec4 s = propagate_segment(Vec4::Unit(kIdx0), h, t);
    worst = std::max(worst,
                     std::abs(std::norm(s(kIdx0)) - ideal_two_level_population(w0, t)));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("echo pulse inverts the protected pair") {
  HyperfineLevels lv = paper_levels();
  DriveSet d = mw_only();
  d.omega_pi = std::sqrt(2.0) * pi / 6.3e-3;  // the 6.3 ms inversion
  Mat4 h = build_rotating_hamiltonian(lv, d, d.nominal_field, SegmentKind::pi_pulse);
  Vec4 s = propagate_segment(Vec4::Unit(kIdx0), h, 6.3e-3);
  CHECK(std::norm(s(kIdx0)) < 1e-3);
  Vec4 sd = to_dressed_basis(s);
  CHECK(std::norm(sd(1)) > 0.999);  // lands on the dark superposition
}

TEST_CASE("linear field shifts enter populations only at second order") {
  HyperfineLevels lv = paper_levels();
  DriveSet d = mw_only();
  d.omega_s = angular(10.0);
  double w0 = d.omega_s / std::sqrt(2.0);
  double t = 0.5 * pi / w0;  // max-slope point of the flop
  auto pop = [&](double db) {
    Mat4 h = build_rotating_hamiltonian(lv, d, d.nominal_field + db, SegmentKind::signal);
    Vec4 s = propagate_segment(Vec4::Unit(kIdx0), h, t);
    return std::norm(s(kIdx0));
  };
  double p0 = pop(0.0);
  double db1 = angular(50.0) / lv.gyromagnetic;  // 50 Hz linear shift
  double dev1 = std::abs(pop(db1) - p0);
  double dev2 = std::abs(pop(2.0 * db1) - p0);
  CHECK(dev1 < 1e-4);
  CHECK(dev2 / dev1 > 3.0);  // quadratic, not linear
  CHECK(dev2 / dev1 < 6.0);
}

TEST_CASE("lab-frame structure") {
  HyperfineLevels lv = paper_levels();
  DriveSet d = mw_only();
  d.omega_s = angular(25.0);
  d.phi_s = 0.3;
  double b = 0.765e-3 + 1e-7;
  auto [wp, wm] = zeeman_splittings(lv, b);
  Mat4 h = build_lab_frame_hamiltonian(lv, d, b, 0.0, 1, 0);
  CHECK(std::real(h(kIdx0p, kIdx0p)) == doctest::Approx(-lv.omega_hfs).epsilon(1e-15));
  CHECK(std::real(h(kIdx0, kIdx0)) == 0.0);
  CHECK(std::real(h(kIdxM, kIdxM)) == doctest::Approx(-wm).epsilon(1e-15));
  CHECK(std::real(h(kIdxP, kIdxP)) == doctest::Approx(+wp).epsilon(1e-15));
  // cosine drives start at full amplitude times cos(phase)
  CHECK(std::real(h(kIdxM, kIdx0p)) == doctest::Approx(d.omega_mw).epsilon(1e-12));
  CHECK(std::real(h(kIdxP, kIdx0)) ==
        doctest::Approx(d.omega_s * std::cos(0.3)).epsilon(1e-12));
  Mat4 hq = build_lab_frame_hamiltonian(lv, d, b, 0.0, 0, 0);
  CHECK(std::real(hq(kIdxP, kIdx0)) == 0.0);
  CHECK((h - h.adjoint()).norm() == 0.0);
}

} // TEST_SUITE
