#include <doctest.h>
#include <cmath>
#include <cstring>
#include "experiment.hpp"
#include "units.hpp"

using namespace mdd;

namespace {

RunSpec base_spec() {
  RunSpec spec;
  spec.levels.omega_hfs = angular(12.6428e9);
  spec.levels.gyromagnetic = angular(14.0e9);
  spec.levels.quadratic_coeff = 0.0;
  spec.drives.omega_mw = angular(25e3);
  spec.drives.omega_s = angular(1.0) * std::sqrt(2.0);  // flop at 2 pi x 1 Hz
  spec.drives.omega_pi = std::sqrt(2.0) * pi / 6.3e-3;
  spec.drives.nominal_field = 0.765e-3;
  spec.noise.b0 = 0.765e-3;
  spec.noise.sigma_b = 0.0;
  spec.noise.seed = 7;
  spec.shots_per_point = 1;
  return spec;
}

PopulationTrace synthetic_trace(double t2, double n, double omega, double span,
                                int points) {
  PopulationTrace tr;
  for (int i = 0; i <= points; ++i) {
    double t = span * i / points;
    tr.signal_time.push_back(t);
    double env = t > 0.0 ? std::exp(-std::pow(t / t2, n)) : 1.0;
    tr.p_mean.push_back(0.5 + 0.5 * env * std::cos(omega * t));
    tr.p_std.push_back(0.0);
  }
  return tr;
}

} // namespace

TEST_SUITE("experiment") {

TEST_CASE("trace grid follows the protocol") {
  RunSpec spec = base_spec();
  spec.protocol.method = Method::dressed;
  spec.protocol.t_s = 2.0;
  spec.samples_per_period = 40;
  auto td = trace_times(spec);
  CHECK(td.front() == 0.0);
  CHECK(td.back() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(td.size() >= 80);  // two 1 s flop periods at 40 per period

  spec.protocol.method = Method::mdd;
  spec.protocol.t_s = 20e-3;
  spec.protocol.n_cycles = 3;
  auto tm = trace_times(spec);
  REQUIRE(tm.size() == 7);
  for (int k = 0; k <= 6; ++k)
    CHECK(tm[k] == doctest::Approx(20e-3 * k).epsilon(1e-12));
}

TEST_CASE("trajectories are pure functions of their indices") {
  RunSpec spec = base_spec();
  spec.noise.sigma_b = 0.05e-6;
  spec.protocol.method = Method::dressed;
  spec.protocol.t_s = 1.0;
  auto a = simulate_trajectory(spec, 0, 3);
  auto b = simulate_trajectory(spec, 0, 3);
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  auto c = simulate_trajectory(spec, 0, 4);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_diff |= (a[i] != c[i]);
  CHECK(any_diff);
}

TEST_CASE("noiseless dressed run reproduces the two-level flop") {
  RunSpec spec = base_spec();
  spec.protocol.method = Method::dressed;
  spec.protocol.t_s = 2.0;
  double w0 = spec.drives.omega_s / std::sqrt(2.0);
  auto times = trace_times(spec);
  auto p = simulate_trajectory(spec, 0, 0);
  double worst = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i)
    worst = std::max(worst, std::abs(p[i] - ideal_two_level_population(w0, times[i])));
  CHECK(worst < 1e-3);

  spec.idealized_two_level = true;
  auto q = simulate_trajectory(spec, 0, 0);
  worst = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i)
    worst = std::max(worst, std::abs(q[i] - ideal_two_level_population(w0, times[i])));
  CHECK(worst < 1e-12);  // the reduction has no leakage channel at all
}

TEST_CASE("noiseless pulsed run lands on the same flop curve") {
  RunSpec spec = base_spec();
  spec.protocol.method = Method::mdd;
  spec.protocol.t_s = 20e-3;
  spec.protocol.n_cycles = 25;  // one second of signal time
  double w0 = spec.drives.omega_s / std::sqrt(2.0);
  auto times = trace_times(spec);
  auto p = simulate_trajectory(spec, 0, 0);
  double worst = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i)
    worst = std::max(worst, std::abs(p[i] - ideal_two_level_population(w0, times[i])));
  CHECK(worst < 1e-3);
}

TEST_CASE("ensemble average applies occupancy weights exactly") {
  RunSpec spec = base_spec();
  spec.protocol.method = Method::dressed;
  spec.protocol.t_s = 0.5;
  spec.levels.quadratic_coeff = -9.741e10;
  IonDisorder hot;
  hot.static_field_offset = 0.3e-6;
  spec.ensemble.ions = {IonDisorder{}, hot};
  spec.ensemble.weights = {0.25, 0.75};
  PopulationTrace tr = ensemble_average(spec);

  auto p0 = simulate_trajectory(spec, 0, 0);
  auto p1 = simulate_trajectory(spec, 1, 0);
  for (std::size_t i = 0; i < tr.p_mean.size(); ++i) {
    double want = 0.25 * p0[i] + 0.75 * p1[i];
    CHECK(tr.p_mean[i] == doctest::Approx(want).epsilon(1e-12));
    double var = 0.25 * p0[i] * p0[i] + 0.75 * p1[i] * p1[i] - want * want;
    CHECK(tr.p_std[i] ==
          doctest::Approx(std::sqrt(std::max(0.0, var))).epsilon(1e-9));
  }
}

TEST_CASE("worker count cannot change the numbers") {
  RunSpec spec = base_spec();
  spec.noise.sigma_b = 0.05e-6;
  spec.levels.quadratic_coeff = -9.741e10;
  spec.protocol.method = Method::dressed;
  spec.protocol.t_s = 0.5;
  spec.shots_per_point = 10;
  IonDisorder d1, d2, d3;
  d1.static_field_offset = 1e-7;
  d2.static_field_offset = -1e-7;
  d3.rf_amplitude_scale = 1.001;
  spec.ensemble.ions = {IonDisorder{}, d1, d2, d3};
  spec.ensemble.weights = {1.0, 1.0, 1.0, 1.0};

  spec.workers = 1;
  PopulationTrace a = ensemble_average(spec);
  spec.workers = 3;
  PopulationTrace b = ensemble_average(spec);
  REQUIRE(a.p_mean.size() == b.p_mean.size());
  CHECK(std::memcmp(a.p_mean.data(), b.p_mean.data(),
                    a.p_mean.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(a.p_std.data(), b.p_std.data(),
                    a.p_std.size() * sizeof(double)) == 0);
}

TEST_CASE("fit recovers synthetic decay parameters") {
  PopulationTrace tr = synthetic_trace(100.0, 2.0, two_pi, 300.0, 3000);
  ContrastFit fit = fit_contrast(tr, two_pi);
  CHECK(fit.t2 == doctest::Approx(100.0).epsilon(1e-4));
  CHECK(fit.stretch == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(fit.rabi_freq_fit == doctest::Approx(two_pi).epsilon(1e-6));
  CHECK_FALSE(fit.lower_bound);

  PopulationTrace mono = synthetic_trace(12.0, 1.0, two_pi, 80.0, 2000);
  ContrastFit f2 = fit_contrast(mono, two_pi);
  CHECK(f2.t2 == doctest::Approx(12.0).epsilon(1e-3));
  CHECK(f2.stretch == doctest::Approx(1.0).epsilon(2e-3));
}

TEST_CASE("undecayed traces are reported as lower bounds") {
  PopulationTrace tr = synthetic_trace(1e6, 2.0, two_pi, 20.0, 1000);
  ContrastFit fit = fit_contrast(tr, two_pi);
  CHECK(fit.lower_bound);
  CHECK(fit.t2 >= 20.0);
  CrossingEstimate cross = t2_crossing_hinted(tr, two_pi);
  CHECK(cross.lower_bound);
  CHECK(cross.t2 == doctest::Approx(20.0));
}

TEST_CASE("crossing estimator without a hint infers the period") {
  PopulationTrace tr = synthetic_trace(10.0, 1.0, two_pi, 60.0, 3000);
  CrossingEstimate c = t2_crossing(tr);
  CHECK_FALSE(c.lower_bound);
  CHECK(c.t2 == doctest::Approx(10.0).epsilon(0.10));
  CrossingEstimate ch = t2_crossing_hinted(tr, two_pi);
  CHECK(ch.t2 == doctest::Approx(10.0).epsilon(0.10));
}

TEST_CASE("crossing and fit agree on clean stretched decays") {
  for (double n : {1.0, 1.5, 2.5}) {
    CAPTURE(n);
    PopulationTrace tr = synthetic_trace(15.0, n, two_pi, 70.0, 3000);
    CrossingEstimate c = t2_crossing_hinted(tr, two_pi);
    ContrastFit f = fit_contrast(tr, two_pi);
    CHECK(std::abs(c.t2 - f.t2) / f.t2 < 0.20);
  }
}

TEST_CASE("pulse train echoes away a static second-order detuning") {
  RunSpec spec = base_spec();
  spec.levels.quadratic_coeff = -9.741e10;
  spec.drives.omega_s = angular(5.0) * std::sqrt(2.0);
  spec.drives.omega_pi = std::sqrt(2.0) * pi / 2e-3;  // fast 2 ms inversion
  IonDisorder shifted;
  shifted.static_field_offset = 0.4216e-6;  // ~10 Hz dressed-pair detuning
  spec.ensemble.ions = {shifted};
  spec.ensemble.weights = {1.0};

  spec.protocol.method = Method::dressed;
  spec.protocol.t_s = 1.0;
  auto pd = simulate_trajectory(spec, 0, 0);
  double min_d = 2.0;
  for (double p : pd) min_d = std::min(min_d, p);
  CHECK(min_d > 0.7);  // detuned flop barely leaves |0>

  spec.protocol.method = Method::mdd;
  spec.protocol.t_s = 20e-3;
  spec.protocol.t_pi = 2e-3;
  spec.protocol.n_cycles = 25;
  auto pm = simulate_trajectory(spec, 0, 0);
  double lo = 2.0, hi = -1.0;
  for (double p : pm) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  CHECK(hi - lo > 0.85);  // the echoed flop recovers nearly full contrast
}

TEST_CASE("quadrature signal component is filtered out") {
  RunSpec spec = base_spec();
  spec.protocol.method = Method::mdd;
  spec.protocol.t_s = 20e-3;
  spec.protocol.t_pi = 6.3e-3;
  auto curve = phase_scan({0.0, 0.5 * pi}, spec);
  REQUIRE(curve.size() == 2);
  CHECK(curve[0].second > 0.99);
  CHECK(curve[1].second < 0.05);
}

TEST_CASE("sensitivity is independent of the shot count and scales as 1/sqrt(N)") {
  ContrastFit fit;
  fit.t2 = 1.0;
  fit.stretch = 1.3;
  fit.rabi_freq_fit = angular(5.0);
  SensitivityReport a = sensitivity(fit, fit.rabi_freq_fit, 1.0, 100, 20e-3, 0.0);
  SensitivityReport b = sensitivity(fit, fit.rabi_freq_fit, 1.0, 40000, 20e-3, 0.0);
  CHECK(a.s == doctest::Approx(b.s).epsilon(1e-12));
  CHECK(a.optimal_time == doctest::Approx(b.optimal_time).epsilon(1e-12));

  SensitivityReport big = sensitivity(fit, fit.rabi_freq_fit, 1e4, 100, 20e-3, 0.0);
  CHECK(a.s / big.s == doctest::Approx(100.0).epsilon(1e-12));

  // field units via hbar/(sqrt(2) mu_B)
  CHECK(a.s_b == doctest::Approx(a.s * 8.0415e-12).epsilon(1e-4));

  // slower decay can only help
  ContrastFit better = fit;
  better.t2 = 10.0;
  CHECK(sensitivity(better, fit.rabi_freq_fit, 1.0, 100, 20e-3, 0.0).s < a.s);
}

TEST_CASE("adaptive span search settles once the decay is resolved") {
  RunSpec spec = base_spec();
  spec.levels.quadratic_coeff = -9.741e10;
  spec.noise.sigma_b = 0.2e-6;  // strong quadratic dephasing
  spec.protocol.method = Method::dressed;
  spec.protocol.t_s = 0.5;
  spec.shots_per_point = 48;
  double hint = spec.drives.omega_s / std::sqrt(2.0);
  T2Measurement m = measure_t2(spec, hint, 64.0);
  CHECK_FALSE(m.crossing.lower_bound);
  CHECK(m.fit.t2 > 0.01);
  CHECK(m.fit.t2 < 2.0);
  CHECK(m.trace.signal_time.back() >= 1.2 * m.crossing.t2);
}

TEST_CASE("ellipsoid sampling is uniform and in bounds") {
  std::array<double, 3> semi{0.05e-3, 0.075e-3, 0.725e-3};
  auto pos = ellipsoid_positions(4000, semi, 123);
  REQUIRE(pos.size() == 4000);
  double sx = 0, sz = 0, s2x = 0, s2z = 0;
  for (const auto& p : pos) {
    double u = 0.0;
    for (int d = 0; d < 3; ++d) u += p[d] * p[d] / (semi[d] * semi[d]);
    CHECK(u <= 1.0);
    sx += p[0];
    sz += p[2];
    s2x += p[0] * p[0];
    s2z += p[2] * p[2];
  }
  CHECK(std::abs(sx / 4000) < 3e-6);
  CHECK(std::abs(sz / 4000) < 3e-5);
  // uniform ellipsoid: rms per axis = semi-axis / sqrt(5)
  CHECK(std::sqrt(s2x / 4000) == doctest::Approx(semi[0] / std::sqrt(5.0)).epsilon(0.05));
  CHECK(std::sqrt(s2z / 4000) == doctest::Approx(semi[2] / std::sqrt(5.0)).epsilon(0.05));

  auto again = ellipsoid_positions(4000, semi, 123);
  CHECK(std::memcmp(pos.data(), again.data(), pos.size() * sizeof(pos[0])) == 0);
}

TEST_CASE("field-map ensemble carries the coil profile") {
  CoilPair pair;
  std::vector<std::array<double, 3>> pos = {{0.0, 0.0, 0.0},
                                            {0.0, 0.0, 0.725e-3}};
  EnsembleDef def = ensemble_from_map(pair, pos, true);
  REQUIRE(def.ions.size() == 2);
  CHECK(std::abs(def.ions[0].static_field_offset) < 1e-17);
  CHECK(def.ions[1].static_field_offset ==
        doctest::Approx(2.366e-4 * pair.b0).epsilon(0.05));
  CHECK(def.ions[1].rf_amplitude_scale == doctest::Approx(1.0 + 2.366e-4).epsilon(1e-4));
  EnsembleDef flat = ensemble_from_map(pair, pos, false);
  CHECK(flat.ions[1].rf_amplitude_scale == 1.0);
}

TEST_CASE("stratified subsample preserves occupancy weight") {
  std::array<double, 3> semi{0.05e-3, 0.075e-3, 0.725e-3};
  auto pos = ellipsoid_positions(2000, semi, 9);
  CoilPair pair;
  EnsembleDef full = ensemble_from_map(pair, pos, true);
  EnsembleDef sub = stratified_subsample(full, pos, 500, 10, 5, 42);
  CHECK(sub.ions.size() <= 500);
  CHECK(sub.ions.size() >= 300);  // most strata are populated
  double wsum = 0.0;
  for (double w : sub.weights) wsum += w;
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));

  EnsembleDef sub2 = stratified_subsample(full, pos, 500, 10, 5, 42);
  REQUIRE(sub2.ions.size() == sub.ions.size());
  CHECK(std::memcmp(sub.ions.data(), sub2.ions.data(),
                    sub.ions.size() * sizeof(sub.ions[0])) == 0);

  EnsembleDef all = stratified_subsample(full, pos, 5000, 10, 5, 42);
  CHECK(all.ions.size() == full.ions.size());
}

} // TEST_SUITE
