#include "experiment.hpp"
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <gsl/gsl_blas.h>
#include <gsl/gsl_multifit_nlinear.h>
#include <gsl/gsl_vector.h>
#include <omp.h>
#include "rng.hpp"
#include "units.hpp"

namespace mdd {

namespace {

constexpr std::uint64_t kEllipsoidStream = 0x21;
constexpr std::uint64_t kStrataStream = 0x22;
constexpr double kInvE = 0.36787944117144233;

double effective_rabi(const RunSpec& spec) {
  return spec.drives.omega_s / std::sqrt(2.0);
}

// dressed-qubit detuning of |D> relative to |0>: the symmetric linear
// Zeeman part cancels, the quadratic asymmetry survives in full
double dressed_detuning(const HyperfineLevels& levels, double b, double b0) {
  return levels.quadratic_coeff * (b * b - b0 * b0);
}

} // namespace

EnsembleDef EnsembleDef::center_ion() {
  EnsembleDef def;
  def.ions.push_back(IonDisorder{});
  def.weights.push_back(1.0);
  return def;
}

std::vector<std::array<double, 3>> ellipsoid_positions(
    int n, const std::array<double, 3>& semi_axes, std::uint64_t seed) {
  std::vector<std::array<double, 3>> pos(n);
  for (int i = 0; i < n; ++i) {
    std::uint64_t sub = 0;
    for (;;) {
      double x = 2.0 * uniform01(seed, kEllipsoidStream, i, 3 * sub + 0) - 1.0;
      double y = 2.0 * uniform01(seed, kEllipsoidStream, i, 3 * sub + 1) - 1.0;
      double z = 2.0 * uniform01(seed, kEllipsoidStream, i, 3 * sub + 2) - 1.0;
      if (x * x + y * y + z * z <= 1.0) {
        pos[i] = {semi_axes[0] * x, semi_axes[1] * y, semi_axes[2] * z};
        break;
      }
      ++sub;
    }
  }
  return pos;
}

EnsembleDef ensemble_from_map(const CoilPair& pair,
                              const std::vector<std::array<double, 3>>& positions,
                              bool rf_scale_from_field) {
  EnsembleDef def;
  const int n = static_cast<int>(positions.size());
  def.ions.resize(n);
  def.weights.assign(n, 1.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    double frac = coil_pair_field(pair, positions[i])[2] / pair.b0 - 1.0;
    IonDisorder d;
    d.static_field_offset = frac * pair.b0;
    d.rf_amplitude_scale = rf_scale_from_field ? 1.0 + frac : 1.0;
    d.mw_amplitude_scale = 1.0;
    def.ions[i] = d;
  }
  return def;
}

EnsembleDef stratified_subsample(const EnsembleDef& full,
                                 const std::vector<std::array<double, 3>>& positions,
                                 int k, int n_axial, int n_radial, std::uint64_t seed) {
  const int n = static_cast<int>(full.ions.size());
  if (n != static_cast<int>(positions.size()))
    throw std::invalid_argument("positions/ensemble size mismatch");
  if (k >= n) return full;

  double z_lo = positions[0][2], z_hi = z_lo, r_hi = 0.0;
  for (const auto& p : positions) {
    z_lo = std::min(z_lo, p[2]);
    z_hi = std::max(z_hi, p[2]);
    r_hi = std::max(r_hi, std::hypot(p[0], p[1]));
  }
  double dz = (z_hi - z_lo) / n_axial;
  double dr = r_hi / n_radial;

  std::vector<std::vector<int>> strata(static_cast<std::size_t>(n_axial) * n_radial);
  for (int i = 0; i < n; ++i) {
    int iz = std::min(n_axial - 1, static_cast<int>((positions[i][2] - z_lo) / dz));
    int ir = std::min(n_radial - 1,
                      static_cast<int>(std::hypot(positions[i][0], positions[i][1]) / dr));
    strata[static_cast<std::size_t>(iz) * n_radial + ir].push_back(i);
  }

  int per_stratum = std::max(1, k / (n_axial * n_radial));
  EnsembleDef sub;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    auto& members = strata[s];
    if (members.empty()) continue;
    int take = std::min<int>(per_stratum, static_cast<int>(members.size()));
    // partial Fisher-Yates with counter-based draws
    for (int j = 0; j < take; ++j) {
      int left = static_cast<int>(members.size()) - j;
      int pick = j + static_cast<int>(uniform01(seed, kStrataStream, s, j) * left);
      pick = std::min(pick, static_cast<int>(members.size()) - 1);
      std::swap(members[j], members[pick]);
    }
    double stratum_weight = static_cast<double>(members.size()) / n;
    for (int j = 0; j < take; ++j) {
      sub.ions.push_back(full.ions[members[j]]);
      sub.weights.push_back(stratum_weight / take);
    }
  }
  return sub;
}

std::vector<double> trace_times(const RunSpec& spec) {
  std::vector<double> t;
  if (spec.protocol.method == Method::dressed) {
    double span = spec.protocol.t_s;
    // Strongly detuned shots flop at sqrt(omega0^2 + q^2), not omega0;
    // sample densely enough to resolve the 3-sigma tail of the detuning
    // distribution or the overdamped contrast collapse is invisible.
    double sigma_q = std::abs(2.0 * spec.levels.quadratic_coeff *
                              spec.drives.nominal_field * spec.noise.sigma_b);
    double omega_fast = std::hypot(effective_rabi(spec), 3.0 * sigma_q);
    double period = two_pi / omega_fast;
    int n = std::max(8, static_cast<int>(std::ceil(spec.samples_per_period * span / period)));
    t.resize(n + 1);
    for (int i = 0; i <= n; ++i) t[i] = span * i / n;
  } else {
    int n = spec.protocol.n_cycles;
    t.resize(2 * n + 1);
    for (int i = 0; i <= 2 * n; ++i) t[i] = spec.protocol.t_s * i;
  }
  return t;
}

namespace {

DriveSet scaled_drives(const RunSpec& spec, const ComposedField& f) {
  DriveSet d = spec.drives;
  d.omega_mw *= f.mw_scale;
  d.omega_s *= f.rf_scale;
  d.omega_pi *= f.rf_scale;
  d.phi_s = spec.protocol.phi_s;
  d.phi_pi = spec.protocol.phi_pi;
  return d;
}

// 2x2 reduction onto {|0>, |D>}: couplings divided by sqrt(2), detuning
// equal to the quadratic Zeeman asymmetry; no leakage channel exists
Eigen::Matrix2cd two_level_hamiltonian(const RunSpec& spec, const DriveSet& d,
                                       double b_eff, SegmentKind kind) {
  double q = dressed_detuning(spec.levels, b_eff, d.nominal_field);
  double amp = 0.0, phi = 0.0;
  if (kind == SegmentKind::signal) { amp = d.omega_s; phi = d.phi_s; }
  if (kind == SegmentKind::pi_pulse) { amp = d.omega_pi; phi = d.phi_pi; }
  Eigen::Matrix2cd h;
  cplx g = 0.5 * (amp / std::sqrt(2.0)) * std::exp(cplx(0.0, -phi));
  h << 0.0, std::conj(g), g, q;
  return h;
}

Eigen::Matrix2cd propagator2(const Eigen::Matrix2cd& h, double dt) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(h);
  Eigen::Vector2cd ph;
  for (int k = 0; k < 2; ++k)
    ph(k) = std::exp(cplx(0.0, -es.eigenvalues()(k) * dt));
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

void trajectory_into(const RunSpec& spec, int ion_index, int shot_index,
                     const std::vector<double>& times, std::vector<double>& out) {
  const IonDisorder& ion = spec.ensemble.ions.at(ion_index);
  ComposedField f =
      compose_ion_field(sample_shot_field(spec.noise, shot_index), ion);
  DriveSet d = scaled_drives(spec, f);
  out.resize(times.size());

  if (spec.protocol.method == Method::dressed) {
    if (spec.idealized_two_level) {
      Eigen::Matrix2cd h = two_level_hamiltonian(spec, d, f.b_eff, SegmentKind::signal);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(h);
      Eigen::Vector2cd c0 = es.eigenvectors().adjoint() * Eigen::Vector2cd(1.0, 0.0);
      for (std::size_t j = 0; j < times.size(); ++j) {
        cplx a = 0.0;
        for (int k = 0; k < 2; ++k)
          a += es.eigenvectors()(0, k) * std::exp(cplx(0.0, -es.eigenvalues()(k) * times[j])) * c0(k);
        out[j] = std::norm(a);
      }
    } else {
      Mat4 h = build_rotating_hamiltonian(spec.levels, d, f.b_eff, SegmentKind::signal);
      Eigen::SelfAdjointEigenSolver<Mat4> es(h);
      Vec4 c0 = es.eigenvectors().adjoint() * Vec4::Unit(kIdx0);
      for (std::size_t j = 0; j < times.size(); ++j) {
        cplx a = 0.0;
        for (int k = 0; k < 4; ++k)
          a += es.eigenvectors()(kIdx0, k) * std::exp(cplx(0.0, -es.eigenvalues()(k) * times[j])) * c0(k);
        out[j] = std::norm(a);
      }
    }
    return;
  }

  // pulsed protocol: per cycle apply U_s (record) then U_pi U_s U_pi
  // (record). Populations are only taken where the echo is closed: after
  // the odd evolution and after the full cycle.
  const double t_s = spec.protocol.t_s;
  const double t_pi = spec.protocol.t_pi;
  const int n_cycles = spec.protocol.n_cycles;
  if (spec.idealized_two_level) {
    Eigen::Matrix2cd u_s = propagator2(two_level_hamiltonian(spec, d, f.b_eff, SegmentKind::signal), t_s);
    Eigen::Matrix2cd u_pi = propagator2(two_level_hamiltonian(spec, d, f.b_eff, SegmentKind::pi_pulse), t_pi);
    Eigen::Matrix2cd m2 = u_pi * u_s * u_pi;
    Eigen::Vector2cd psi(1.0, 0.0);
    out[0] = 1.0;
    for (int c = 0; c < n_cycles; ++c) {
      psi = u_s * psi;
      project_unit_norm(psi);
      out[2 * c + 1] = std::norm(psi(0));
      psi = m2 * psi;
      project_unit_norm(psi);
      out[2 * c + 2] = std::norm(psi(0));
    }
  } else {
    Mat4 u_s = segment_propagator(
        build_rotating_hamiltonian(spec.levels, d, f.b_eff, SegmentKind::signal), t_s);
    Mat4 u_pi = segment_propagator(
        build_rotating_hamiltonian(spec.levels, d, f.b_eff, SegmentKind::pi_pulse), t_pi);
    Mat4 m2 = u_pi * u_s * u_pi;
    Vec4 psi = Vec4::Unit(kIdx0);
    out[0] = 1.0;
    for (int c = 0; c < n_cycles; ++c) {
      psi = u_s * psi;
      project_unit_norm(psi);
      out[2 * c + 1] = std::norm(psi(kIdx0));
      psi = m2 * psi;
      project_unit_norm(psi);
      out[2 * c + 2] = std::norm(psi(kIdx0));
    }
  }
}

} // namespace

std::vector<double> simulate_trajectory(const RunSpec& spec, int ion_index,
                                        int shot_index) {
  std::vector<double> out;
  trajectory_into(spec, ion_index, shot_index, trace_times(spec), out);
  return out;
}

PopulationTrace ensemble_average(const RunSpec& spec) {
  const std::vector<double> times = trace_times(spec);
  const int n_ions = static_cast<int>(spec.ensemble.ions.size());
  const int shots = spec.shots_per_point;
  if (n_ions < 1 || shots < 1) throw std::invalid_argument("empty run");
  const std::size_t n_t = times.size();

  double w_total = std::accumulate(spec.ensemble.weights.begin(),
                                   spec.ensemble.weights.end(), 0.0);
  if (!(w_total > 0.0)) throw std::invalid_argument("weights must sum > 0");

  // per-ion accumulators so the merge order is fixed regardless of how
  // ions are scheduled over workers
  std::vector<double> sum(static_cast<std::size_t>(n_ions) * n_t, 0.0);
  std::vector<double> sum2(static_cast<std::size_t>(n_ions) * n_t, 0.0);
  int threads = spec.workers > 0 ? spec.workers : omp_get_max_threads();

#pragma omp parallel num_threads(threads)
  {
    std::vector<double> p;
#pragma omp for schedule(dynamic)
    for (int i = 0; i < n_ions; ++i) {
      double* s1 = sum.data() + static_cast<std::size_t>(i) * n_t;
      double* s2 = sum2.data() + static_cast<std::size_t>(i) * n_t;
      for (int s = 0; s < shots; ++s) {
        trajectory_into(spec, i, s, times, p);
        for (std::size_t j = 0; j < n_t; ++j) {
          s1[j] += p[j];
          s2[j] += p[j] * p[j];
        }
      }
    }
  }

  PopulationTrace trace;
  trace.signal_time = times;
  trace.p_mean.assign(n_t, 0.0);
  trace.p_std.assign(n_t, 0.0);
  for (int i = 0; i < n_ions; ++i) {
    double w = spec.ensemble.weights[i] / w_total;
    const double* s1 = sum.data() + static_cast<std::size_t>(i) * n_t;
    const double* s2 = sum2.data() + static_cast<std::size_t>(i) * n_t;
    for (std::size_t j = 0; j < n_t; ++j) {
      trace.p_mean[j] += w * s1[j] / shots;
      trace.p_std[j] += w * s2[j] / shots;
    }
  }
  for (std::size_t j = 0; j < n_t; ++j) {
    double var = trace.p_std[j] - trace.p_mean[j] * trace.p_mean[j];
    trace.p_std[j] = std::sqrt(std::max(0.0, var));
  }
  return trace;
}

namespace {

struct EnvelopePoint {
  double t;
  double contrast;
};

std::vector<EnvelopePoint> contrast_envelope(const PopulationTrace& trace,
                                             double window) {
  std::vector<EnvelopePoint> env;
  const auto& t = trace.signal_time;
  const auto& p = trace.p_mean;
  if (t.empty()) return env;
  double span = t.back();
  double step = 0.5 * window;
  std::size_t lo = 0;
  for (int k = 0;; ++k) {
    double t0 = k * step;
    double t1 = t0 + window;
    if (t1 > span * (1.0 + 1e-12)) break;
    while (lo < t.size() && t[lo] < t0) ++lo;
    std::size_t hi = lo;
    double pmin = 2.0, pmax = -1.0;
    int count = 0;
    while (hi < t.size() && t[hi] < t1) {
      pmin = std::min(pmin, p[hi]);
      pmax = std::max(pmax, p[hi]);
      ++count;
      ++hi;
    }
    if (count >= 3) env.push_back({t0 + 0.5 * window, pmax - pmin});
  }
  return env;
}

CrossingEstimate crossing_from_envelope(const std::vector<EnvelopePoint>& env,
                                        double span) {
  CrossingEstimate est;
  if (env.empty()) {
    est.t2 = span;
    est.lower_bound = true;
    return est;
  }
  for (std::size_t k = 0; k < env.size(); ++k) {
    if (env[k].contrast < kInvE) {
      if (k == 0) {
        est.t2 = env[0].t;
      } else {
        double c0 = env[k - 1].contrast, c1 = env[k].contrast;
        double f = (c0 - kInvE) / (c0 - c1);
        est.t2 = env[k - 1].t + f * (env[k].t - env[k - 1].t);
      }
      return est;
    }
  }
  est.t2 = span;
  est.lower_bound = true;
  return est;
}

// Overdamped traces lose their contrast inside the very first window,
// which would clamp the estimate to that window's center time; halving
// the window until the first point resolves keeps the crossing
// interpolable. The floor of ~8 samples per window keeps the peak-trough
// contrast meaningful against shot noise.
CrossingEstimate crossing_refined(const PopulationTrace& trace, double window) {
  const auto& t = trace.signal_time;
  double span = t.empty() ? 0.0 : t.back();
  double dt = t.size() > 1 ? span / static_cast<double>(t.size() - 1) : 0.0;
  for (;;) {
    auto env = contrast_envelope(trace, window);
    CrossingEstimate est = crossing_from_envelope(env, span);
    bool clamped = !env.empty() && !est.lower_bound &&
                   est.t2 <= env.front().t * (1.0 + 1e-12);
    if (!clamped || window <= 8.0 * dt) return est;
    window *= 0.5;
  }
}

double infer_period(const PopulationTrace& trace) {
  const auto& t = trace.signal_time;
  const auto& p = trace.p_mean;
  std::vector<double> crossings;
  for (std::size_t i = 1; i < t.size(); ++i) {
    double a = p[i - 1] - 0.5, b = p[i] - 0.5;
    if ((a > 0.0 && b <= 0.0) || (a < 0.0 && b >= 0.0))
      crossings.push_back(t[i - 1] + (t[i] - t[i - 1]) * a / (a - b));
  }
  if (crossings.size() < 3) return 0.0;
  std::vector<double> gaps;
  for (std::size_t i = 1; i < crossings.size(); ++i)
    gaps.push_back(crossings[i] - crossings[i - 1]);
  std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
  return 2.0 * gaps[gaps.size() / 2];
}

} // namespace

CrossingEstimate t2_crossing_hinted(const PopulationTrace& trace, double omega_0_hint) {
  if (omega_0_hint <= 0.0) throw std::domain_error("hint must be > 0");
  return crossing_refined(trace, two_pi / omega_0_hint);
}

CrossingEstimate t2_crossing(const PopulationTrace& trace) {
  double period = infer_period(trace);
  if (period <= 0.0) {
    double span = trace.signal_time.empty() ? 0.0 : trace.signal_time.back();
    period = span / 8.0;
    if (period <= 0.0) return {0.0, true};
  }
  return crossing_refined(trace, period);
}

namespace {

// bounded parameters via logistic transforms so the Levenberg-Marquardt
// search is unconstrained
struct FitBox {
  double t2_lo, t2_hi;      // log-logistic
  double n_lo, n_hi;        // linear-logistic
  double om_lo, om_hi;      // log-logistic
};

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  p = std::min(1.0 - 1e-9, std::max(1e-9, p));
  return std::log(p / (1.0 - p));
}

struct FitData {
  const std::vector<double>* t;
  const std::vector<double>* p;
  std::size_t n_pts;
  FitBox box;

  void decode(const gsl_vector* x, double* t2, double* n, double* om) const {
    double s0 = logistic(gsl_vector_get(x, 0));
    double s1 = logistic(gsl_vector_get(x, 1));
    double s2 = logistic(gsl_vector_get(x, 2));
    *t2 = box.t2_lo * std::pow(box.t2_hi / box.t2_lo, s0);
    *n = box.n_lo + (box.n_hi - box.n_lo) * s1;
    *om = box.om_lo * std::pow(box.om_hi / box.om_lo, s2);
  }
};

int fit_residuals(const gsl_vector* x, void* params, gsl_vector* f) {
  const FitData* d = static_cast<const FitData*>(params);
  double t2, n, om;
  d->decode(x, &t2, &n, &om);
  for (std::size_t j = 0; j < d->n_pts; ++j) {
    double tj = (*d->t)[j];
    double env = tj > 0.0 ? std::exp(-std::pow(tj / t2, n)) : 1.0;
    double model = 0.5 + 0.5 * env * std::cos(om * tj);
    gsl_vector_set(f, j, model - (*d->p)[j]);
  }
  return GSL_SUCCESS;
}

} // namespace

ContrastFit fit_contrast(const PopulationTrace& trace, double omega_0_hint) {
  if (omega_0_hint <= 0.0) throw std::domain_error("hint must be > 0");
  const double span = trace.signal_time.empty() ? 0.0 : trace.signal_time.back();
  const double period = two_pi / omega_0_hint;
  if (span < 3.0 * period)
    throw std::invalid_argument("trace shorter than 3 Rabi periods");

  CrossingEstimate cross = t2_crossing_hinted(trace, omega_0_hint);
  double window = cross.lower_bound
                      ? span
                      : std::min(span, std::max(1.2 * cross.t2, 3.0 * period));

  std::vector<double> t_fit, p_fit;
  for (std::size_t j = 0; j < trace.signal_time.size(); ++j)
    if (trace.signal_time[j] <= window * (1.0 + 1e-12)) {
      t_fit.push_back(trace.signal_time[j]);
      p_fit.push_back(trace.p_mean[j]);
    }

  FitData data;
  data.t = &t_fit;
  data.p = &p_fit;
  data.n_pts = t_fit.size();
  data.box = {1e-4, 50.0 * span, 1.0, 4.0, 0.3 * omega_0_hint, 3.0 * omega_0_hint};

  gsl_multifit_nlinear_fdf fdf{};
  fdf.f = &fit_residuals;
  fdf.df = nullptr;  // forward-difference Jacobian
  fdf.fvv = nullptr;
  fdf.n = data.n_pts;
  fdf.p = 3;
  fdf.params = &data;

  gsl_multifit_nlinear_parameters fit_params = gsl_multifit_nlinear_default_parameters();
  gsl_multifit_nlinear_workspace* w = gsl_multifit_nlinear_alloc(
      gsl_multifit_nlinear_trust, &fit_params, data.n_pts, 3);

  const double t2_starts[] = {window / 30.0, window / 10.0, window / 3.0, window};
  const double n_starts[] = {1.0, 1.2, 1.8, 2.5};

  double best_ssr = 0.0;
  double best[3] = {0, 0, 0};
  bool have = false;
  gsl_vector* x0 = gsl_vector_alloc(3);
  for (double t2_0 : t2_starts) {
    for (double n_0 : n_starts) {
      gsl_vector_set(x0, 0, logit(std::log(std::max(t2_0, data.box.t2_lo * 1.01) / data.box.t2_lo) /
                                  std::log(data.box.t2_hi / data.box.t2_lo)));
      gsl_vector_set(x0, 1, logit((n_0 - data.box.n_lo) / (data.box.n_hi - data.box.n_lo)));
      gsl_vector_set(x0, 2, logit(std::log(omega_0_hint / data.box.om_lo) /
                                  std::log(data.box.om_hi / data.box.om_lo)));
      gsl_multifit_nlinear_init(x0, &fdf, w);
      int info = 0;
      gsl_multifit_nlinear_driver(200, 1e-12, 1e-12, 0.0, nullptr, nullptr, &info, w);
      double ssr;
      gsl_blas_ddot(gsl_multifit_nlinear_residual(w), gsl_multifit_nlinear_residual(w), &ssr);
      if (!have || ssr < best_ssr) {
        best_ssr = ssr;
        have = true;
        double t2, n, om;
        data.decode(gsl_multifit_nlinear_position(w), &t2, &n, &om);
        best[0] = t2;
        best[1] = n;
        best[2] = om;
      }
    }
  }
  gsl_vector_free(x0);
  gsl_multifit_nlinear_free(w);

  ContrastFit fit;
  fit.t2 = best[0];
  fit.stretch = best[1];
  fit.rabi_freq_fit = best[2];
  fit.residual = best_ssr;
  fit.lower_bound = cross.lower_bound;
  fit.fit_window = window;
  if (cross.lower_bound) fit.t2 = std::max(fit.t2, span);
  return fit;
}

SensitivityReport sensitivity(const ContrastFit& fit, double omega_0, double n_ions,
                              int n_shots, double t_add, double duty) {
  double om = fit.rabi_freq_fit > 0.0 ? fit.rabi_freq_fit : omega_0;
  if (om <= 0.0 || fit.t2 <= 0.0) throw std::invalid_argument("degenerate fit");
  if (n_shots < 1 || n_ions < 1.0) throw std::invalid_argument("bad counts");

  SensitivityReport rep;
  rep.n_ions = n_ions;
  rep.t_add = t_add;
  rep.duty = duty;

  // maximum-slope times of the fitted model; scan far enough past T2
  // that the exponential penalty has certainly taken over
  double t_max = std::max(3.0 * fit.t2, 10.0 * pi / om);
  bool have = false;
  for (int k = 0;; ++k) {
    double t = (k + 0.5) * pi / om;
    if (t > t_max) break;
    double env = std::exp(-std::pow(t / fit.t2, fit.stretch));
    double p = 0.5 + 0.5 * env * std::cos(om * t);
    double d_env = -fit.stretch / fit.t2 * std::pow(t / fit.t2, fit.stretch - 1.0) * env;
    double slope = 0.5 * d_env * std::cos(om * t) - 0.5 * env * om * std::sin(om * t);
    if (slope == 0.0) continue;
    double delta_p = std::sqrt(std::max(1e-300, p * (1.0 - p)) / n_shots);
    double t_total = n_shots * ((1.0 + duty) * t + t_add);
    double s = delta_p * std::sqrt(t_total) / (std::abs(slope) * (t / om) * std::sqrt(n_ions));
    if (!have || s < rep.s) {
      rep.s = s;
      rep.optimal_time = t;
      have = true;
    }
  }
  if (!have) throw std::runtime_error("no usable slope times in range");
  rep.s_b = hbar * rep.s / (std::sqrt(2.0) * mu_b);
  return rep;
}

T2Measurement measure_t2(RunSpec spec, double omega_0_hint, double span_cap) {
  auto span_of = [&](const RunSpec& s) {
    return s.protocol.method == Method::dressed
               ? s.protocol.t_s
               : 2.0 * s.protocol.t_s * s.protocol.n_cycles;
  };
  auto set_span = [&](RunSpec& s, double span) {
    if (s.protocol.method == Method::dressed) {
      s.protocol.t_s = span;
    } else {
      s.protocol.n_cycles =
          std::max(1, static_cast<int>(std::ceil(span / (2.0 * s.protocol.t_s))));
    }
  };

  T2Measurement m;
  const double min_span = 3.0 * two_pi / omega_0_hint;  // fit_contrast floor
  for (;;) {
    m.trace = ensemble_average(spec);
    m.crossing = t2_crossing_hinted(m.trace, omega_0_hint);
    double span = span_of(spec);
    bool fits = !m.crossing.lower_bound && 1.25 * m.crossing.t2 <= span &&
                span >= min_span;
    if (fits || span_cap <= 0.0 || span >= span_cap) break;
    set_span(spec, std::min(2.0 * span, span_cap));
  }
  // Report the crossing against the period inferred from the trace itself.
  // Static detuning noise pulls the mean oscillation above the nominal gap,
  // so the hinted window overstates the contrast time once sigma_q ~ omega_0.
  m.crossing = t2_crossing(m.trace);
  m.fit = fit_contrast(m.trace, omega_0_hint);
  return m;
}

std::vector<std::vector<SweepCell>> sweep_t2_grid(const std::vector<double>& sigma_b_list,
                                                  const std::vector<double>& omega_s_list,
                                                  Method method, const RunSpec& base,
                                                  double span_cap) {
  std::vector<std::vector<SweepCell>> grid(sigma_b_list.size());
  for (std::size_t ib = 0; ib < sigma_b_list.size(); ++ib) {
    grid[ib].resize(omega_s_list.size());
    for (std::size_t io = 0; io < omega_s_list.size(); ++io) {
      RunSpec spec = base;
      spec.protocol.method = method;
      spec.noise.sigma_b = sigma_b_list[ib];
      spec.drives.omega_s = omega_s_list[io];
      double hint = omega_s_list[io] / std::sqrt(2.0);
      double period = two_pi / hint;
      if (method == Method::dressed) {
        spec.protocol.t_s = 4.0 * period;
      } else {
        spec.protocol.n_cycles = std::max(
            1, static_cast<int>(std::ceil(32.0 * period / (2.0 * spec.protocol.t_s))));
      }
      T2Measurement m = measure_t2(spec, hint, span_cap);
      grid[ib][io] = {m.crossing.t2, m.crossing.lower_bound};
    }
  }
  return grid;
}

std::vector<std::pair<double, double>> scan_pi_duration(const std::vector<double>& t_pi_list,
                                                        const RunSpec& base,
                                                        double span_cap) {
  std::vector<std::pair<double, double>> curve;
  for (double t_pi : t_pi_list) {
    RunSpec spec = base;
    spec.protocol.method = Method::mdd;
    spec.protocol.t_pi = t_pi;
    spec.drives.omega_pi = std::sqrt(2.0) * pi / t_pi;
    double hint = effective_rabi(spec);
    T2Measurement m = measure_t2(spec, hint, span_cap);
    curve.emplace_back(t_pi, m.crossing.t2);
  }
  return curve;
}

std::vector<std::pair<double, double>> phase_scan(const std::vector<double>& phi_offsets,
                                                  const RunSpec& base) {
  std::vector<std::pair<double, double>> out;
  for (double offset : phi_offsets) {
    RunSpec spec = base;
    spec.protocol.method = Method::mdd;
    spec.protocol.n_cycles = std::max(spec.protocol.n_cycles, 60);
    spec.noise.sigma_b = 0.0;
    spec.protocol.phi_s = offset;
    spec.protocol.phi_pi = 0.0;
    spec.shots_per_point = 1;
    PopulationTrace trace = ensemble_average(spec);
    double t_min = 20.0 * spec.protocol.t_s;  // past the first 10 cycles
    double pmin = 2.0, pmax = -1.0;
    for (std::size_t j = 0; j < trace.signal_time.size(); ++j) {
      if (trace.signal_time[j] < t_min) continue;
      pmin = std::min(pmin, trace.p_mean[j]);
      pmax = std::max(pmax, trace.p_mean[j]);
    }
    out.emplace_back(offset, pmax > pmin ? pmax - pmin : 0.0);
  }
  return out;
}

} // namespace mdd
