#include "crystal.hpp"
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <gsl/gsl_multimin.h>
#include <omp.h>
#include "rng.hpp"

namespace mdd {

namespace {

constexpr std::uint64_t kInitStream = 0x11;
constexpr std::uint64_t kKickStream = 0x12;

double max_trap_frequency(const TrapConfig& t) {
  return std::max({t.omega_x, t.omega_y, t.omega_z});
}

// cold-fluid spheroid semi-axes for the initial sampling volume: uniform
// density n0 inside an ellipsoid whose axes make the enclosed charge
// reproduce each trap frequency; the simple isotropic-equivalent radius
// per axis is good enough for a starting guess
std::array<double, 3> seed_ellipsoid(int n, const TrapConfig& trap) {
  double n0 = cold_fluid_density(trap);
  double volume = n / n0;
  // distribute the volume with axes inversely proportional to omega^2,
  // normalized to the correct total volume
  double wx2 = trap.omega_x * trap.omega_x;
  double wy2 = trap.omega_y * trap.omega_y;
  double wz2 = trap.omega_z * trap.omega_z;
  double gx = 1.0 / wx2, gy = 1.0 / wy2, gz = 1.0 / wz2;
  double scale = std::cbrt(volume * 3.0 / (4.0 * pi) / (gx * gy * gz));
  return {gx * scale, gy * scale, gz * scale};
}

std::vector<std::array<double, 3>> random_positions(int n, const TrapConfig& trap,
                                                    std::uint64_t seed,
                                                    std::uint64_t restart) {
  auto ax = seed_ellipsoid(n, trap);
  for (auto& a : ax) a *= 1.2;
  std::vector<std::array<double, 3>> pos(n);
  for (int i = 0; i < n; ++i) {
    // rejection-sample the unit ball
    std::uint64_t sub = 0;
    for (;;) {
      double x = 2.0 * uniform01(seed, kInitStream, (restart << 32) | i, 3 * sub + 0) - 1.0;
      double y = 2.0 * uniform01(seed, kInitStream, (restart << 32) | i, 3 * sub + 1) - 1.0;
      double z = 2.0 * uniform01(seed, kInitStream, (restart << 32) | i, 3 * sub + 2) - 1.0;
      if (x * x + y * y + z * z <= 1.0) {
        pos[i] = {ax[0] * x, ax[1] * y, ax[2] * z};
        break;
      }
      ++sub;
    }
  }
  return pos;
}

template <bool Parallel>
void forces_impl(const std::vector<std::array<double, 3>>& pos, const TrapConfig& trap,
                 std::vector<std::array<double, 3>>& force) {
  const int n = static_cast<int>(pos.size());
  force.resize(n);
  const double kq2 = k_coul * trap.charge * trap.charge;
  const double cx = trap.mass * trap.omega_x * trap.omega_x;
  const double cy = trap.mass * trap.omega_y * trap.omega_y;
  const double cz = trap.mass * trap.omega_z * trap.omega_z;
  // full O(N^2) sum per ion in ascending j order: identical floating-point
  // order regardless of thread count
#pragma omp parallel for schedule(static) if (Parallel)
  for (int i = 0; i < n; ++i) {
    double fx = -cx * pos[i][0];
    double fy = -cy * pos[i][1];
    double fz = -cz * pos[i][2];
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double dx = pos[i][0] - pos[j][0];
      double dy = pos[i][1] - pos[j][1];
      double dz = pos[i][2] - pos[j][2];
      double r2 = dx * dx + dy * dy + dz * dz;
      double inv_r = 1.0 / std::sqrt(r2);
      double f = kq2 * inv_r * inv_r * inv_r;
      fx += f * dx;
      fy += f * dy;
      fz += f * dz;
    }
    force[i] = {fx, fy, fz};
  }
}

double max_force_norm(const std::vector<std::array<double, 3>>& f) {
  double m = 0.0;
  for (const auto& v : f)
    m = std::max(m, std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
  return m;
}

struct RelaxResult {
  std::vector<std::array<double, 3>> pos;
  double residual;
  long iterations;
};

// damped velocity-Verlet with a friction ramp: weak damping early so the
// configuration can reorder, near-critical damping for the final quench
RelaxResult relax(std::vector<std::array<double, 3>> pos,
                  std::vector<std::array<double, 3>> vel, const TrapConfig& trap,
                  const MDParams& p, long budget) {
  const int n = static_cast<int>(pos.size());
  const double dt = p.timestep > 0.0 ? p.timestep : 0.05 / max_trap_frequency(trap);
  const double inv_m = 1.0 / trap.mass;
  std::vector<std::array<double, 3>> force, force_new;
  auto forces = [&](const std::vector<std::array<double, 3>>& q,
                    std::vector<std::array<double, 3>>& out) {
    if (p.parallel) forces_impl<true>(q, trap, out);
    else forces_impl<false>(q, trap, out);
  };
  forces(pos, force);

  const long anneal_end = p.friction > 0.0 ? 0 : budget / 2;
  double residual = max_force_norm(force);
  long it = 0;
  for (; it < budget; ++it) {
    double gamma;
    if (p.friction > 0.0) {
      gamma = p.friction;
    } else if (it < anneal_end) {
      double s = static_cast<double>(it) / static_cast<double>(anneal_end);
      gamma = trap.omega_z * (0.1 + 0.9 * s);
    } else {
      gamma = trap.omega_z;
    }
    double damp = std::exp(-gamma * dt);
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < 3; ++d)
        pos[i][d] += vel[i][d] * dt + 0.5 * force[i][d] * inv_m * dt * dt;
    forces(pos, force_new);
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < 3; ++d) {
        vel[i][d] += 0.5 * (force[i][d] + force_new[i][d]) * inv_m * dt;
        vel[i][d] *= damp;
      }
    force.swap(force_new);
    if (it % 64 == 0 && it > anneal_end) {
      residual = max_force_norm(force);
      if (residual < p.force_tolerance) break;
    }
  }
  residual = max_force_norm(force);
  return {std::move(pos), residual, it};
}

} // namespace

void compute_forces_serial(const std::vector<std::array<double, 3>>& pos,
                           const TrapConfig& trap,
                           std::vector<std::array<double, 3>>& force) {
  forces_impl<false>(pos, trap, force);
}

void compute_forces_parallel(const std::vector<std::array<double, 3>>& pos,
                             const TrapConfig& trap,
                             std::vector<std::array<double, 3>>& force) {
  forces_impl<true>(pos, trap, force);
}

double potential_energy(const std::vector<std::array<double, 3>>& pos,
                        const TrapConfig& trap) {
  const int n = static_cast<int>(pos.size());
  const double kq2 = k_coul * trap.charge * trap.charge;
  double u = 0.0;
  for (int i = 0; i < n; ++i) {
    u += 0.5 * trap.mass *
         (trap.omega_x * trap.omega_x * pos[i][0] * pos[i][0] +
          trap.omega_y * trap.omega_y * pos[i][1] * pos[i][1] +
          trap.omega_z * trap.omega_z * pos[i][2] * pos[i][2]);
    for (int j = i + 1; j < n; ++j) {
      double dx = pos[i][0] - pos[j][0];
      double dy = pos[i][1] - pos[j][1];
      double dz = pos[i][2] - pos[j][2];
      u += kq2 / std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  }
  return u;
}

IonEnsemble solve_equilibrium(int n_ions, const TrapConfig& trap,
                              const MDParams& params, std::uint64_t seed) {
  if (n_ions < 1) throw std::domain_error("n_ions must be >= 1");
  IonEnsemble out;
  if (n_ions == 1) {
    out.positions = {{0.0, 0.0, 0.0}};
    out.converged = true;
    return out;
  }

  const double dt = params.timestep > 0.0 ? params.timestep
                                          : 0.05 / max_trap_frequency(trap);
  if (dt * max_trap_frequency(trap) >= 0.1)
    throw std::domain_error("timestep too large for stability");

  // characteristic velocity for annealing kicks
  auto ax = seed_ellipsoid(n_ions, trap);
  double v0 = trap.omega_z * ax[2];

  double best_energy = 0.0;
  RelaxResult best{};
  bool have = false;
  long budget = params.max_iterations / std::max(1, params.restarts);
  for (int r = 0; r < std::max(1, params.restarts); ++r) {
    auto pos = random_positions(n_ions, trap, seed, r);
    std::vector<std::array<double, 3>> vel(n_ions, {0.0, 0.0, 0.0});
    double kick = params.initial_temp_scale * std::pow(params.temp_decay, r) * v0;
    for (int i = 0; i < n_ions; ++i)
      for (int d = 0; d < 3; ++d)
        vel[i][d] = kick * std_normal(seed, kKickStream, (static_cast<std::uint64_t>(r) << 32) | i, d);
    RelaxResult res = relax(std::move(pos), std::move(vel), trap, params, budget);
    double e = potential_energy(res.pos, trap);
    if (!have || e < best_energy ||
        (std::abs(e - best_energy) < 1e-12 * std::abs(best_energy) &&
         res.residual < best.residual)) {
      best_energy = e;
      best = std::move(res);
      have = true;
    }
  }

  // final quench of the winning configuration at fixed strong damping
  MDParams quench = params;
  quench.friction = trap.omega_z;
  RelaxResult fin = relax(std::move(best.pos),
                          std::vector<std::array<double, 3>>(n_ions, {0.0, 0.0, 0.0}),
                          trap, quench, budget);

  out.positions = std::move(fin.pos);
  out.converged_energy = potential_energy(out.positions, trap);
  out.max_residual_force = fin.residual;
  out.converged = fin.residual < params.force_tolerance;
  out.iterations = best.iterations + fin.iterations;
  return out;
}

std::array<double, 3> crystal_extents(const IonEnsemble& ens) {
  std::array<double, 3> lo{0, 0, 0}, hi{0, 0, 0};
  if (ens.positions.empty()) return {0, 0, 0};
  lo = hi = ens.positions[0];
  for (const auto& p : ens.positions)
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  return {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
}

double cold_fluid_density(const TrapConfig& trap) {
  double w2 = trap.omega_x * trap.omega_x + trap.omega_y * trap.omega_y +
              trap.omega_z * trap.omega_z;
  return eps0 * trap.mass * w2 / (trap.charge * trap.charge);
}

double bulk_density(const IonEnsemble& ens) {
  // normalize coordinates by the per-axis rms radius, count ions inside
  // half the unit ball and divide by the corresponding physical volume
  const auto& pos = ens.positions;
  const int n = static_cast<int>(pos.size());
  if (n < 10) throw std::domain_error("bulk density needs a bulk");
  std::array<double, 3> rms{0, 0, 0};
  for (const auto& p : pos)
    for (int d = 0; d < 3; ++d) rms[d] += p[d] * p[d];
  for (int d = 0; d < 3; ++d) rms[d] = std::sqrt(rms[d] / n);
  // uniform ellipsoid with semi-axis a has rms a/sqrt(5) per axis
  std::array<double, 3> semi{rms[0] * std::sqrt(5.0), rms[1] * std::sqrt(5.0),
                             rms[2] * std::sqrt(5.0)};
  int inside = 0;
  for (const auto& p : pos) {
    double u = 0.0;
    for (int d = 0; d < 3; ++d) {
      double s = p[d] / semi[d];
      u += s * s;
    }
    if (u <= 0.25) ++inside;  // |r_scaled| <= 1/2
  }
  double volume = 4.0 / 3.0 * pi * (0.5 * semi[0]) * (0.5 * semi[1]) * (0.5 * semi[2]);
  return inside / volume;
}

double rabi_micromotion_factor(double wavevector, double micromotion_amplitude) {
  if (micromotion_amplitude < 0.0) throw std::domain_error("amplitude must be >= 0");
  return std::cyl_bessel_j(0, wavevector * micromotion_amplitude);
}

std::vector<double> distance_spectrum(const std::vector<std::array<double, 3>>& pos) {
  std::vector<double> d;
  const int n = static_cast<int>(pos.size());
  d.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double dx = pos[i][0] - pos[j][0];
      double dy = pos[i][1] - pos[j][1];
      double dz = pos[i][2] - pos[j][2];
      d.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
    }
  std::sort(d.begin(), d.end());
  return d;
}

namespace {

// The minimizer works in trap-scaled variables: lengths in units of the
// seed ellipsoid's long axis, energies in the matching harmonic scale
// m w_z^2 L^2.  Fed raw SI values (|E| ~ 1e-21 J, |F| ~ 1e-16 N) the BFGS
// line search bails out with ENOPROG on the very first iteration.
struct GslCtx {
  const TrapConfig* trap;
  int n;
  double length;
  double energy;
};

double gsl_energy(const gsl_vector* v, void* params) {
  const GslCtx* ctx = static_cast<const GslCtx*>(params);
  std::vector<std::array<double, 3>> pos(ctx->n);
  for (int i = 0; i < ctx->n; ++i)
    pos[i] = {ctx->length * gsl_vector_get(v, 3 * i),
              ctx->length * gsl_vector_get(v, 3 * i + 1),
              ctx->length * gsl_vector_get(v, 3 * i + 2)};
  return potential_energy(pos, *ctx->trap) / ctx->energy;
}

void gsl_gradient(const gsl_vector* v, void* params, gsl_vector* g) {
  const GslCtx* ctx = static_cast<const GslCtx*>(params);
  std::vector<std::array<double, 3>> pos(ctx->n);
  for (int i = 0; i < ctx->n; ++i)
    pos[i] = {ctx->length * gsl_vector_get(v, 3 * i),
              ctx->length * gsl_vector_get(v, 3 * i + 1),
              ctx->length * gsl_vector_get(v, 3 * i + 2)};
  std::vector<std::array<double, 3>> force;
  compute_forces_serial(pos, *ctx->trap, force);
  double s = ctx->length / ctx->energy;
  for (int i = 0; i < ctx->n; ++i)
    for (int d = 0; d < 3; ++d) gsl_vector_set(g, 3 * i + d, -s * force[i][d]);
}

void gsl_both(const gsl_vector* v, void* params, double* f, gsl_vector* g) {
  *f = gsl_energy(v, params);
  gsl_gradient(v, params, g);
}

} // namespace

double minimize_energy_bfgs(int n_ions, const TrapConfig& trap, int n_starts,
                            std::uint64_t seed,
                            std::vector<std::array<double, 3>>* best_pos) {
  if (n_ions < 2) throw std::domain_error("minimizer needs n >= 2");
  auto ax = seed_ellipsoid(n_ions, trap);
  GslCtx ctx{&trap, n_ions, ax[2],
             trap.mass * trap.omega_z * trap.omega_z * ax[2] * ax[2]};
  gsl_multimin_function_fdf func;
  func.n = static_cast<std::size_t>(3 * n_ions);
  func.f = &gsl_energy;
  func.df = &gsl_gradient;
  func.fdf = &gsl_both;
  func.params = &ctx;

  double best = 0.0;
  bool have = false;
  std::vector<std::array<double, 3>> best_positions;
  for (int s = 0; s < n_starts; ++s) {
    auto pos = random_positions(n_ions, trap, seed ^ 0xb0f5ull, 1000 + s);
    gsl_vector* x = gsl_vector_alloc(func.n);
    for (int i = 0; i < n_ions; ++i)
      for (int d = 0; d < 3; ++d)
        gsl_vector_set(x, 3 * i + d, pos[i][d] / ctx.length);
    gsl_multimin_fdfminimizer* m =
        gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, func.n);
    gsl_multimin_fdfminimizer_set(m, &func, x, 0.01, 0.1);
    int status = GSL_CONTINUE;
    for (int it = 0; it < 20000 && status == GSL_CONTINUE; ++it) {
      // ENOPROG here is the normal exit: the line search has hit the
      // floor of double precision in the scaled objective
      status = gsl_multimin_fdfminimizer_iterate(m);
      if (status) break;
      status = gsl_multimin_test_gradient(m->gradient, 1e-10);
    }
    double e = m->f * ctx.energy;
    if (!have || e < best) {
      best = e;
      have = true;
      if (best_pos) {
        best_positions.resize(n_ions);
        for (int i = 0; i < n_ions; ++i)
          best_positions[i] = {ctx.length * gsl_vector_get(m->x, 3 * i),
                               ctx.length * gsl_vector_get(m->x, 3 * i + 1),
                               ctx.length * gsl_vector_get(m->x, 3 * i + 2)};
      }
    }
    gsl_multimin_fdfminimizer_free(m);
    gsl_vector_free(x);
  }
  if (best_pos) *best_pos = std::move(best_positions);
  return best;
}

} // namespace mdd
