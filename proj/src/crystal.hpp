#pragma once
#include <array>
#include <cstdint>
#include <vector>
#include "units.hpp"

namespace mdd {

struct TrapConfig {
  double omega_x = angular(0.7e6);
  double omega_y = angular(0.58e6);
  double omega_z = angular(0.12e6);
  double mass = m_yb171;
  double charge = q_e;
};

struct IonEnsemble {
  std::vector<std::array<double, 3>> positions;  // m
  double converged_energy = 0.0;                 // J
  double max_residual_force = 0.0;               // N
  bool converged = false;
  long iterations = 0;
};

struct MDParams {
  double timestep = 0.0;          // s; 0 -> 0.05 / max trap frequency
  double friction = 0.0;          // 1/s; 0 -> annealed ramp omega_z/10 .. omega_z
  long max_iterations = 400000;
  // per-ion residual force bound. The per-ion force scale at the default
  // trap is ~1e-18..1e-16 N across N = 2..1000, so 1e-22 N pins positions
  // to ~1e-9 of the inter-ion spacing while staying far above the
  // double-precision floor.
  double force_tolerance = 1e-22;  // N
  double initial_temp_scale = 1.0;
  double temp_decay = 0.5;        // velocity-kick decay across restarts
  int restarts = 6;
  bool parallel = true;           // OpenMP force kernel; serial otherwise
};

// Damped velocity-Verlet relaxation of N ions in the 3D harmonic
// pseudopotential with full Coulomb repulsion. Deterministic for a fixed
// seed under any worker count.
IonEnsemble solve_equilibrium(int n_ions, const TrapConfig& trap,
                              const MDParams& params, std::uint64_t seed);

// max - min per axis
std::array<double, 3> crystal_extents(const IonEnsemble& ens);

// n0 = eps0 m (wx^2 + wy^2 + wz^2) / q^2
double cold_fluid_density(const TrapConfig& trap);

// density of the ions inside half the rms ellipsoidal radius
double bulk_density(const IonEnsemble& ens);

// J0(k x_m): residual Rabi-rate factor under micromotion
double rabi_micromotion_factor(double wavevector, double micromotion_amplitude);

double potential_energy(const std::vector<std::array<double, 3>>& pos,
                        const TrapConfig& trap);

// pairwise Coulomb + trap forces; both kernels sum in identical index
// order per ion, so their outputs are bitwise equal and independent of
// the number of OpenMP workers
void compute_forces_serial(const std::vector<std::array<double, 3>>& pos,
                           const TrapConfig& trap,
                           std::vector<std::array<double, 3>>& force);
void compute_forces_parallel(const std::vector<std::array<double, 3>>& pos,
                             const TrapConfig& trap,
                             std::vector<std::array<double, 3>>& force);

// independent oracle for small N: multi-start BFGS minimization
double minimize_energy_bfgs(int n_ions, const TrapConfig& trap, int n_starts,
                            std::uint64_t seed,
                            std::vector<std::array<double, 3>>* best_pos = nullptr);

// sorted pairwise-distance spectrum, the label-free configuration signature
std::vector<double> distance_spectrum(const std::vector<std::array<double, 3>>& pos);

} // namespace mdd
