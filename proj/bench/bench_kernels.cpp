// Timing comparison of the OpenMP kernels against their serial reference
// paths, plus the bitwise-equality check the parallel design promises.
//
//   bench_kernels [--repeats R] [--workers W]
//
// Two kernels dominate runtime: the pairwise Coulomb force sum inside the
// crystal relaxer and the per-ion trajectory loop inside ensemble_average.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "CLI11.hpp"
#include "crystal.hpp"
#include "experiment.hpp"
#include "fieldmap.hpp"
#include "units.hpp"

using namespace mdd;
using clk = std::chrono::steady_clock;

namespace {

double seconds(clk::time_point a, clk::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

template <typename F>
double best_of(int repeats, F&& body) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    auto t0 = clk::now();
    body();
    best = std::min(best, seconds(t0, clk::now()));
  }
  return best;
}

void bench_forces(int repeats) {
  TrapConfig trap;
  std::printf("force kernel (pairwise Coulomb + trap)\n");
  std::printf("%8s %14s %14s %9s %12s %6s\n", "N", "serial [ms]", "openmp [ms]",
              "speedup", "ns/pair", "equal");
  for (int n : {200, 1000, 3000}) {
    auto pos = ellipsoid_positions(n, {0.05e-3, 0.075e-3, 0.725e-3}, 7);
    std::vector<std::array<double, 3>> fs(n), fp(n);
    double ts = best_of(repeats, [&] { compute_forces_serial(pos, trap, fs); });
    double tp = best_of(repeats, [&] { compute_forces_parallel(pos, trap, fp); });
    bool equal = std::memcmp(fs.data(), fp.data(), n * sizeof fs[0]) == 0;
    double pairs = 0.5 * n * (n - 1.0);
    std::printf("%8d %14.3f %14.3f %9.2f %12.2f %6s\n", n, ts * 1e3, tp * 1e3,
                ts / tp, tp / pairs * 1e9, equal ? "yes" : "NO");
  }
}

void bench_ensemble(int repeats, int workers) {
  RunSpec spec;
  spec.levels.omega_hfs = angular(12.6428e9);
  spec.levels.gyromagnetic = angular(14.0e9);
  spec.levels.quadratic_coeff =
      -spec.levels.gyromagnetic * spec.levels.gyromagnetic / spec.levels.omega_hfs;
  spec.drives.omega_mw = angular(25e3);
  spec.drives.omega_s = std::sqrt(2.0) * angular(1.0);
  spec.drives.omega_pi = std::sqrt(2.0) * pi / 6.3e-3;
  spec.drives.nominal_field = 0.765e-3;
  spec.protocol.method = Method::mdd;
  spec.protocol.t_s = 20e-3;
  spec.protocol.t_pi = 6.3e-3;
  spec.protocol.n_cycles = 400;
  spec.noise = ShotNoiseSpec::from_sigma(0.765e-3, 0.05e-6, 7);
  spec.shots_per_point = 8;

  auto positions = ellipsoid_positions(2000, {0.05e-3, 0.075e-3, 0.725e-3}, 7);
  CoilPair pair;
  spec.ensemble = stratified_subsample(ensemble_from_map(pair, positions, true),
                                       positions, 64, 8, 4, 7);

  std::printf("\nensemble trajectory average "
              "(64 ions x 8 shots x 400 cycles)\n");
  std::printf("%8s %14s\n", "workers", "time [ms]");
  spec.workers = 1;
  PopulationTrace ref;
  double t1 = best_of(repeats, [&] { ref = ensemble_average(spec); });
  std::printf("%8d %14.1f\n", 1, t1 * 1e3);

  spec.workers = workers;
  PopulationTrace par;
  double tw = best_of(repeats, [&] { par = ensemble_average(spec); });
  std::printf("%8d %14.1f   speedup %.2f\n", workers, tw * 1e3, t1 / tw);

  bool equal = ref.p_mean.size() == par.p_mean.size() &&
               std::memcmp(ref.p_mean.data(), par.p_mean.data(),
                           ref.p_mean.size() * sizeof(double)) == 0 &&
               std::memcmp(ref.p_std.data(), par.p_std.data(),
                           ref.p_std.size() * sizeof(double)) == 0;
  std::printf("bitwise identical across worker counts: %s\n", equal ? "yes" : "NO");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel timings: serial reference vs OpenMP"};
  int repeats = 3;
  int workers = 0;
  app.add_option("--repeats", repeats, "timing repeats, best-of")
      ->check(CLI::PositiveNumber);
  app.add_option("--workers", workers, "threads for the parallel pass (0: all)");
  CLI11_PARSE(app, argc, argv);

  if (workers <= 0) workers = omp_get_max_threads();
  std::printf("hardware threads available: %d, parallel pass uses %d\n\n",
              omp_get_max_threads(), workers);
  bench_forces(repeats);
  bench_ensemble(repeats, workers);
  return 0;
}
