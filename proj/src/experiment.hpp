#pragma once
#include <array>
#include <cstdint>
#include <utility>
#include <vector>
#include "fieldmap.hpp"
#include "noise.hpp"
#include "sequence.hpp"
#include "spin_core.hpp"

namespace mdd {

struct EnsembleDef {
  std::vector<IonDisorder> ions;
  std::vector<double> weights;  // occupancy weights, normalized internally
  static EnsembleDef center_ion();
};

// uniform positions inside an ellipsoid (semi-axes x,y,z in meters):
// desk-scale stand-in for a relaxed crystal when only the smooth field
// profile over the occupied volume matters
std::vector<std::array<double, 3>> ellipsoid_positions(
    int n, const std::array<double, 3>& semi_axes, std::uint64_t seed);

// per-ion static field offsets from the coil map; RF drive amplitude
// inhomogeneity optionally tied to the same fractional profile
EnsembleDef ensemble_from_map(const CoilPair& pair,
                              const std::vector<std::array<double, 3>>& positions,
                              bool rf_scale_from_field = true);

// occupancy-weighted stratified subsample over axial (z) x radial bins
EnsembleDef stratified_subsample(const EnsembleDef& full,
                                 const std::vector<std::array<double, 3>>& positions,
                                 int k, int n_axial, int n_radial, std::uint64_t seed);

struct RunSpec {
  HyperfineLevels levels{};
  DriveSet drives{};
  ProtocolConfig protocol{};
  ShotNoiseSpec noise{};
  EnsembleDef ensemble = EnsembleDef::center_ion();
  int shots_per_point = 100;
  int samples_per_period = 40;   // dressed-run sampling density
  bool idealized_two_level = false;  // {|0>,|D>} reduction, no leakage
  int workers = 0;               // 0: all available
};

struct PopulationTrace {
  std::vector<double> signal_time;  // s
  std::vector<double> p_mean;       // |0> population
  std::vector<double> p_std;        // std across trajectories
};

// signal-time sampling points implied by the protocol: uniform grid for
// dressed runs, on-curve cycle boundaries (after the odd evolution and
// after the cycle) for the pulsed protocol
std::vector<double> trace_times(const RunSpec& spec);

// P at every trace time for one (ion, shot) trajectory; one field draw,
// exact segment exponentials
std::vector<double> simulate_trajectory(const RunSpec& spec, int ion_index,
                                        int shot_index);

// weighted mean over ions x shots; deterministic for fixed seed and any
// worker count (per-ion partial sums merged in ion order)
PopulationTrace ensemble_average(const RunSpec& spec);

struct ContrastFit {
  double t2 = 0.0;             // s
  double stretch = 1.0;        // exponent of exp(-(t/T2)^n)
  double rabi_freq_fit = 0.0;  // rad/s
  double residual = 0.0;       // sum of squared residuals
  bool lower_bound = false;    // envelope never reached 1/e in the trace
  double fit_window = 0.0;     // s, span actually fitted
};

// Two-stage estimate. Stage 1 finds the 1/e crossing of the windowed
// peak-trough envelope (window = one Rabi period, half overlapping).
// Stage 2 fits P(t) = 1/2 + 1/2 exp(-(t/T2)^n) cos(W t) on [0, 1.2 x
// crossing] only: the exponential power law describes the decay through
// 1/e, while the quasi-static ensemble develops an algebraic tail
// outside the family that would otherwise drag the fit.
ContrastFit fit_contrast(const PopulationTrace& trace, double omega_0_hint);

struct CrossingEstimate {
  double t2 = 0.0;
  bool lower_bound = false;
};

// 1/e envelope crossing; the Rabi period is inferred from the trace's
// own half-population crossings
CrossingEstimate t2_crossing(const PopulationTrace& trace);
CrossingEstimate t2_crossing_hinted(const PopulationTrace& trace, double omega_0_hint);

struct SensitivityReport {
  double s = 0.0;             // rad/s per sqrt(Hz), Rabi-rate sensitivity
  double s_b = 0.0;           // T per sqrt(Hz)
  double optimal_time = 0.0;  // s, signal time of the optimum
  double n_ions = 1.0;
  double t_add = 0.0;
  double duty = 0.0;          // t_pi/t_s overhead (0 for dressed)
};

// Shot-noise-limited sensitivity evaluated on the fitted model at the
// maximum-slope times; independent of n_shots by construction (checked
// numerically in the tests)
SensitivityReport sensitivity(const ContrastFit& fit, double omega_0, double n_ions,
                              int n_shots, double t_add, double duty);

struct T2Measurement {
  PopulationTrace trace;
  ContrastFit fit;
  CrossingEstimate crossing;
};

// Runs the protocol, doubling the span until the envelope crossing and
// its fit window fit inside the trace (or span_cap is hit). span_cap <= 0
// disables adaptation. The run's protocol fields define the initial
// span: t_s for dressed, n_cycles for the pulsed method. The reported
// crossing uses the trace-inferred period (strong static noise pulls the
// mean oscillation above the nominal gap); the hint only sizes the scan.
T2Measurement measure_t2(RunSpec spec, double omega_0_hint, double span_cap);

struct SweepCell {
  double t2 = 0.0;
  bool lower_bound = false;
};

std::vector<std::vector<SweepCell>> sweep_t2_grid(const std::vector<double>& sigma_b_list,
                                                  const std::vector<double>& omega_s_list,
                                                  Method method, const RunSpec& base,
                                                  double span_cap);

// T2 vs pi-pulse duration at fixed drive power; the idealized flag runs
// the same scan on the leakage-free two-level reduction
std::vector<std::pair<double, double>> scan_pi_duration(const std::vector<double>& t_pi_list,
                                                        const RunSpec& base,
                                                        double span_cap);

// oscillation contrast after the first 10 cycles vs phase offset
// phi_s - phi_pi, zero noise
std::vector<std::pair<double, double>> phase_scan(const std::vector<double>& phi_offsets,
                                                  const RunSpec& base);

} // namespace mdd
