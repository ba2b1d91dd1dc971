#pragma once
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>
#include "json.hpp"
#include "crystal.hpp"
#include "experiment.hpp"

namespace mdd {

// Distinct process exit codes, stable across releases.
enum ExitCode : int {
  kExitOk = 0,
  kExitGeneric = 1,
  kExitSchema = 2,    // unknown key, wrong type, out-of-range value
  kExitUnits = 3,     // known parameter spelled with the wrong unit suffix
  kExitCache = 4,     // cache entry failed its integrity check
  kExitRuntime = 5,   // solver / fit did not converge, degenerate result
};

struct ConfigError : std::runtime_error {
  int exit_code;
  ConfigError(int code, const std::string& what)
      : std::runtime_error(what), exit_code(code) {}
};

// Every physical key in the file carries its unit as a suffix. All
// "_Hz" values are cycles per second (ordinary frequencies); the library
// works in angular rad/s, converted here and nowhere else.
struct AppConfig {
  // resolved run identity
  std::string task;            // subcommand name, echoed into summaries
  std::uint64_t seed = 1;
  int workers = 0;             // 0: all available cores
  std::string out_dir = "out";
  std::string cache_dir;       // empty: $MDDSIM_CACHE or <out>/cache

  // field
  double b0_T = 0.765e-3;
  bool quadratic_zeeman = true;    // second-order Zeeman term on the +-1 pair
  double gamma_Hz_per_T = 14.0e9;  // linear Zeeman slope of |+1>, per tesla
  double hyperfine_Hz = 12.6428e9;

  // drives
  double mw_rabi_Hz = 25e3;        // each dressing tone
  double effective_rabi_Hz = 1.0;  // |0><->|D> oscillation rate, = signal drive / sqrt(2)
  double signal_phase_rad = 0.0;
  double pi_phase_rad = 0.0;

  // pulse protocol
  std::string method = "mdd";      // "dressed" | "mdd"
  double signal_segment_s = 20e-3;
  double pi_time_s = 6.3e-3;
  int n_cycles = 0;                // 0: adaptive span search picks it

  // shot-to-shot field noise
  double sigma_uT = 0.05;          // Gaussian width (sigma, not FWHM)

  // trace/estimation controls
  int shots = 200;
  int samples_per_period = 40;
  bool idealized_two_level = false;
  double span_cap_s = 0.0;         // 0: protocol-derived default

  // ensemble surrogate (smooth field over the occupied volume)
  bool ensemble = false;
  int ensemble_n_ions = 10000;
  int subsample = 500;
  int axial_strata = 10;
  int radial_strata = 5;
  std::array<double, 3> semi_axes_mm = {0.05, 0.075, 0.725};
  bool rf_gradient = true;         // scale the RF drive with the local field

  // bias coil pair
  double coil_radius_m = 0.05;
  double coil_spacing_m = 0.10;

  // crystal relaxation
  int crystal_n_ions = 1000;
  std::array<double, 3> trap_Hz = {0.7e6, 0.58e6, 0.12e6};
  int crystal_restarts = 1;
  long crystal_max_iterations = 40000;

  // sweep grid
  std::vector<double> sweep_sigma_uT = {0.02, 0.05, 0.1};
  std::vector<double> sweep_rabi_Hz = {0.5, 1.0, 5.0};
  int sweep_shots = 64;

  // pi-duration scan
  std::vector<double> tpi_grid_ms = {0.5, 2.0, 6.3, 20.0, 50.0};

  // sensitivity
  double sensor_ions = 1.0;        // N in the 1/sqrt(N) projection-noise scaling
  double dead_time_s = 20e-3;      // state preparation + detection per shot

  // micromotion
  double mw_wavelength_m = 0.0238;
  double micromotion_amplitude_um = 30.0;
};

// Defaults above, overlaid with the file at `path` (if nonempty).
// Unknown keys, type errors and range errors throw ConfigError(kExitSchema);
// a known parameter under a wrong unit suffix throws ConfigError(kExitUnits).
AppConfig load_config(const std::string& path, const std::string& task);
void apply_json(AppConfig& cfg, const nlohmann::json& j);

// Fully-resolved echo; feeding it back through load_config reproduces the run.
nlohmann::json config_to_json(const AppConfig& cfg);

// boundary converters into the library's angular-frequency structs
HyperfineLevels make_levels(const AppConfig& cfg);
DriveSet make_drives(const AppConfig& cfg);
ProtocolConfig make_protocol(const AppConfig& cfg);
ShotNoiseSpec make_noise(const AppConfig& cfg);
TrapConfig make_trap(const AppConfig& cfg);
CoilPair make_coils(const AppConfig& cfg);
RunSpec make_runspec(const AppConfig& cfg);  // ensemble left at center_ion()

} // namespace mdd
