#include "config.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "units.hpp"

namespace mdd {

using nlohmann::json;

namespace {

// longest first, so "_Hz_per_T" wins over "_Hz" and "_ms" over "_m"
const char* kUnitSuffixes[] = {
    "_Hz_per_T", "_uT_per_m", "_GHz", "_MHz", "_kHz", "_mHz", "_Hz",
    "_nT", "_uT", "_mT", "_T",  "_ns", "_us", "_ms", "_s",
    "_nm", "_um", "_mm", "_cm", "_m",  "_mrad", "_rad", "_deg",
};

std::string strip_unit(const std::string& key) {
  for (const char* suf : kUnitSuffixes) {
    std::size_t n = std::strlen(suf);
    if (key.size() > n && key.compare(key.size() - n, n, suf) == 0)
      return key.substr(0, key.size() - n);
  }
  return key;
}

const char* kKnownKeys[] = {
    "task", "seed", "workers", "out_dir", "cache_dir",
    "b0_T", "quadratic_zeeman", "gamma_Hz_per_T", "hyperfine_Hz",
    "mw_rabi_Hz", "effective_rabi_Hz", "signal_phase_rad", "pi_phase_rad",
    "method", "signal_segment_s", "pi_time_s", "n_cycles",
    "sigma_uT",
    "shots", "samples_per_period", "idealized_two_level", "span_cap_s",
    "ensemble", "ensemble_n_ions", "subsample", "axial_strata", "radial_strata",
    "semi_axes_mm", "rf_gradient",
    "coil_radius_m", "coil_spacing_m",
    "crystal_n_ions", "trap_Hz", "crystal_restarts", "crystal_max_iterations",
    "sweep_sigma_uT", "sweep_rabi_Hz", "sweep_shots",
    "tpi_grid_ms",
    "sensor_ions", "dead_time_s",
    "mw_wavelength_m", "micromotion_amplitude_um",
};

[[noreturn]] void schema_fail(const std::string& msg) {
  throw ConfigError(kExitSchema, "config: " + msg);
}

void reject_unknown_keys(const json& j) {
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    bool known = false;
    for (const char* k : kKnownKeys)
      if (key == k) { known = true; break; }
    if (known) continue;
    // a known parameter under the wrong unit is a units error, not a typo
    std::string base = strip_unit(key);
    for (const char* k : kKnownKeys) {
      if (strip_unit(k) == base)
        throw ConfigError(kExitUnits, "config: key \"" + key +
                                          "\" has the wrong unit suffix; expected \"" +
                                          k + "\"");
    }
    schema_fail("unknown key \"" + key + "\"");
  }
}

double get_double(const json& j, const char* key, double cur) {
  auto it = j.find(key);
  if (it == j.end()) return cur;
  if (!it->is_number()) schema_fail(std::string(key) + " must be a number");
  return it->get<double>();
}

long get_int(const json& j, const char* key, long cur) {
  auto it = j.find(key);
  if (it == j.end()) return cur;
  if (!it->is_number_integer()) schema_fail(std::string(key) + " must be an integer");
  return it->get<long>();
}

bool get_bool(const json& j, const char* key, bool cur) {
  auto it = j.find(key);
  if (it == j.end()) return cur;
  if (!it->is_boolean()) schema_fail(std::string(key) + " must be a boolean");
  return it->get<bool>();
}

std::string get_string(const json& j, const char* key, std::string cur) {
  auto it = j.find(key);
  if (it == j.end()) return cur;
  if (!it->is_string()) schema_fail(std::string(key) + " must be a string");
  return it->get<std::string>();
}

std::vector<double> get_array(const json& j, const char* key, std::vector<double> cur) {
  auto it = j.find(key);
  if (it == j.end()) return cur;
  if (!it->is_array() || it->empty())
    schema_fail(std::string(key) + " must be a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& v : *it) {
    if (!v.is_number()) schema_fail(std::string(key) + " must contain only numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::array<double, 3> get_triple(const json& j, const char* key, std::array<double, 3> cur) {
  auto it = j.find(key);
  if (it == j.end()) return cur;
  std::vector<double> v = get_array(j, key, {});
  if (v.size() != 3) schema_fail(std::string(key) + " must have exactly 3 entries");
  return {v[0], v[1], v[2]};
}

void require(bool ok, const std::string& msg) {
  if (!ok) schema_fail(msg);
}

void require_positive(double v, const char* key) {
  require(v > 0.0, std::string(key) + " must be positive");
}

} // namespace

void apply_json(AppConfig& cfg, const json& j) {
  if (!j.is_object()) schema_fail("top level must be an object");
  reject_unknown_keys(j);

  cfg.task = get_string(j, "task", cfg.task);
  {
    auto it = j.find("seed");
    if (it != j.end()) {
      if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() && it->get<long long>() < 0))
        schema_fail("seed must be a non-negative integer");
      cfg.seed = it->get<std::uint64_t>();
    }
  }
  cfg.workers = static_cast<int>(get_int(j, "workers", cfg.workers));
  require(cfg.workers >= 0, "workers must be >= 0");
  cfg.out_dir = get_string(j, "out_dir", cfg.out_dir);
  cfg.cache_dir = get_string(j, "cache_dir", cfg.cache_dir);

  cfg.b0_T = get_double(j, "b0_T", cfg.b0_T);
  require_positive(cfg.b0_T, "b0_T");
  cfg.quadratic_zeeman = get_bool(j, "quadratic_zeeman", cfg.quadratic_zeeman);
  cfg.gamma_Hz_per_T = get_double(j, "gamma_Hz_per_T", cfg.gamma_Hz_per_T);
  require_positive(cfg.gamma_Hz_per_T, "gamma_Hz_per_T");
  cfg.hyperfine_Hz = get_double(j, "hyperfine_Hz", cfg.hyperfine_Hz);
  require_positive(cfg.hyperfine_Hz, "hyperfine_Hz");

  cfg.mw_rabi_Hz = get_double(j, "mw_rabi_Hz", cfg.mw_rabi_Hz);
  require_positive(cfg.mw_rabi_Hz, "mw_rabi_Hz");
  cfg.effective_rabi_Hz = get_double(j, "effective_rabi_Hz", cfg.effective_rabi_Hz);
  require_positive(cfg.effective_rabi_Hz, "effective_rabi_Hz");
  cfg.signal_phase_rad = get_double(j, "signal_phase_rad", cfg.signal_phase_rad);
  cfg.pi_phase_rad = get_double(j, "pi_phase_rad", cfg.pi_phase_rad);

  cfg.method = get_string(j, "method", cfg.method);
  require(cfg.method == "dressed" || cfg.method == "mdd",
          "method must be \"dressed\" or \"mdd\"");
  cfg.signal_segment_s = get_double(j, "signal_segment_s", cfg.signal_segment_s);
  require_positive(cfg.signal_segment_s, "signal_segment_s");
  cfg.pi_time_s = get_double(j, "pi_time_s", cfg.pi_time_s);
  require_positive(cfg.pi_time_s, "pi_time_s");
  cfg.n_cycles = static_cast<int>(get_int(j, "n_cycles", cfg.n_cycles));
  require(cfg.n_cycles >= 0, "n_cycles must be >= 0");

  cfg.sigma_uT = get_double(j, "sigma_uT", cfg.sigma_uT);
  require(cfg.sigma_uT >= 0.0, "sigma_uT must be >= 0");

  cfg.shots = static_cast<int>(get_int(j, "shots", cfg.shots));
  require(cfg.shots >= 1, "shots must be >= 1");
  cfg.samples_per_period = static_cast<int>(get_int(j, "samples_per_period", cfg.samples_per_period));
  require(cfg.samples_per_period >= 4, "samples_per_period must be >= 4");
  cfg.idealized_two_level = get_bool(j, "idealized_two_level", cfg.idealized_two_level);
  cfg.span_cap_s = get_double(j, "span_cap_s", cfg.span_cap_s);
  require(cfg.span_cap_s >= 0.0, "span_cap_s must be >= 0");

  cfg.ensemble = get_bool(j, "ensemble", cfg.ensemble);
  cfg.ensemble_n_ions = static_cast<int>(get_int(j, "ensemble_n_ions", cfg.ensemble_n_ions));
  require(cfg.ensemble_n_ions >= 1, "ensemble_n_ions must be >= 1");
  cfg.subsample = static_cast<int>(get_int(j, "subsample", cfg.subsample));
  require(cfg.subsample >= 1, "subsample must be >= 1");
  cfg.axial_strata = static_cast<int>(get_int(j, "axial_strata", cfg.axial_strata));
  cfg.radial_strata = static_cast<int>(get_int(j, "radial_strata", cfg.radial_strata));
  require(cfg.axial_strata >= 1 && cfg.radial_strata >= 1, "strata counts must be >= 1");
  cfg.semi_axes_mm = get_triple(j, "semi_axes_mm", cfg.semi_axes_mm);
  for (double a : cfg.semi_axes_mm) require_positive(a, "semi_axes_mm");
  cfg.rf_gradient = get_bool(j, "rf_gradient", cfg.rf_gradient);

  cfg.coil_radius_m = get_double(j, "coil_radius_m", cfg.coil_radius_m);
  require_positive(cfg.coil_radius_m, "coil_radius_m");
  cfg.coil_spacing_m = get_double(j, "coil_spacing_m", cfg.coil_spacing_m);
  require_positive(cfg.coil_spacing_m, "coil_spacing_m");

  cfg.crystal_n_ions = static_cast<int>(get_int(j, "crystal_n_ions", cfg.crystal_n_ions));
  require(cfg.crystal_n_ions >= 1, "crystal_n_ions must be >= 1");
  cfg.trap_Hz = get_triple(j, "trap_Hz", cfg.trap_Hz);
  for (double f : cfg.trap_Hz) require_positive(f, "trap_Hz");
  cfg.crystal_restarts = static_cast<int>(get_int(j, "crystal_restarts", cfg.crystal_restarts));
  require(cfg.crystal_restarts >= 1, "crystal_restarts must be >= 1");
  cfg.crystal_max_iterations = get_int(j, "crystal_max_iterations", cfg.crystal_max_iterations);
  require(cfg.crystal_max_iterations >= 1, "crystal_max_iterations must be >= 1");

  cfg.sweep_sigma_uT = get_array(j, "sweep_sigma_uT", cfg.sweep_sigma_uT);
  for (double s : cfg.sweep_sigma_uT) require_positive(s, "sweep_sigma_uT");
  cfg.sweep_rabi_Hz = get_array(j, "sweep_rabi_Hz", cfg.sweep_rabi_Hz);
  for (double f : cfg.sweep_rabi_Hz) require_positive(f, "sweep_rabi_Hz");
  cfg.sweep_shots = static_cast<int>(get_int(j, "sweep_shots", cfg.sweep_shots));
  require(cfg.sweep_shots >= 1, "sweep_shots must be >= 1");

  cfg.tpi_grid_ms = get_array(j, "tpi_grid_ms", cfg.tpi_grid_ms);
  for (double t : cfg.tpi_grid_ms) require_positive(t, "tpi_grid_ms");

  cfg.sensor_ions = get_double(j, "sensor_ions", cfg.sensor_ions);
  require(cfg.sensor_ions >= 1.0, "sensor_ions must be >= 1");
  cfg.dead_time_s = get_double(j, "dead_time_s", cfg.dead_time_s);
  require(cfg.dead_time_s >= 0.0, "dead_time_s must be >= 0");

  cfg.mw_wavelength_m = get_double(j, "mw_wavelength_m", cfg.mw_wavelength_m);
  require_positive(cfg.mw_wavelength_m, "mw_wavelength_m");
  cfg.micromotion_amplitude_um = get_double(j, "micromotion_amplitude_um", cfg.micromotion_amplitude_um);
  require(cfg.micromotion_amplitude_um >= 0.0, "micromotion_amplitude_um must be >= 0");
}

AppConfig load_config(const std::string& path, const std::string& task) {
  AppConfig cfg;
  cfg.task = task;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) schema_fail("cannot open \"" + path + "\"");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      schema_fail(std::string("parse error: ") + e.what());
    }
    apply_json(cfg, j);
    if (!task.empty() && cfg.task != task)
      schema_fail("file is for task \"" + cfg.task + "\", invoked as \"" + task + "\"");
  }
  return cfg;
}

json config_to_json(const AppConfig& cfg) {
  json j;
  j["task"] = cfg.task;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["out_dir"] = cfg.out_dir;
  j["cache_dir"] = cfg.cache_dir;
  j["b0_T"] = cfg.b0_T;
  j["quadratic_zeeman"] = cfg.quadratic_zeeman;
  j["gamma_Hz_per_T"] = cfg.gamma_Hz_per_T;
  j["hyperfine_Hz"] = cfg.hyperfine_Hz;
  j["mw_rabi_Hz"] = cfg.mw_rabi_Hz;
  j["effective_rabi_Hz"] = cfg.effective_rabi_Hz;
  j["signal_phase_rad"] = cfg.signal_phase_rad;
  j["pi_phase_rad"] = cfg.pi_phase_rad;
  j["method"] = cfg.method;
  j["signal_segment_s"] = cfg.signal_segment_s;
  j["pi_time_s"] = cfg.pi_time_s;
  j["n_cycles"] = cfg.n_cycles;
  j["sigma_uT"] = cfg.sigma_uT;
  j["shots"] = cfg.shots;
  j["samples_per_period"] = cfg.samples_per_period;
  j["idealized_two_level"] = cfg.idealized_two_level;
  j["span_cap_s"] = cfg.span_cap_s;
  j["ensemble"] = cfg.ensemble;
  j["ensemble_n_ions"] = cfg.ensemble_n_ions;
  j["subsample"] = cfg.subsample;
  j["axial_strata"] = cfg.axial_strata;
  j["radial_strata"] = cfg.radial_strata;
  j["semi_axes_mm"] = cfg.semi_axes_mm;
  j["rf_gradient"] = cfg.rf_gradient;
  j["coil_radius_m"] = cfg.coil_radius_m;
  j["coil_spacing_m"] = cfg.coil_spacing_m;
  j["crystal_n_ions"] = cfg.crystal_n_ions;
  j["trap_Hz"] = cfg.trap_Hz;
  j["crystal_restarts"] = cfg.crystal_restarts;
  j["crystal_max_iterations"] = cfg.crystal_max_iterations;
  j["sweep_sigma_uT"] = cfg.sweep_sigma_uT;
  j["sweep_rabi_Hz"] = cfg.sweep_rabi_Hz;
  j["sweep_shots"] = cfg.sweep_shots;
  j["tpi_grid_ms"] = cfg.tpi_grid_ms;
  j["sensor_ions"] = cfg.sensor_ions;
  j["dead_time_s"] = cfg.dead_time_s;
  j["mw_wavelength_m"] = cfg.mw_wavelength_m;
  j["micromotion_amplitude_um"] = cfg.micromotion_amplitude_um;
  return j;
}

HyperfineLevels make_levels(const AppConfig& cfg) {
  HyperfineLevels lv;
  lv.omega_hfs = angular(cfg.hyperfine_Hz);
  lv.gyromagnetic = angular(cfg.gamma_Hz_per_T);
  // second-order repulsion of |+-1> from the clock pair: -gamma^2/omega_hfs
  lv.quadratic_coeff =
      cfg.quadratic_zeeman ? -lv.gyromagnetic * lv.gyromagnetic / lv.omega_hfs : 0.0;
  return lv;
}

DriveSet make_drives(const AppConfig& cfg) {
  DriveSet d;
  d.omega_mw = angular(cfg.mw_rabi_Hz);
  d.omega_s = std::sqrt(2.0) * angular(cfg.effective_rabi_Hz);
  d.omega_pi = std::sqrt(2.0) * pi / cfg.pi_time_s;
  d.phi_s = cfg.signal_phase_rad;
  d.phi_pi = cfg.pi_phase_rad;
  d.nominal_field = cfg.b0_T;
  return d;
}

ProtocolConfig make_protocol(const AppConfig& cfg) {
  ProtocolConfig p;
  p.method = (cfg.method == "mdd") ? Method::mdd : Method::dressed;
  p.t_s = cfg.signal_segment_s;
  p.t_pi = cfg.pi_time_s;
  p.n_cycles = cfg.n_cycles > 0 ? cfg.n_cycles : 1;
  p.phi_s = cfg.signal_phase_rad;
  p.phi_pi = cfg.pi_phase_rad;
  return p;
}

ShotNoiseSpec make_noise(const AppConfig& cfg) {
  return ShotNoiseSpec::from_sigma(cfg.b0_T, cfg.sigma_uT * 1e-6, cfg.seed);
}

TrapConfig make_trap(const AppConfig& cfg) {
  TrapConfig t;
  t.omega_x = angular(cfg.trap_Hz[0]);
  t.omega_y = angular(cfg.trap_Hz[1]);
  t.omega_z = angular(cfg.trap_Hz[2]);
  return t;
}

CoilPair make_coils(const AppConfig& cfg) {
  CoilPair pair;
  pair.radius = cfg.coil_radius_m;
  pair.spacing = cfg.coil_spacing_m;
  pair.b0 = cfg.b0_T;
  return pair;
}

RunSpec make_runspec(const AppConfig& cfg) {
  RunSpec spec;
  spec.levels = make_levels(cfg);
  spec.drives = make_drives(cfg);
  spec.protocol = make_protocol(cfg);
  spec.noise = make_noise(cfg);
  spec.shots_per_point = cfg.shots;
  spec.samples_per_period = cfg.samples_per_period;
  spec.idealized_two_level = cfg.idealized_two_level;
  spec.workers = cfg.workers;
  return spec;
}

} // namespace mdd
