#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cache.hpp"
#include "config.hpp"
#include "units.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mdd;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr std::size_t kMaxTracePoints = 20000;  // thinning applies at write time only

std::string num(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.12g", v);
  return b;
}

std::string num17(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

// temp file + rename: a killed run never leaves a half-written output
void write_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

void emit(const AppConfig& cfg, const std::string& name, const std::string& content) {
  fs::create_directories(cfg.out_dir);
  write_atomic(cfg.out_dir + "/" + name, content);
}

void emit_summary(const AppConfig& cfg, const json& results) {
  json j;
  j["version"] = kVersion;
  j["task"] = cfg.task;
  j["results"] = results;
  j["config"] = config_to_json(cfg);  // feeding this back reproduces the run
  emit(cfg, "summary.json", j.dump(2) + "\n");
}

std::string resolve_cache_root(const AppConfig& cfg) {
  if (!cfg.cache_dir.empty()) return cfg.cache_dir;
  if (const char* env = std::getenv("MDDSIM_CACHE"); env && *env) return env;
  return cfg.out_dir + "/cache";
}

// ---------------------------------------------------------------- crystal

std::string crystal_payload(const IonEnsemble& ens) {
  std::ostringstream out;
  out << "energy " << num17(ens.converged_energy) << "\n"
      << "residual " << num17(ens.max_residual_force) << "\n"
      << "converged " << (ens.converged ? 1 : 0) << "\n"
      << "iterations " << ens.iterations << "\n"
      << "n " << ens.positions.size() << "\n";
  for (const auto& p : ens.positions)
    out << num17(p[0]) << " " << num17(p[1]) << " " << num17(p[2]) << "\n";
  return out.str();
}

IonEnsemble parse_crystal_payload(const std::string& payload) {
  std::istringstream in(payload);
  IonEnsemble ens;
  std::string tag;
  int converged = 0;
  std::size_t n = 0;
  if (!(in >> tag >> ens.converged_energy) || tag != "energy")
    throw CacheError("cache: bad crystal payload");
  if (!(in >> tag >> ens.max_residual_force) || tag != "residual")
    throw CacheError("cache: bad crystal payload");
  if (!(in >> tag >> converged) || tag != "converged")
    throw CacheError("cache: bad crystal payload");
  if (!(in >> tag >> ens.iterations) || tag != "iterations")
    throw CacheError("cache: bad crystal payload");
  if (!(in >> tag >> n) || tag != "n") throw CacheError("cache: bad crystal payload");
  ens.converged = converged != 0;
  ens.positions.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!(in >> ens.positions[i][0] >> ens.positions[i][1] >> ens.positions[i][2]))
      throw CacheError("cache: bad crystal payload");
  return ens;
}

IonEnsemble cached_crystal(const AppConfig& cfg) {
  ArtifactCache cache(resolve_cache_root(cfg));
  json key;
  key["n"] = cfg.crystal_n_ions;
  key["trap_Hz"] = cfg.trap_Hz;
  key["restarts"] = cfg.crystal_restarts;
  key["max_iterations"] = cfg.crystal_max_iterations;
  if (auto hit = cache.load("crystal", key, cfg.seed)) return parse_crystal_payload(*hit);

  MDParams md;
  md.restarts = cfg.crystal_restarts;
  md.max_iterations = cfg.crystal_max_iterations;
  md.parallel = cfg.workers != 1;
  IonEnsemble ens = solve_equilibrium(cfg.crystal_n_ions, make_trap(cfg), md, cfg.seed);
  cache.store("crystal", key, cfg.seed, crystal_payload(ens));
  return ens;
}

int cmd_crystal(const AppConfig& cfg) {
  IonEnsemble ens = cached_crystal(cfg);

  std::ostringstream csv;
  csv << "x_m,y_m,z_m\n";
  for (const auto& p : ens.positions)
    csv << num17(p[0]) << "," << num17(p[1]) << "," << num17(p[2]) << "\n";
  emit(cfg, "positions.csv", csv.str());

  auto ext = crystal_extents(ens);
  double n0 = cold_fluid_density(make_trap(cfg));
  double bulk = cfg.crystal_n_ions >= 50 ? bulk_density(ens) : 0.0;
  json r;
  r["n_ions"] = cfg.crystal_n_ions;
  r["energy_J"] = ens.converged_energy;
  r["converged"] = ens.converged;
  r["iterations"] = ens.iterations;
  r["max_residual_force_N"] = ens.max_residual_force;
  r["extents_m"] = ext;
  r["cold_fluid_density_per_m3"] = n0;
  if (bulk > 0.0) {
    r["bulk_density_per_m3"] = bulk;
    r["bulk_to_cold_fluid_ratio"] = bulk / n0;
  }
  emit_summary(cfg, r);
  return kExitOk;
}

// --------------------------------------------------------------- fieldmap

std::string fieldmap_csv(const AppConfig& cfg, int n_axial, int n_radial) {
  CoilPair pair = make_coils(cfg);
  double z_max = cfg.semi_axes_mm[2] * 1e-3;
  double r_max = std::max(cfg.semi_axes_mm[0], cfg.semi_axes_mm[1]) * 1e-3;
  double rr = pair.radius * pair.radius;
  std::ostringstream csv;
  csv << "axis,coord_m,b_T,frac_offset,taylor_frac\n";
  for (int i = 0; i < n_axial; ++i) {
    double z = -z_max + 2.0 * z_max * i / (n_axial - 1);
    double b = coil_pair_field(pair, {0.0, 0.0, z})[2];
    csv << "z," << num(z) << "," << num17(b) << "," << num17(b / pair.b0 - 1.0) << ","
        << num17(1.125 * z * z / rr) << "\n";
  }
  for (int i = 0; i < n_radial; ++i) {
    double x = r_max * i / (n_radial - 1);
    double b = coil_pair_field(pair, {x, 0.0, 0.0})[2];
    csv << "r," << num(x) << "," << num17(b) << "," << num17(b / pair.b0 - 1.0) << ","
        << num17(-0.5625 * x * x / rr) << "\n";
  }
  return csv.str();
}

int cmd_fieldmap(const AppConfig& cfg) {
  const int n_axial = 201, n_radial = 101;
  ArtifactCache cache(resolve_cache_root(cfg));
  json key;
  key["radius_m"] = cfg.coil_radius_m;
  key["spacing_m"] = cfg.coil_spacing_m;
  key["b0_T"] = cfg.b0_T;
  key["semi_axes_mm"] = cfg.semi_axes_mm;
  key["n_axial"] = n_axial;
  key["n_radial"] = n_radial;

  std::string csv;
  if (auto hit = cache.load("fieldmap", key, 0)) {
    csv = *hit;
  } else {
    csv = fieldmap_csv(cfg, n_axial, n_radial);
    cache.store("fieldmap", key, 0, csv);
  }
  emit(cfg, "fieldmap.csv", csv);

  CoilPair pair = make_coils(cfg);
  double z_max = cfg.semi_axes_mm[2] * 1e-3;
  double r_max = std::max(cfg.semi_axes_mm[0], cfg.semi_axes_mm[1]) * 1e-3;
  double rr = pair.radius * pair.radius;
  double axial = coil_pair_field(pair, {0.0, 0.0, z_max})[2] / pair.b0 - 1.0;
  double radial = coil_pair_field(pair, {r_max, 0.0, 0.0})[2] / pair.b0 - 1.0;
  double taylor_axial = 1.125 * z_max * z_max / rr;
  double taylor_radial = -0.5625 * r_max * r_max / rr;
  json r;
  r["axial_frac_at_edge"] = axial;
  r["taylor_axial_at_edge"] = taylor_axial;
  r["axial_rel_err_vs_taylor"] = std::abs(axial / taylor_axial - 1.0);
  r["radial_frac_at_edge"] = radial;
  r["taylor_radial_at_edge"] = taylor_radial;
  r["radial_rel_err_vs_taylor"] = std::abs(radial / taylor_radial - 1.0);
  emit_summary(cfg, r);
  return kExitOk;
}

// --------------------------------------------------------- t2/sensitivity

void attach_ensemble(const AppConfig& cfg, RunSpec& spec) {
  if (!cfg.ensemble) return;
  std::array<double, 3> semi = {cfg.semi_axes_mm[0] * 1e-3, cfg.semi_axes_mm[1] * 1e-3,
                                cfg.semi_axes_mm[2] * 1e-3};
  auto positions = ellipsoid_positions(cfg.ensemble_n_ions, semi, cfg.seed);
  EnsembleDef full = ensemble_from_map(make_coils(cfg), positions, cfg.rf_gradient);
  spec.ensemble = stratified_subsample(full, positions, cfg.subsample, cfg.axial_strata,
                                       cfg.radial_strata, cfg.seed);
}

// n_cycles = 0: adaptive span search from a few-period initial trace.
// n_cycles > 0 pins the span (dressed: signal_segment_s total).
T2Measurement run_measurement(const AppConfig& cfg) {
  RunSpec spec = make_runspec(cfg);
  attach_ensemble(cfg, spec);
  double omega0 = angular(cfg.effective_rabi_Hz);
  double period = two_pi / omega0;
  double cap = 0.0;
  if (cfg.n_cycles == 0) {
    if (spec.protocol.method == Method::dressed) {
      spec.protocol.t_s = 4.0 * period;
    } else {
      spec.protocol.n_cycles = std::max(
          1, static_cast<int>(std::ceil(32.0 * period / (2.0 * spec.protocol.t_s))));
    }
    cap = cfg.span_cap_s > 0.0 ? cfg.span_cap_s : 4096.0 * period;
  }
  return measure_t2(spec, omega0, cap);
}

std::string trace_csv(const PopulationTrace& trace, std::size_t* written = nullptr) {
  std::size_t n = trace.signal_time.size();
  std::size_t stride = n > kMaxTracePoints ? (n + kMaxTracePoints - 1) / kMaxTracePoints : 1;
  std::ostringstream csv;
  csv << "signal_time_s,p_mean,p_std\n";
  std::size_t count = 0;
  std::size_t last = n ? n - 1 : 0;
  for (std::size_t i = 0; i < n; i += stride) {
    csv << num(trace.signal_time[i]) << "," << num(trace.p_mean[i]) << ","
        << num(trace.p_std[i]) << "\n";
    ++count;
    if (i != last && i + stride > last) {  // always keep the endpoint
      csv << num(trace.signal_time[last]) << "," << num(trace.p_mean[last]) << ","
          << num(trace.p_std[last]) << "\n";
      ++count;
    }
  }
  if (written) *written = count;
  return csv.str();
}

json fit_to_json(const T2Measurement& m) {
  json r;
  r["t2_s"] = m.crossing.t2;  // 1/e contrast crossing, the headline estimate
  r["lower_bound"] = m.crossing.lower_bound;
  r["fit_t2_s"] = m.fit.t2;
  r["fit_stretch"] = m.fit.stretch;
  r["fit_rabi_Hz"] = m.fit.rabi_freq_fit / two_pi;
  r["fit_residual_ssr"] = m.fit.residual;
  r["fit_lower_bound"] = m.fit.lower_bound;
  r["fit_window_s"] = m.fit.fit_window;
  r["span_s"] = m.trace.signal_time.empty() ? 0.0 : m.trace.signal_time.back();
  r["trace_points"] = m.trace.signal_time.size();
  return r;
}

int cmd_t2(const AppConfig& cfg) {
  T2Measurement m = run_measurement(cfg);
  std::size_t written = 0;
  emit(cfg, "trace.csv", trace_csv(m.trace, &written));
  json r = fit_to_json(m);
  r["method"] = cfg.method;
  r["ensemble"] = cfg.ensemble;
  r["trace_points_written"] = written;
  emit_summary(cfg, r);
  return kExitOk;
}

int cmd_sensitivity(const AppConfig& cfg) {
  T2Measurement m = run_measurement(cfg);
  double duty = cfg.method == "mdd" ? cfg.pi_time_s / cfg.signal_segment_s : 0.0;
  SensitivityReport rep = sensitivity(m.fit, angular(cfg.effective_rabi_Hz),
                                      cfg.sensor_ions, cfg.shots, cfg.dead_time_s, duty);
  emit(cfg, "trace.csv", trace_csv(m.trace));
  json r = fit_to_json(m);
  r["method"] = cfg.method;
  r["ensemble"] = cfg.ensemble;
  r["n_sensor_ions"] = rep.n_ions;
  r["duty"] = rep.duty;
  r["dead_time_s"] = rep.t_add;
  r["optimal_time_s"] = rep.optimal_time;
  r["s_rabi_rad_per_sqrtHz"] = rep.s;
  r["s_b_T_per_sqrtHz"] = rep.s_b;
  r["s_b_pT_per_sqrtHz"] = rep.s_b * 1e12;
  emit_summary(cfg, r);
  return kExitOk;
}

// ------------------------------------------------------------- sweep/scan

int cmd_sweep(const AppConfig& cfg) {
  RunSpec base = make_runspec(cfg);
  base.shots_per_point = cfg.sweep_shots;
  std::vector<double> sigma_T, omega_s;
  for (double s : cfg.sweep_sigma_uT) sigma_T.push_back(s * 1e-6);
  for (double f : cfg.sweep_rabi_Hz) omega_s.push_back(std::sqrt(2.0) * angular(f));
  double slowest = two_pi / angular(*std::min_element(cfg.sweep_rabi_Hz.begin(),
                                                      cfg.sweep_rabi_Hz.end()));
  double cap = cfg.span_cap_s > 0.0 ? cfg.span_cap_s : 4096.0 * slowest;

  auto dressed = sweep_t2_grid(sigma_T, omega_s, Method::dressed, base, cap);
  auto mdd_grid = sweep_t2_grid(sigma_T, omega_s, Method::mdd, base, cap);

  std::ostringstream csv;
  csv << "sigma_uT,rabi_Hz,dressed_t2_s,dressed_lower_bound,mdd_t2_s,mdd_lower_bound,"
         "ratio\n";
  double min_ratio = 0.0, max_ratio = 0.0;
  bool first = true;
  bool monotone = true;
  for (std::size_t ib = 0; ib < sigma_T.size(); ++ib) {
    for (std::size_t io = 0; io < omega_s.size(); ++io) {
      const SweepCell& d = dressed[ib][io];
      const SweepCell& p = mdd_grid[ib][io];
      double ratio = p.t2 / d.t2;
      csv << num(cfg.sweep_sigma_uT[ib]) << "," << num(cfg.sweep_rabi_Hz[io]) << ","
          << num(d.t2) << "," << (d.lower_bound ? 1 : 0) << "," << num(p.t2) << ","
          << (p.lower_bound ? 1 : 0) << "," << num(ratio) << "\n";
      if (first || ratio < min_ratio) min_ratio = ratio;
      if (first || ratio > max_ratio) max_ratio = ratio;
      first = false;
      if (ib > 0 && dressed[ib][io].t2 >= dressed[ib - 1][io].t2) monotone = false;
    }
  }
  emit(cfg, "sweep.csv", csv.str());

  json r;
  r["min_mdd_to_dressed_ratio"] = min_ratio;
  r["max_mdd_to_dressed_ratio"] = max_ratio;
  r["dressed_t2_monotone_decreasing_in_sigma"] = monotone;
  emit_summary(cfg, r);
  return kExitOk;
}

int cmd_tpi_scan(const AppConfig& cfg) {
  AppConfig mdd_cfg = cfg;
  mdd_cfg.method = "mdd";
  RunSpec base = make_runspec(mdd_cfg);
  double omega0 = angular(cfg.effective_rabi_Hz);
  double period = two_pi / omega0;
  if (cfg.n_cycles == 0)
    base.protocol.n_cycles = std::max(
        1, static_cast<int>(std::ceil(32.0 * period / (2.0 * base.protocol.t_s))));
  double cap = cfg.span_cap_s > 0.0 ? cfg.span_cap_s : 4096.0 * period;

  std::vector<double> grid_s;
  for (double ms : cfg.tpi_grid_ms) grid_s.push_back(ms * 1e-3);
  auto physical = scan_pi_duration(grid_s, base, cap);
  RunSpec ideal = base;
  ideal.idealized_two_level = true;
  auto idealized = scan_pi_duration(grid_s, ideal, cap);

  std::ostringstream csv;
  csv << "tpi_ms,t2_s,t2_idealized_s\n";
  for (std::size_t i = 0; i < grid_s.size(); ++i)
    csv << num(cfg.tpi_grid_ms[i]) << "," << num(physical[i].second) << ","
        << num(idealized[i].second) << "\n";
  emit(cfg, "tpi_scan.csv", csv.str());

  auto interior_max = [](const std::vector<std::pair<double, double>>& curve) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < curve.size(); ++i)
      if (curve[i].second > curve[arg].second) arg = i;
    return arg > 0 && arg + 1 < curve.size();
  };
  json r;
  r["interior_maximum"] = interior_max(physical);
  r["interior_maximum_idealized"] = interior_max(idealized);
  std::size_t arg = 0;
  for (std::size_t i = 1; i < physical.size(); ++i)
    if (physical[i].second > physical[arg].second) arg = i;
  r["best_tpi_ms"] = cfg.tpi_grid_ms[arg];
  r["best_t2_s"] = physical[arg].second;
  emit_summary(cfg, r);
  return kExitOk;
}

// ------------------------------------------------------------ micromotion

int cmd_micromotion(const AppConfig& cfg) {
  double xm = cfg.micromotion_amplitude_um * 1e-6;
  double k_mw = two_pi / cfg.mw_wavelength_m;
  double omega_plus = zeeman_splittings(make_levels(cfg), cfg.b0_T).first;
  double k_rf = omega_plus / c_light;

  std::ostringstream csv;
  csv << "tone,wavevector_per_m,amplitude_m,bessel_factor,deviation\n";
  json r;
  for (auto [tone, k] : {std::pair<const char*, double>{"mw", k_mw}, {"rf", k_rf}}) {
    double j0 = rabi_micromotion_factor(k, xm);
    csv << tone << "," << num(k) << "," << num(xm) << "," << num17(j0) << ","
        << num17(1.0 - j0) << "\n";
    r[tone] = {{"wavevector_per_m", k}, {"deviation", 1.0 - j0}};
  }
  r["mw_below_1e-4"] = r["mw"]["deviation"].get<double>() < 1e-4;
  r["rf_below_1e-8"] = r["rf"]["deviation"].get<double>() < 1e-8;
  emit(cfg, "micromotion.csv", csv.str());
  emit_summary(cfg, r);
  return kExitOk;
}

// ------------------------------------------------------------------ main

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string cache_dir;
  std::uint64_t seed = 0;
  int workers = -1;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* cache_opt = nullptr;
};

void add_common(CLI::App* sub, CommonFlags& fl) {
  sub->add_option("--config", fl.config_path, "JSON config file (defaults apply otherwise)");
  fl.seed_opt = sub->add_option("--seed", fl.seed, "global random seed");
  fl.workers_opt = sub->add_option("--workers", fl.workers, "worker threads (0: all cores)");
  fl.out_opt = sub->add_option("--out", fl.out_dir, "output directory");
  fl.cache_opt = sub->add_option("--cache", fl.cache_dir, "artifact cache directory");
}

AppConfig resolve(const CommonFlags& fl, const std::string& task) {
  AppConfig cfg = load_config(fl.config_path, task);
  if (fl.seed_opt->count()) cfg.seed = fl.seed;
  if (fl.workers_opt->count()) {
    if (fl.workers < 0) throw ConfigError(kExitSchema, "config: workers must be >= 0");
    cfg.workers = fl.workers;
  }
  if (fl.out_opt->count()) cfg.out_dir = fl.out_dir;
  if (fl.cache_opt->count()) cfg.cache_dir = fl.cache_dir;
  cfg.cache_dir = resolve_cache_root(cfg);  // pin into the echo
  if (cfg.workers > 0) omp_set_num_threads(cfg.workers);
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixed dynamical decoupling magnetometry toolkit"};
  app.require_subcommand(1);

  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const AppConfig&);
    CommonFlags flags;
    CLI::App* sub = nullptr;
  };
  Entry entries[] = {
      {"crystal", "relax N ions to their trap equilibrium positions", cmd_crystal, {}, nullptr},
      {"fieldmap", "bias-coil field profile over the crystal volume", cmd_fieldmap, {}, nullptr},
      {"t2", "coherence-time measurement for one protocol", cmd_t2, {}, nullptr},
      {"sweep", "T2 grid over noise width x drive rate, both protocols", cmd_sweep, {}, nullptr},
      {"tpi-scan", "T2 versus pi-pulse duration at fixed drive power", cmd_tpi_scan, {}, nullptr},
      {"sensitivity", "shot-noise-limited field sensitivity from a fitted trace", cmd_sensitivity, {}, nullptr},
      {"micromotion", "residual Rabi-rate deviation from driven motion", cmd_micromotion, {}, nullptr},
  };
  for (Entry& e : entries) {
    e.sub = app.add_subcommand(e.name, e.help);
    add_common(e.sub, e.flags);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitGeneric;
  }

  try {
    for (Entry& e : entries) {
      if (e.sub->parsed()) {
        AppConfig cfg = resolve(e.flags, e.name);
        return e.run(cfg);
      }
    }
    return kExitGeneric;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return e.exit_code;
  } catch (const CacheError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitCache;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  } catch (...) {
    return kExitGeneric;
  }
}
