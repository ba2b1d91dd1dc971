#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "config.hpp"
#include "units.hpp"

using namespace mdd;
using nlohmann::json;

namespace {

int thrown_code(const json& j) {
  AppConfig cfg;
  try {
    apply_json(cfg, j);
  } catch (const ConfigError& e) {
    return e.exit_code;
  }
  return 0;
}

} // namespace

TEST_SUITE("config") {

TEST_CASE("defaults resolve to the nominal operating point") {
  AppConfig cfg = load_config("", "t2");
  CHECK(cfg.task == "t2");
  CHECK(cfg.b0_T == doctest::Approx(0.765e-3));
  CHECK(cfg.mw_rabi_Hz == doctest::Approx(25e3));
  CHECK(cfg.signal_segment_s == doctest::Approx(20e-3));
  CHECK(cfg.pi_time_s == doctest::Approx(6.3e-3));
  CHECK(cfg.dead_time_s == doctest::Approx(20e-3));

  DriveSet d = make_drives(cfg);
  CHECK(d.omega_mw == doctest::Approx(angular(25e3)));
  CHECK(d.omega_s == doctest::Approx(std::sqrt(2.0) * angular(1.0)));
  // the echo pulse at the default duration inverts in exactly pi_time_s
  CHECK(std::sqrt(2.0) * pi / d.omega_pi == doctest::Approx(6.3e-3));

  HyperfineLevels lv = make_levels(cfg);
  CHECK(lv.quadratic_coeff == doctest::Approx(-9.741e10).epsilon(1e-3));

  AppConfig flat = cfg;
  flat.quadratic_zeeman = false;
  CHECK(make_levels(flat).quadratic_coeff == 0.0);
}

TEST_CASE("unknown keys are schema errors") {
  CHECK(thrown_code({{"bogus_key", 1.0}}) == kExitSchema);
  CHECK(thrown_code({{"shots", "many"}}) == kExitSchema);
  CHECK(thrown_code({{"shots", 0}}) == kExitSchema);
  CHECK(thrown_code({{"method", "ramsey"}}) == kExitSchema);
  CHECK(thrown_code({{"semi_axes_mm", {1.0, 2.0}}}) == kExitSchema);
  CHECK(thrown_code({{"seed", -4}}) == kExitSchema);
  CHECK(thrown_code(json::array({1, 2, 3})) == kExitSchema);
}

TEST_CASE("a known parameter under the wrong unit suffix is a units error") {
  CHECK(thrown_code({{"b0_mT", 0.765}}) == kExitUnits);
  CHECK(thrown_code({{"sigma_T", 5e-8}}) == kExitUnits);
  CHECK(thrown_code({{"pi_time_ms", 6.3}}) == kExitUnits);
  CHECK(thrown_code({{"mw_rabi_kHz", 25.0}}) == kExitUnits);
  CHECK(thrown_code({{"coil_radius_mm", 50.0}}) == kExitUnits);
  CHECK(thrown_code({{"sigma", 0.05}}) == kExitUnits);  // missing suffix entirely
}

TEST_CASE("echo round-trips exactly") {
  AppConfig cfg = load_config("", "sweep");
  cfg.seed = 99;
  cfg.sigma_uT = 0.07;
  cfg.method = "dressed";
  cfg.sweep_rabi_Hz = {0.5, 2.5};
  json echo = config_to_json(cfg);

  AppConfig back;
  apply_json(back, echo);
  CHECK(config_to_json(back).dump() == echo.dump());
}

TEST_CASE("file loading: parse errors and task mismatch") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "mddsim-config-test";
  fs::create_directories(dir);

  {
    std::ofstream((dir / "bad.json")) << "{ not json";
    try {
      load_config((dir / "bad.json").string(), "t2");
      CHECK(false);
    } catch (const ConfigError& e) {
      CHECK(e.exit_code == kExitSchema);
    }
  }
  {
    std::ofstream((dir / "other.json")) << R"({"task": "sweep"})";
    try {
      load_config((dir / "other.json").string(), "t2");
      CHECK(false);
    } catch (const ConfigError& e) {
      CHECK(e.exit_code == kExitSchema);
    }
    // same file under its own task is fine
    AppConfig ok = load_config((dir / "other.json").string(), "sweep");
    CHECK(ok.task == "sweep");
  }
  {
    try {
      load_config((dir / "absent.json").string(), "t2");
      CHECK(false);
    } catch (const ConfigError& e) {
      CHECK(e.exit_code == kExitSchema);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("protocol and runspec converters") {
  AppConfig cfg = load_config("", "t2");
  cfg.method = "mdd";
  cfg.n_cycles = 0;
  ProtocolConfig p = make_protocol(cfg);
  CHECK(p.method == Method::mdd);
  CHECK(p.n_cycles == 1);  // floor; the span search raises it
  cfg.n_cycles = 40;
  CHECK(make_protocol(cfg).n_cycles == 40);

  cfg.shots = 17;
  cfg.workers = 3;
  RunSpec spec = make_runspec(cfg);
  CHECK(spec.shots_per_point == 17);
  CHECK(spec.workers == 3);
  CHECK(spec.noise.sigma_b == doctest::Approx(0.05e-6));
  CHECK(spec.noise.b0 == doctest::Approx(0.765e-3));
}

} // TEST_SUITE
