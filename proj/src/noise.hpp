#pragma once
#include <cstdint>

namespace mdd {

// Shot-to-shot field model: one Gaussian draw per trial, constant within
// the trial. Width is stored as sigma; the FWHM constructor applies the
// exact Gaussian conversion.
struct ShotNoiseSpec {
  double b0 = 0.765e-3;  // T
  double sigma_b = 0.0;  // T
  std::uint64_t seed = 0;

  static ShotNoiseSpec from_sigma(double b0, double sigma, std::uint64_t seed);
  static ShotNoiseSpec from_fwhm(double b0, double fwhm, std::uint64_t seed);
  double fwhm() const;
};

double fwhm_to_sigma(double fwhm);

// Per-ion static disorder (from the field map) on top of the common drift.
struct IonDisorder {
  double static_field_offset = 0.0;  // T
  double rf_amplitude_scale = 1.0;
  double mw_amplitude_scale = 1.0;
};

struct ComposedField {
  double b_eff;      // T
  double rf_scale;
  double mw_scale;
};

double sample_shot_field(const ShotNoiseSpec& spec, std::uint64_t shot_index);
ComposedField compose_ion_field(double shot_field, const IonDisorder& ion);

} // namespace mdd
