#include "noise.hpp"
#include <cmath>
#include <stdexcept>
#include "rng.hpp"

namespace mdd {

namespace {
constexpr std::uint64_t kShotStream = 0x51;
// 2 sqrt(2 ln 2)
const double kFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::log(2.0));
}

double fwhm_to_sigma(double fwhm) {
  if (fwhm < 0.0) throw std::domain_error("fwhm must be >= 0");
  return fwhm / kFwhmPerSigma;
}

ShotNoiseSpec ShotNoiseSpec::from_sigma(double b0, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::domain_error("sigma must be >= 0");
  return ShotNoiseSpec{b0, sigma, seed};
}

ShotNoiseSpec ShotNoiseSpec::from_fwhm(double b0, double fwhm, std::uint64_t seed) {
  return ShotNoiseSpec{b0, fwhm_to_sigma(fwhm), seed};
}

double ShotNoiseSpec::fwhm() const { return sigma_b * kFwhmPerSigma; }

double sample_shot_field(const ShotNoiseSpec& spec, std::uint64_t shot_index) {
  if (spec.sigma_b == 0.0) return spec.b0;
  return spec.b0 + spec.sigma_b * std_normal(spec.seed, kShotStream, shot_index, 0);
}

ComposedField compose_ion_field(double shot_field, const IonDisorder& ion) {
  return ComposedField{shot_field + ion.static_field_offset,
                       ion.rf_amplitude_scale, ion.mw_amplitude_scale};
}

} // namespace mdd
