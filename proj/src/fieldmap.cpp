#include "fieldmap.hpp"
#include <cmath>
#include <stdexcept>
#include <omp.h>
#include "units.hpp"

namespace mdd {

// quadratic convergence reaches the rounding floor within ~8 iterations;
// the cap guards against a and b stalling one ulp apart
double elliptic_k(double m) {
  if (m < 0.0 || m >= 1.0) throw std::domain_error("elliptic parameter m outside [0,1)");
  double a = 1.0, b = std::sqrt(1.0 - m);
  for (int i = 0; i < 32 && (a - b) > 4e-16 * a; ++i) {
    double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return pi / (2.0 * a);
}

double elliptic_e(double m) {
  if (m < 0.0 || m >= 1.0) throw std::domain_error("elliptic parameter m outside [0,1)");
  double a = 1.0, b = std::sqrt(1.0 - m), c2_sum = 0.5 * m;  // 2^{-1} c_0^2
  double pow2 = 0.5;
  for (int i = 0; i < 32 && (a - b) > 4e-16 * a; ++i) {
    double c = 0.5 * (a - b);
    double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
    pow2 *= 2.0;
    c2_sum += pow2 * c * c;
  }
  return pi / (2.0 * a) * (1.0 - c2_sum);
}

LoopField loop_field(double radius, double loop_z, double r, double z) {
  if (radius <= 0.0) throw std::domain_error("loop radius must be > 0");
  if (r < 0.0) throw std::domain_error("cylindrical radius must be >= 0");
  double zeta = z - loop_z;
  if (r < 1e-12 * radius) {
    double d2 = radius * radius + zeta * zeta;
    return {0.0, mu0 * radius * radius / (2.0 * std::pow(d2, 1.5))};
  }
  double sum2 = (radius + r) * (radius + r) + zeta * zeta;
  double dif2 = (radius - r) * (radius - r) + zeta * zeta;
  if (dif2 == 0.0) throw std::domain_error("field requested on the loop wire");
  double m = 4.0 * radius * r / sum2;
  double kk = elliptic_k(m);
  double ee = elliptic_e(m);
  double pref = mu0 / (2.0 * pi * std::sqrt(sum2));
  double b_z = pref * (kk + ee * (radius * radius - r * r - zeta * zeta) / dif2);
  double b_r = pref * (zeta / r) *
               (-kk + ee * (radius * radius + r * r + zeta * zeta) / dif2);
  return {b_r, b_z};
}

LoopField loop_field_quadrature(double radius, double loop_z, double r, double z,
                                int n_nodes) {
  // trapezoid rule on the periodic Biot-Savart integrand converges
  // spectrally for smooth (off-wire) queries
  double zeta = z - loop_z;
  double br = 0.0, bz = 0.0;
  for (int i = 0; i < n_nodes; ++i) {
    double th = two_pi * i / n_nodes;
    double ct = std::cos(th), st = std::sin(th);
    double sx = r - radius * ct;
    double sy = -radius * st;
    double s2 = sx * sx + sy * sy + zeta * zeta;
    double inv_s3 = 1.0 / (s2 * std::sqrt(s2));
    br += radius * zeta * ct * inv_s3;
    bz += radius * (radius - r * ct) * inv_s3;
  }
  double pref = mu0 / (4.0 * pi) * two_pi / n_nodes;
  return {pref * br, pref * bz};
}

std::array<double, 3> coil_pair_field(const CoilPair& pair,
                                      const std::array<double, 3>& position) {
  double r = std::hypot(position[0], position[1]);
  if (r > 0.9 * pair.radius)
    throw std::domain_error("query outside the mapped region around the axis");
  double half = 0.5 * pair.spacing;

  // per-unit-current field at the center fixes the normalization
  double center = loop_field(pair.radius, -half, 0.0, 0.0).b_z +
                  loop_field(pair.radius, +half, 0.0, 0.0).b_z;
  double current = pair.b0 / center;

  LoopField lo = loop_field(pair.radius, -half, r, position[2]);
  LoopField hi = loop_field(pair.radius, +half, r, position[2]);
  double b_r = current * (lo.b_r + hi.b_r);
  double b_z = current * (lo.b_z + hi.b_z);
  if (r == 0.0) return {0.0, 0.0, b_z};
  return {b_r * position[0] / r, b_r * position[1] / r, b_z};
}

InhomogeneityMap inhomogeneity_map(const CoilPair& pair, const IonEnsemble& ens) {
  InhomogeneityMap map;
  const auto& pos = ens.positions;
  const int n = static_cast<int>(pos.size());
  map.fractional_offset.resize(n);
  std::vector<double> axial(n), radial(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    map.fractional_offset[i] = coil_pair_field(pair, pos[i])[2] / pair.b0 - 1.0;
    // split the deviation into its on-axis part at the ion's z and its
    // radial part at z = 0
    axial[i] = coil_pair_field(pair, {0.0, 0.0, pos[i][2]})[2] / pair.b0 - 1.0;
    radial[i] = coil_pair_field(pair, {pos[i][0], pos[i][1], 0.0})[2] / pair.b0 - 1.0;
  }
  for (int i = 0; i < n; ++i) {
    map.max_axial = std::max(map.max_axial, std::abs(axial[i]));
    map.max_radial = std::max(map.max_radial, std::abs(radial[i]));
  }
  return map;
}

} // namespace mdd
