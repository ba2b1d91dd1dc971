#pragma once
#include <array>
#include <vector>
#include "crystal.hpp"

namespace mdd {

// complete elliptic integrals K(m), E(m) with parameter m = k^2,
// arithmetic-geometric mean iteration, machine precision
double elliptic_k(double m);
double elliptic_e(double m);

struct LoopField {
  double b_r;  // T per ampere
  double b_z;
};

// Off-axis field of a circular current loop of the given radius centered
// on the z axis at loop_z, evaluated at cylindrical (r, z). Per unit
// current.
LoopField loop_field(double radius, double loop_z, double r, double z);

// same, by direct quadrature of the Biot-Savart line integral (oracle)
LoopField loop_field_quadrature(double radius, double loop_z, double r, double z,
                                int n_nodes = 4096);

struct CoilPair {
  double radius = 0.05;   // m
  double spacing = 0.10;  // m, center-to-center along z
  double b0 = 0.765e-3;   // T at the geometric center after normalization
};

// Superposed two-loop field, normalized so B_z(0,0,0) = b0 exactly.
// Positions are (x, y, z) with the coil axis along z.
std::array<double, 3> coil_pair_field(const CoilPair& pair,
                                      const std::array<double, 3>& position);

struct InhomogeneityMap {
  std::vector<double> fractional_offset;  // (B_z - B_z0)/B_z0 per ion
  double max_axial = 0.0;   // max on-axis deviation at the ions' z values
  double max_radial = 0.0;  // max deviation at the ions' radii in the z=0 plane
};

InhomogeneityMap inhomogeneity_map(const CoilPair& pair, const IonEnsemble& ens);

} // namespace mdd
