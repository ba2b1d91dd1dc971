#pragma once

namespace mdd {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// CODATA 2018
inline constexpr double hbar   = 1.054571817e-34;   // J s
inline constexpr double mu_b   = 9.2740100783e-24;  // J/T
inline constexpr double mu0    = 1.25663706212e-6;  // N/A^2
inline constexpr double eps0   = 8.8541878128e-12;  // F/m
inline constexpr double q_e    = 1.602176634e-19;   // C
inline constexpr double k_coul = 1.0 / (4.0 * pi * eps0);
inline constexpr double amu    = 1.66053906660e-27; // kg
inline constexpr double m_yb171 = 171.0 * amu;
inline constexpr double c_light = 299792458.0;      // m/s

// Frequencies are angular (rad/s) everywhere inside the library; "Hz" in
// configs and docs always means cycles/s, converted at the boundary.
inline constexpr double angular(double hz) { return two_pi * hz; }

} // namespace mdd
