#pragma once

#include "ionramsey/constants.hpp"

namespace ionramsey {

// Ground-state length scale sqrt(hbar / (m nu)) of a harmonic mode.
// nu is the angular secular frequency in rad/s.
double characteristic_length(double mass, double nu);

// 1-sigma spatial width of a thermal state with mean occupation nbar:
// x0 * sqrt((2 nbar + 1) / 2). nbar = 0 recovers the ground-state width.
double thermal_gaussian_width(double x0, double nbar);

// Highest Fock index the Hermite evaluation supports.
constexpr int max_fock_order() { return 64; }

// |psi_n(x)|^2 of the 1-D oscillator with length scale x0. Evaluated with
// the orthonormal Hermite-function recurrence, so it stays finite for all
// supported n. n beyond max_fock_order() raises an unsupported error.
double fock_probability_density(int n, double x, double x0);

// Secular trap parameters for a single ion. The x mode is the interferometer
// mode and is always taken ground-state cooled; the transverse modes may
// carry Doppler-limit thermal occupation.
struct TrapConfig {
  double mass = 0.0;   // kg
  double nu_x = 0.0;   // rad/s
  double nu_y = 0.0;   // rad/s
  double nu_z = 0.0;   // rad/s
  double nbar_y = 0.0; // mean thermal occupation, y mode
  double nbar_z = 0.0; // mean thermal occupation, z mode

  // Derived lengths are recomputed on every call; nothing caches them.
  double x0_x() const;
  double x0_y() const;
  double x0_z() const;

  void validate() const;  // throws with one detail entry per bad field
};

}  // namespace ionramsey
