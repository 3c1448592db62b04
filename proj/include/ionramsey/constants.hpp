#pragma once

namespace ionramsey {

// CODATA 2018 values, SI units. Every physical computation in the library
// reads these through constants(); numeric literals for them appear nowhere
// else in the source.
struct PhysicalConstants {
  double hbar;              // reduced Planck constant, J s
  double elementary_charge; // C
  double coulomb;           // e^2 / (4 pi eps0), J m
  double atomic_mass_unit;  // kg
};

// The single frozen instance.
const PhysicalConstants& constants() noexcept;

}  // namespace ionramsey
