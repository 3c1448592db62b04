#include "ionramsey/oscillator.hpp"

#include <cmath>
#include <string>

#include "ionramsey/errors.hpp"
#include "ionramsey/numerics.hpp"

namespace ionramsey {

double characteristic_length(double mass, double nu) {
  if (!(mass > 0.0)) throw_validation("mass must be positive");
  if (!(nu > 0.0)) throw_validation("secular frequency must be positive");
  return std::sqrt(constants().hbar / (mass * nu));
}

double thermal_gaussian_width(double x0, double nbar) {
  if (!(x0 > 0.0)) throw_validation("length scale must be positive");
  if (!(nbar >= 0.0)) throw_validation("mean occupation must be non-negative");
  return x0 * std::sqrt(nbar + 0.5);
}

double fock_probability_density(int n, double x, double x0) {
  if (n < 0 || n > max_fock_order()) {
    throw Error(ErrorKind::unsupported,
                "Fock index outside the supported range",
                {{"n", std::to_string(n)},
                 {"max", std::to_string(max_fock_order())}});
  }
  if (!(x0 > 0.0)) throw_validation("length scale must be positive");
  const double u = x / x0;
  // Orthonormal Hermite functions h_n(u) = H_n(u) e^{-u^2/2} / sqrt(2^n n! sqrt(pi)),
  // built with the stable normalized recurrence.
  double prev = 0.0;
  double curr = std::exp(-0.5 * u * u) * 0.7511255444649425;  // pi^{-1/4}
  for (int j = 0; j < n; ++j) {
    const double next =
        u * std::sqrt(2.0 / (j + 1.0)) * curr - std::sqrt(j / (j + 1.0)) * prev;
    prev = curr;
    curr = next;
  }
  return curr * curr / x0;
}

double TrapConfig::x0_x() const { return characteristic_length(mass, nu_x); }
double TrapConfig::x0_y() const { return characteristic_length(mass, nu_y); }
double TrapConfig::x0_z() const { return characteristic_length(mass, nu_z); }

void TrapConfig::validate() const {
  ErrorDetails bad;
  if (!(mass > 0.0)) bad.emplace_back("mass", "must be positive");
  if (!(nu_x > 0.0)) bad.emplace_back("nu_x", "must be positive");
  if (!(nu_y > 0.0)) bad.emplace_back("nu_y", "must be positive");
  if (!(nu_z > 0.0)) bad.emplace_back("nu_z", "must be positive");
  if (!(nbar_y >= 0.0)) bad.emplace_back("nbar_y", "must be non-negative");
  if (!(nbar_z >= 0.0)) bad.emplace_back("nbar_z", "must be non-negative");
  if (!bad.empty()) throw Error(ErrorKind::validation, "invalid trap configuration", bad);
}

}  // namespace ionramsey
