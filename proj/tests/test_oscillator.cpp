#include <cmath>

#include "doctest.h"
#include "ionramsey/constants.hpp"
#include "ionramsey/errors.hpp"
#include "ionramsey/numerics.hpp"
#include "ionramsey/oscillator.hpp"

using namespace ionramsey;

TEST_SUITE_BEGIN("oscillator");

TEST_CASE("characteristic length of a calcium-scale trap") {
  const double mass = 40.0 * constants().atomic_mass_unit;
  const double nu = 2.0 * pi * 1.01e6;
  CHECK(characteristic_length(mass, nu) ==
        doctest::Approx(1.5817320510584117e-8).epsilon(1e-12));

  // Scale checks: x0 ~ 1/sqrt(m nu).
  CHECK(characteristic_length(4.0 * mass, nu) ==
        doctest::Approx(0.5 * 1.5817320510584117e-8).epsilon(1e-12));
  CHECK(characteristic_length(mass, 4.0 * nu) ==
        doctest::Approx(0.5 * 1.5817320510584117e-8).epsilon(1e-12));
}

TEST_CASE("characteristic length rejects non-positive inputs") {
  CHECK_THROWS_AS(characteristic_length(0.0, 1.0), const Error&);
  CHECK_THROWS_AS(characteristic_length(1e-26, -2.0), const Error&);
}

TEST_CASE("thermal width interpolates from the ground-state width") {
  const double x0 = 2.5e-8;
  CHECK(thermal_gaussian_width(x0, 0.0) == doctest::Approx(x0 / std::sqrt(2.0)).epsilon(1e-15));
  // sigma^2 = x0^2 (2 nbar + 1) / 2, so nbar = 3 gives x0 sqrt(3.5).
  CHECK(thermal_gaussian_width(x0, 3.0) ==
        doctest::Approx(x0 * std::sqrt(3.5)).epsilon(1e-14));
}

TEST_CASE("Fock densities are normalized with correct second moments") {
  const double x0 = 1.0;
  for (int n : {0, 1, 5, 20, 64}) {
    // Pull the exp(-u^2) weight out analytically: the remaining integrand is
    // the squared normalized Hermite polynomial, degree 2n + 2 <= 130, which
    // an order-96 rule integrates exactly.
    const GaussHermiteRule& rule = gauss_hermite(96);
    CompensatedSum norm, second;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double u = rule.nodes[i];
      const double density = fock_probability_density(n, u * x0, x0);
      const double f = density * std::exp(u * u);
      norm.add(rule.weights[i] * f);
      second.add(rule.weights[i] * f * u * u);
    }
    CHECK(norm.value() * x0 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(second.value() / norm.value() == doctest::Approx(n + 0.5).epsilon(1e-8));
  }
}

TEST_CASE("Fock density point values") {
  const double x0 = 3.0e-9;
  CHECK(fock_probability_density(0, 0.0, x0) ==
        doctest::Approx(1.0 / (std::sqrt(pi) * x0)).epsilon(1e-13));
  CHECK(fock_probability_density(1, 0.0, x0) == doctest::Approx(0.0).epsilon(1e-300));
  // |psi_1|^2 peaks at x = x0 with value 2 e^{-1} / (sqrt(pi) x0).
  CHECK(fock_probability_density(1, x0, x0) ==
        doctest::Approx(2.0 * std::exp(-1.0) / (std::sqrt(pi) * x0)).epsilon(1e-13));
}

TEST_CASE("Fock density domain limits") {
  CHECK_NOTHROW(fock_probability_density(max_fock_order(), 0.5, 1.0));
  CHECK_THROWS_AS(fock_probability_density(max_fock_order() + 1, 0.5, 1.0), const Error&);
  CHECK_THROWS_AS(fock_probability_density(-1, 0.5, 1.0), const Error&);
  CHECK_THROWS_AS(fock_probability_density(0, 0.5, 0.0), const Error&);
}

TEST_CASE("trap validation reports every offending field at once") {
  TrapConfig trap;  // all zeros: mass and the three frequencies are invalid
  trap.nbar_y = -1.0;
  try {
    trap.validate();
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    CHECK(e.details().size() >= 5);
  }
}

TEST_CASE("trap derived lengths match characteristic_length") {
  TrapConfig trap;
  trap.mass = 40.0 * constants().atomic_mass_unit;
  trap.nu_x = 2.0 * pi * 1.01e6;
  trap.nu_y = 2.0 * pi * 3.0e6;
  trap.nu_z = 2.0 * pi * 3.1e6;
  trap.validate();
  CHECK(trap.x0_x() == doctest::Approx(characteristic_length(trap.mass, trap.nu_x)));
  CHECK(trap.x0_y() == doctest::Approx(characteristic_length(trap.mass, trap.nu_y)));
  CHECK(trap.x0_z() == doctest::Approx(characteristic_length(trap.mass, trap.nu_z)));
}

TEST_SUITE_END();
