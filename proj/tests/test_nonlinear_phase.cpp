#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ionramsey/constants.hpp"
#include "ionramsey/errors.hpp"
#include "ionramsey/nonlinear_phase.hpp"
#include "ionramsey/numerics.hpp"
#include "ionramsey/oscillator.hpp"

using namespace ionramsey;

namespace {

TrapConfig isotropic_trap(double nu) {
  TrapConfig trap;
  trap.mass = 40.0 * constants().atomic_mass_unit;
  trap.nu_x = trap.nu_y = trap.nu_z = nu;
  return trap;
}

// Resolvent form of the same potential with a rational substitution and a
// composite Simpson rule, so the production tan-mapped adaptive quadrature is
// checked against a second integrator.
double simpson_potential(const GaussianWidths& source, const std::array<double, 3>& delta,
                         double kappa) {
  const double scale = std::min(source.sx, std::min(source.sy, source.sz));
  const std::array<double, 3> sig = {source.sx / scale, source.sy / scale, source.sz / scale};
  const auto f = [&](double u) {
    if (u >= 1.0) return 0.0;
    const double g = u / (1.0 - u);
    const double jac = 1.0 / ((1.0 - u) * (1.0 - u));
    const double g2 = g * g;
    double value = jac;
    for (int i = 0; i < 3; ++i) {
      const double d = delta[i] / scale;
      const double lam = 1.0 + 2.0 * sig[i] * sig[i] * g2;
      value *= std::exp(-g2 * d * d / lam) / std::sqrt(lam);
    }
    return value;
  };
  const int panels = 20000;
  const double h = 1.0 / panels;
  CompensatedSum acc;
  acc.add(f(0.0));
  for (int i = 1; i < panels; ++i) acc.add((i % 2 ? 4.0 : 2.0) * f(i * h));
  acc.add(f(1.0));
  return kappa * (2.0 / std::sqrt(pi)) / scale * acc.value() * h / 3.0;
}

}  // namespace

TEST_SUITE("nonlinear_phase") {

TEST_CASE("superposition constructors and validation") {
  const SuperpositionSpec balanced = SuperpositionSpec::from_ground_population(0.5);
  CHECK(balanced.alpha0 == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(balanced.alpha1 == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  balanced.validate();

  const SuperpositionSpec skew = SuperpositionSpec::from_ground_population(0.2);
  CHECK(skew.alpha0 == doctest::Approx(std::sqrt(0.2)).epsilon(1e-15));
  CHECK(skew.alpha1 == doctest::Approx(std::sqrt(0.8)).epsilon(1e-15));

  // from_theta matches from_ground_population at theta = 2 asin(sqrt(p0)).
  for (double p0 : {0.1, 0.37, 0.5, 0.93}) {
    const SuperpositionSpec via_theta = SuperpositionSpec::from_theta(2.0 * std::asin(std::sqrt(p0)));
    CHECK(via_theta.alpha0 == doctest::Approx(std::sqrt(p0)).epsilon(1e-14));
    via_theta.validate();
  }

  CHECK_THROWS_AS(SuperpositionSpec::from_ground_population(-0.1), Error);
  CHECK_THROWS_AS(SuperpositionSpec::from_ground_population(1.5), Error);

  SuperpositionSpec broken;
  broken.alpha0 = 0.6;
  broken.alpha1 = 0.81;
  try {
    broken.validate();
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    REQUIRE(e.details().size() == 1);
    CHECK(e.details()[0].first == "norm");
  }

  SuperpositionSpec negative;
  negative.alpha0 = -0.6;
  negative.alpha1 = 0.8;
  try {
    negative.validate();
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.details()[0].first == "alpha0");
  }
}

TEST_CASE("coupling energy scale") {
  CHECK(NonlinearCoupling{0.0}.kappa() == 0.0);
  CHECK(NonlinearCoupling{2e-12}.kappa() ==
        doctest::Approx(2e-12 * 2.3070775523417355e-28).epsilon(1e-15));
}

TEST_CASE("pair integrals reproduce the analytic ideal values") {
  // Ground transverse widths of an isotropic trap are x0 / sqrt(2); with that
  // choice the four integrals have closed forms:
  //   j00 x0 = sqrt(2/pi),      j01 x0 = sqrt(2/pi) (1 - 1/6),
  //   j11 x0 = sqrt(2/pi) (1 - 1/6 - 1/60),  kgg x0 = sqrt(2/pi) / 6.
  const double x0 = 1.0;
  const double sigma = x0 / std::sqrt(2.0);
  const CoulombPairIntegrals j = coulomb_pair_integrals(x0, sigma, sigma);

  CHECK(j.j00 == doctest::Approx(0.7978845608028654).epsilon(5e-8));
  CHECK(j.j01 == doctest::Approx(0.6649038006690545).epsilon(5e-8));
  CHECK(j.j11 == doctest::Approx(0.6516057246556735).epsilon(5e-8));
  CHECK(j.kgg == doctest::Approx(0.1329807601338109).epsilon(5e-8));

  // The weight-difference combinations drive the phase rate; the second one
  // is exactly a tenth of the first.
  CHECK(j.j00 - j.j01 == doctest::Approx(0.1329807601338109).epsilon(5e-7));
  CHECK(j.j01 - j.j11 == doctest::Approx(0.01329807601338109).epsilon(5e-6));
  CHECK((j.j00 - j.j01) / (j.j01 - j.j11) == doctest::Approx(10.0).epsilon(1e-5));
  // kgg coincides with j00 - j01 for this geometry.
  CHECK(j.kgg == doctest::Approx(j.j00 - j.j01).epsilon(1e-6));
}

TEST_CASE("pair integrals scale as 1/x0") {
  const double x0 = 1.5817320510584117e-8;
  const double sigma = x0 / std::sqrt(2.0);
  const CoulombPairIntegrals j = coulomb_pair_integrals(x0, sigma, sigma);
  CHECK(j.j00 * x0 == doctest::Approx(0.7978845608028654).epsilon(5e-8));
  CHECK(j.kgg * x0 == doctest::Approx(0.1329807601338109).epsilon(5e-7));
}

TEST_CASE("pair integral input validation") {
  CHECK_THROWS_AS(coulomb_pair_integrals(0.0, 1.0, 1.0), Error);
  CHECK_THROWS_AS(coulomb_pair_integrals(1.0, -1.0, 1.0), Error);
  CHECK_THROWS_AS(coulomb_pair_integrals(1.0, 1.0, 1.0, 0.0), Error);
}

TEST_CASE("potential of an isotropic source matches the erf form") {
  const double sigma = 2e-9;
  const double kappa = 1e-28;
  const GaussianWidths source{sigma, sigma, sigma};
  const std::array<double, 3> origin = {0.0, 0.0, 0.0};

  for (double r_over_sigma : {0.25, 1.0, 3.0, 8.0}) {
    const double r = r_over_sigma * sigma;
    // Spread the displacement over all three axes to exercise the full kernel.
    const std::array<double, 3> point = {r / std::sqrt(3.0), r / std::sqrt(3.0),
                                         -r / std::sqrt(3.0)};
    const double expected = kappa * std::erf(r / (sigma * std::sqrt(2.0))) / r;
    CHECK(nl_potential_at_point(source, origin, point, kappa) ==
          doctest::Approx(expected).epsilon(1e-7));
  }

  // Far field is pure Coulomb.
  const std::array<double, 3> far = {20.0 * sigma, 0.0, 0.0};
  CHECK(nl_potential_at_point(source, origin, far, kappa) ==
        doctest::Approx(kappa / (20.0 * sigma)).epsilon(1e-7));

  // On-centre value stays finite at the analytic limit.
  CHECK(nl_potential_at_point(source, origin, origin, kappa) ==
        doctest::Approx(kappa * std::sqrt(2.0 / pi) / sigma).epsilon(1e-7));
}

TEST_CASE("potential depends on displacement only") {
  const GaussianWidths source{1e-9, 2e-9, 3e-9};
  // Dyadic coordinates: every sum below is exact, so shifted - c recovers d
  // bit-for-bit and the two evaluations must agree exactly.
  const std::array<double, 3> d = {0x1p-30, -0x1p-31, 0x1p-29};
  const std::array<double, 3> c = {0x1p-28, 0x1p-29, -0x1p-30};
  const std::array<double, 3> shifted = {c[0] + d[0], c[1] + d[1], c[2] + d[2]};
  const double at_origin = nl_potential_at_point(source, {0.0, 0.0, 0.0}, d, 1e-28);
  CHECK(nl_potential_at_point(source, c, shifted, 1e-28) == at_origin);
}

TEST_CASE("anisotropic potential agrees with an independent Simpson evaluation") {
  const GaussianWidths source{1e-9, 2e-9, 3.5e-9};
  const double kappa = 2.3070775523417355e-28;
  const std::array<double, 3> origin = {0.0, 0.0, 0.0};
  const std::array<double, 3> points[] = {
      {0.0, 0.0, 0.0},
      {1e-9, 0.0, 0.0},
      {4e-9, 2e-9, 1e-9},
      {-2e-9, 5e-9, -7e-9},
  };
  for (const auto& point : points) {
    const double expected = simpson_potential(source, point, kappa);
    CHECK(nl_potential_at_point(source, origin, point, kappa) ==
          doctest::Approx(expected).epsilon(1e-6));
  }
  CHECK_THROWS_AS(nl_potential_at_point(GaussianWidths{0.0, 1e-9, 1e-9}, origin, origin, 1.0),
                  Error);
}

TEST_CASE("closed-form rate frozen values") {
  const NonlinearCoupling unit{1.0};
  const double x0 = 1e-8;

  const SuperpositionSpec balanced = SuperpositionSpec::from_ground_population(0.5);
  CHECK(phase_rate_closed_form(balanced, x0, unit) ==
        doctest::Approx(1.6000646604510078e13).epsilon(1e-12));

  // Rate is linear in the coupling and vanishes with it.
  CHECK(phase_rate_closed_form(balanced, x0, NonlinearCoupling{0.0}) == 0.0);
  CHECK(phase_rate_closed_form(balanced, x0, NonlinearCoupling{1e-12}) ==
        doctest::Approx(16.000646604510078).epsilon(1e-12));

  // More |1> weight always lowers the rate: coefficient ratio is 10.
  const double r01 = phase_rate_closed_form(SuperpositionSpec::from_ground_population(0.1), x0, unit);
  const double r05 = phase_rate_closed_form(balanced, x0, unit);
  const double r09 = phase_rate_closed_form(SuperpositionSpec::from_ground_population(0.9), x0, unit);
  CHECK(r09 > r05);
  CHECK(r05 > r01);

  const PhaseRateCoefficients coeff = phase_rate_coefficients_closed_form(x0, unit);
  CHECK(coeff.per_w0 / coeff.per_w1 == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(coeff.rate(0.5, 0.5) == doctest::Approx(r05).epsilon(1e-15));
  CHECK_THROWS_AS(phase_rate_coefficients_closed_form(0.0, unit), Error);
}

TEST_CASE("differential phase model frozen value") {
  const SuperpositionSpec low = SuperpositionSpec::from_ground_population(0.2);
  const SuperpositionSpec high = SuperpositionSpec::from_ground_population(0.8);
  const NonlinearCoupling coupling{1e-12};
  const double delta = differential_phase_model(low, high, 15e-3, 1e-8, coupling);
  CHECK(delta == doctest::Approx(-0.2356458863573302).epsilon(1e-12));
  // Antisymmetric in the preparation order.
  CHECK(differential_phase_model(high, low, 15e-3, 1e-8, coupling) == -delta);
  CHECK(differential_phase_model(low, high, 0.0, 1e-8, coupling) == 0.0);
  CHECK_THROWS_AS(differential_phase_model(low, high, -1e-3, 1e-8, coupling), Error);
}

TEST_CASE("numeric secular coefficients match the closed form on the ideal trap") {
  const TrapConfig trap = isotropic_trap(2.0 * pi * 1.01e6);
  const NonlinearCoupling coupling{1e-12};
  const PhaseRateCoefficients numeric =
      phase_rate_coefficients_numeric(trap, coupling, TransverseModel::ground);
  const PhaseRateCoefficients closed = phase_rate_coefficients_closed_form(trap.x0_x(), coupling);
  CHECK(numeric.per_w0 == doctest::Approx(closed.per_w0).epsilon(1e-7));
  CHECK(numeric.per_w1 == doctest::Approx(closed.per_w1).epsilon(1e-6));

  const SuperpositionSpec spec = SuperpositionSpec::from_ground_population(0.3);
  NumericRateOptions options;
  options.dynamic = false;
  const PhaseRate secular = phase_rate_numeric(spec, trap, coupling, options);
  CHECK(secular.method == RateMethod::numeric_secular);
  CHECK(secular.cross_terms == false);
  // Same branch weights the secular path derives internally (squares of the
  // amplitudes, not the nominal populations, which differ by one rounding).
  CHECK(secular.rate == numeric.rate(spec.alpha0 * spec.alpha0, spec.alpha1 * spec.alpha1));
  CHECK(secular.tolerance > 0.0);
}

TEST_CASE("dynamic integration reproduces the closed-form rate") {
  const TrapConfig trap = isotropic_trap(2.0 * pi * 1.01e6);
  const NonlinearCoupling coupling{1e-12};
  for (double p0 : {0.1, 0.5, 0.9}) {
    const SuperpositionSpec spec = SuperpositionSpec::from_ground_population(p0);
    const PhaseRate dynamic = phase_rate_numeric(spec, trap, coupling);
    const double closed = phase_rate_closed_form(spec, trap.x0_x(), coupling);
    CHECK(dynamic.method == RateMethod::numeric_dynamic);
    CHECK(dynamic.rate == doctest::Approx(closed).epsilon(1e-8));
    CHECK(dynamic.tolerance > 0.0);
    CHECK(dynamic.tolerance < 1e-6 * std::abs(closed));
  }

  // A one-branch preparation falls back to the secular coefficient path.
  const PhaseRate edge =
      phase_rate_numeric(SuperpositionSpec::from_ground_population(1.0), trap, coupling);
  CHECK(edge.method == RateMethod::numeric_secular);
}

TEST_CASE("dynamic integration is deterministic") {
  const TrapConfig trap = isotropic_trap(2.0 * pi * 1.01e6);
  const NonlinearCoupling coupling{1e-12};
  const SuperpositionSpec spec = SuperpositionSpec::from_ground_population(0.3);
  const PhaseRate a = phase_rate_numeric(spec, trap, coupling);
  const PhaseRate b = phase_rate_numeric(spec, trap, coupling);
  CHECK(a.rate == b.rate);
  CHECK(a.tolerance == b.tolerance);
}

TEST_CASE("fast-oscillating coupling term shifts the rate as expected") {
  // With the |0><1| source term retained, averaging its own rotation against
  // the interaction-picture phases moves the secular slope from
  // (10 w0 + w1) to 12 w1, i.e. a ratio of 11 w1 / (10 w0 + w1) relative to
  // the closed form. Residual deviations are counter-rotating corrections of
  // order rate / nu_x.
  const TrapConfig trap = isotropic_trap(2.0 * pi * 1.01e6);
  const NonlinearCoupling coupling{1e-12};
  NumericRateOptions options;
  options.cross_terms = true;
  for (double p0 : {0.2, 0.5, 0.9}) {
    const SuperpositionSpec spec = SuperpositionSpec::from_ground_population(p0);
    const PhaseRate dynamic = phase_rate_numeric(spec, trap, coupling, options);
    const double closed = phase_rate_closed_form(spec, trap.x0_x(), coupling);
    const double w0 = p0;
    const double w1 = 1.0 - p0;
    const double predicted = 11.0 * w1 / (10.0 * w0 + w1);
    CHECK(dynamic.cross_terms == true);
    CHECK(dynamic.rate / closed == doctest::Approx(predicted).epsilon(5e-3));
  }
}

TEST_CASE("numeric option validation aggregates problems") {
  const TrapConfig trap = isotropic_trap(2.0 * pi * 1.01e6);
  const SuperpositionSpec spec = SuperpositionSpec::from_ground_population(0.5);
  NumericRateOptions options;
  options.periods = 9;
  options.steps_per_period = 16;
  options.quad_rel_tol = 0.0;
  options.fit_rel_tol = -1.0;
  try {
    phase_rate_numeric(spec, trap, NonlinearCoupling{1e-12}, options);
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    CHECK(e.details().size() == 4);
    CHECK(e.details()[0].first == "periods");
  }
}

TEST_CASE("spread correction factor") {
  // Ideal case: isotropic trap, ground transverse modes. The numeric
  // difference coefficient reduces to the closed form.
  const TrapConfig ideal = isotropic_trap(2.0 * pi * 1.01e6);
  CHECK(spread_correction_factor(ideal, TransverseModel::ground) ==
        doctest::Approx(1.0).epsilon(1e-6));

  // Heating the spectator modes broadens the source and weakens the
  // interaction contrast between the branches. The factor must reduce to the
  // second-difference ratio of the pair integrals at the two geometries.
  TrapConfig warm = ideal;
  warm.nbar_y = 3.0;
  warm.nbar_z = 3.0;
  const double factor_warm = spread_correction_factor(warm, TransverseModel::thermal);
  CHECK(factor_warm < 1.0);
  CHECK(factor_warm > 0.0);
  const double x0 = warm.x0_x();
  const double sg = thermal_gaussian_width(warm.x0_y(), 0.0);  // x0 / sqrt(2)
  const double st = thermal_gaussian_width(warm.x0_y(), 3.0);
  const CoulombPairIntegrals jg = coulomb_pair_integrals(x0, sg, sg);
  const CoulombPairIntegrals jt = coulomb_pair_integrals(x0, st, st);
  const double expected =
      (jt.j00 - 2.0 * jt.j01 + jt.j11) / (jg.j00 - 2.0 * jg.j01 + jg.j11);
  CHECK(factor_warm == doctest::Approx(expected).epsilon(1e-6));

  // Ground model ignores nbar entirely.
  CHECK(spread_correction_factor(warm, TransverseModel::ground) ==
        doctest::Approx(1.0).epsilon(1e-6));

  TrapConfig hot = ideal;
  hot.nbar_y = 8.0;
  hot.nbar_z = 8.0;
  CHECK(spread_correction_factor(hot, TransverseModel::thermal) < factor_warm);
}

}  // TEST_SUITE
