#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ionramsey/errors.hpp"
#include "ionramsey/estimator.hpp"
#include "ionramsey/numerics.hpp"
#include "ionramsey/rng.hpp"

using namespace ionramsey;

namespace {

// Exact fringe triple at analysis phases xi1 + {0, pi/2, pi}.
RamseyTriple exact_triple(double amplitude, double offset, double phi, double xi1,
                          int shots = 200) {
  RamseyTriple triple;
  triple.xi1 = xi1;
  triple.shots = {shots, shots, shots};
  for (int i = 0; i < 3; ++i) {
    const double xi = xi1 + 0.5 * pi * i;
    triple.p[i] = offset - 0.5 * amplitude * std::cos(phi + xi);
  }
  return triple;
}

int binomial_draw(Philox& rng, double p, int shots) {
  int hits = 0;
  for (int i = 0; i < shots; ++i) hits += rng.bernoulli(p) ? 1 : 0;
  return hits;
}

}  // namespace

TEST_SUITE("estimator") {

TEST_CASE("triple validation aggregates problems") {
  RamseyTriple bad;
  bad.p = {-0.1, 1.2, 0.5};
  bad.shots = {0, 10, 10};
  bad.xi1 = 0.0;
  try {
    bad.validate();
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    CHECK(e.details().size() == 3);
  }
}

TEST_CASE("quantum-projection-noise worked example") {
  // P = (0.5, 0.9, 0.5) at 200 shots each: the gradients collapse to
  // (1.25, 0, -1.25) and sigma_phi is exactly 1/16.
  RamseyTriple triple;
  triple.p = {0.5, 0.9, 0.5};
  triple.xi1 = 0.0;
  triple.shots = {200, 200, 200};

  const PhaseEstimate estimate = invert_three_point(triple);
  CHECK(estimate.phi == doctest::Approx(0.5 * pi).epsilon(1e-12));
  CHECK(estimate.contrast == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(estimate.offset == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(estimate.sigma_phi == doctest::Approx(0.0625).epsilon(1e-12));
  CHECK(estimate.covariance[0][0] == doctest::Approx(0.0625 * 0.0625).epsilon(1e-12));
  // At this symmetric point the phase decouples from contrast and offset.
  CHECK(std::abs(estimate.covariance[0][1]) < 1e-15);
  CHECK(std::abs(estimate.covariance[0][2]) < 1e-15);
  CHECK(propagate_phase_uncertainty(triple) == estimate.sigma_phi);
}

TEST_CASE("three-point inversion round trips the fringe parameters") {
  const double xi1 = 0.7;
  for (double amplitude : {0.05, 0.3, 1.0}) {
    for (double offset : {0.3, 0.5, 0.7}) {
      if (offset - 0.5 * amplitude < 0.0 || offset + 0.5 * amplitude > 1.0) continue;
      for (int k = 0; k < 64; ++k) {
        const double phi = -pi + (k + 0.5) * 2.0 * pi / 64.0;
        const PhaseEstimate estimate =
            invert_three_point(exact_triple(amplitude, offset, phi, xi1));
        CHECK(estimate.phi == doctest::Approx(phi).epsilon(1e-12));
        CHECK(estimate.contrast == doctest::Approx(amplitude).epsilon(1e-12));
        CHECK(estimate.offset == doctest::Approx(offset).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("vanishing contrast is rejected, with an adjustable floor") {
  const RamseyTriple flat = exact_triple(1e-4, 0.5, 0.3, 0.0);
  try {
    invert_three_point(flat);
    FAIL("expected degenerate contrast error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_contrast);
  }
  const PhaseEstimate rescued = invert_three_point(flat, 1e-5);
  CHECK(rescued.phi == doctest::Approx(0.3).epsilon(1e-8));
}

TEST_CASE("propagated sigma matches the Monte-Carlo spread") {
  const double amplitude = 0.8;
  const double offset = 0.5;
  const double phi_true = 0.3;
  const double xi1 = optimal_bias(phi_true);
  const int shots = 200;
  const RamseyTriple truth = exact_triple(amplitude, offset, phi_true, xi1, shots);

  Philox rng(4242);
  std::vector<double> phis;
  CompensatedSum sigma_sum;
  const int replicas = 1500;
  phis.reserve(replicas);
  for (int r = 0; r < replicas; ++r) {
    RamseyTriple sampled = truth;
    for (int i = 0; i < 3; ++i) {
      sampled.p[i] = binomial_draw(rng, truth.p[i], shots) / double(shots);
    }
    const PhaseEstimate estimate = invert_three_point(sampled);
    phis.push_back(estimate.phi);
    sigma_sum.add(estimate.sigma_phi);
  }

  const Moments spread = sample_moments(phis);
  const double mean_sigma = sigma_sum.value() / replicas;
  CHECK(std::abs(spread.stddev / mean_sigma - 1.0) < 0.10);
  CHECK(std::abs(spread.mean - phi_true) < 4.0 * spread.stddev / std::sqrt(double(replicas)));
  // At the optimal bias the exact triple is the worked example geometry.
  CHECK(invert_three_point(truth).sigma_phi == doctest::Approx(0.0625).epsilon(1e-12));
}

TEST_CASE("optimal bias minimizes the propagated uncertainty") {
  const double amplitude = 0.8;
  const double offset = 0.5;
  const double phi = 0.3;
  const double best = optimal_bias(phi);
  CHECK(best == doctest::Approx(0.5 * pi - phi).epsilon(1e-14));

  const double sigma_best =
      propagate_phase_uncertainty(exact_triple(amplitude, offset, phi, best));
  for (int k = 0; k < 32; ++k) {
    const double xi1 = -pi + k * 2.0 * pi / 32.0;
    const double sigma =
        propagate_phase_uncertainty(exact_triple(amplitude, offset, phi, xi1));
    CHECK(sigma_best <= sigma + 1e-12);
  }
}

TEST_CASE("differential phase wraps and cancels common offsets") {
  PhaseEstimate first, second;
  first.phi = 3.0;
  first.sigma_phi = 0.06;
  second.phi = -3.0;
  second.sigma_phi = 0.08;

  const DifferentialPhase diff = differential_phase_estimate(first, second);
  CHECK(diff.delta_phi == doctest::Approx(6.0 - 2.0 * pi).epsilon(1e-12));
  CHECK(diff.sigma == doctest::Approx(std::hypot(0.06, 0.08)).epsilon(1e-14));
  CHECK(differential_phase_estimate(second, first).delta_phi ==
        doctest::Approx(-diff.delta_phi).epsilon(1e-12));

  // Any phase common to both arms drops out of the difference exactly.
  const double phi1 = 0.4;
  const double phi2 = 0.1;
  double reference = 0.0;
  for (double common : {0.0, 1.0, 2.5}) {
    const PhaseEstimate a = invert_three_point(exact_triple(0.7, 0.5, phi1 + common, 0.2));
    const PhaseEstimate b = invert_three_point(exact_triple(0.7, 0.5, phi2 + common, 0.2));
    const double delta = differential_phase_estimate(a, b).delta_phi;
    if (common == 0.0) {
      reference = delta;
      CHECK(delta == doctest::Approx(phi1 - phi2).epsilon(1e-12));
    } else {
      CHECK(delta == doctest::Approx(reference).epsilon(1e-12));
    }
  }
}

TEST_CASE("phase-to-epsilon conversion frozen value") {
  const SuperpositionSpec low = SuperpositionSpec::from_ground_population(0.2);
  const SuperpositionSpec high = SuperpositionSpec::from_ground_population(0.8);
  DifferentialPhase dphi;
  dphi.delta_phi = -0.2356458863573302;
  dphi.sigma = 0.0884;

  const EpsilonEstimate estimate = epsilon_from_delta_phase(dphi, low, high, 15e-3, 1e-8);
  CHECK(estimate.value == doctest::Approx(1e-12).epsilon(1e-12));
  // sigma scales out of the same denominator.
  CHECK(estimate.sigma / std::abs(estimate.value) ==
        doctest::Approx(0.0884 / 0.2356458863573302).epsilon(1e-12));
  CHECK(estimate.delta_phi == dphi.delta_phi);
  CHECK(estimate.sigma_delta_phi == dphi.sigma);
  CHECK(estimate.tau == 15e-3);
  CHECK(estimate.x0 == 1e-8);
  CHECK(estimate.correction_factor == 1.0);
}

TEST_CASE("epsilon round trips through the phase model") {
  const SuperpositionSpec low = SuperpositionSpec::from_ground_population(0.2);
  const SuperpositionSpec high = SuperpositionSpec::from_ground_population(0.8);
  const double tau = 15e-3;
  const double x0 = 1e-8;
  for (double eps : {1e-14, 1e-12, 1e-10, 1e-8}) {
    DifferentialPhase dphi;
    dphi.delta_phi = differential_phase_model(low, high, tau, x0, NonlinearCoupling{eps});
    dphi.sigma = 0.01;
    const EpsilonEstimate estimate = epsilon_from_delta_phase(dphi, low, high, tau, x0);
    CHECK(estimate.value == doctest::Approx(eps).epsilon(1e-12));
  }

  // A sub-unity correction factor inflates the recovered value by 1/factor.
  DifferentialPhase dphi;
  dphi.delta_phi = -0.1;
  dphi.sigma = 0.01;
  const double full = epsilon_from_delta_phase(dphi, low, high, tau, x0, 1.0).value;
  const double corrected = epsilon_from_delta_phase(dphi, low, high, tau, x0, 0.9).value;
  CHECK(corrected == doctest::Approx(full / 0.9).epsilon(1e-14));
}

TEST_CASE("epsilon conversion input validation") {
  const SuperpositionSpec low = SuperpositionSpec::from_ground_population(0.2);
  const SuperpositionSpec high = SuperpositionSpec::from_ground_population(0.8);
  DifferentialPhase dphi;
  dphi.delta_phi = -0.1;
  dphi.sigma = 0.01;

  try {
    epsilon_from_delta_phase(dphi, low, low, 15e-3, 1e-8);
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    REQUIRE(e.details().size() == 1);
    CHECK(e.details()[0].first == "ground_population");
  }
  CHECK_THROWS_AS(epsilon_from_delta_phase(dphi, low, high, 0.0, 1e-8), Error);
  CHECK_THROWS_AS(epsilon_from_delta_phase(dphi, low, high, 15e-3, 0.0), Error);
  CHECK_THROWS_AS(epsilon_from_delta_phase(dphi, low, high, 15e-3, 1e-8, 0.0), Error);
  CHECK_THROWS_AS(epsilon_from_delta_phase(dphi, low, high, 15e-3, 1e-8, 1.2), Error);
}

TEST_CASE("gaussian fit statistics") {
  Philox rng(777);
  std::vector<double> values;
  const int count = 4000;
  values.reserve(count);
  for (int i = 0; i < count; ++i) values.push_back(5.0 + 2.0 * rng.normal());

  const GaussianFitResult fit = fit_gaussian(values);
  CHECK(fit.count == count);
  CHECK_FALSE(fit.degenerate);
  CHECK(std::abs(fit.mean - 5.0) < 4.0 * 2.0 / std::sqrt(double(count)));
  CHECK(std::abs(fit.sigma - 2.0) < 4.0 * 2.0 / std::sqrt(2.0 * (count - 1.0)));
  // Histogram refit is plotting-grade: loose agreement is all it promises.
  CHECK(std::abs(fit.hist_mean - 5.0) < 0.2);
  CHECK(std::abs(fit.hist_sigma - 2.0) < 0.3);
  CHECK(fit.hist_amplitude > 0.0);

  const GaussianFitResult pinned = fit_gaussian({3.0, 3.0, 3.0, 3.0});
  CHECK(pinned.degenerate);
  CHECK(pinned.sigma == 0.0);
  CHECK(pinned.mean == 3.0);
  CHECK(pinned.hist_amplitude == 4.0);

  CHECK_THROWS_AS(fit_gaussian({1.0}), Error);
  CHECK_NOTHROW(fit_gaussian(values, 16));
}

TEST_CASE("wall time accounting") {
  CHECK(wall_time_per_estimate(0.015, 200, 0.001) == doctest::Approx(19.2).epsilon(1e-12));
  CHECK(wall_time_per_estimate(0.016, 200) == doctest::Approx(19.2).epsilon(1e-12));
  CHECK_THROWS_AS(wall_time_per_estimate(-1.0, 200), Error);
  CHECK_THROWS_AS(wall_time_per_estimate(0.015, 0), Error);
  CHECK_THROWS_AS(wall_time_per_estimate(0.015, 200, -0.1), Error);
}

TEST_CASE("tau grid point statistics") {
  const TauScanPoint point = tau_scan_statistics(0.01, {0.1, 0.3}, 2.0);
  CHECK(point.tau == 0.01);
  CHECK(point.estimates == 2);
  CHECK(point.sample_std == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
  CHECK(point.normalized_std == doctest::Approx(std::sqrt(0.02) * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(point.normalized_std_rate == doctest::Approx(point.normalized_std / 0.01).epsilon(1e-12));
  CHECK(point.wall_time == 2.0);
  CHECK(point.std_error == doctest::Approx(point.sample_std / std::sqrt(2.0)).epsilon(1e-12));

  try {
    tau_scan_statistics(0.01, {0.1}, 2.0);
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    REQUIRE(e.details().size() == 1);
    CHECK(e.details()[0].first == "estimates");
  }
  CHECK_THROWS_AS(tau_scan_statistics(0.0, {0.1, 0.3}, 2.0), Error);
  CHECK_THROWS_AS(tau_scan_statistics(0.01, {0.1, 0.3}, 0.0), Error);
}

}  // TEST_SUITE
