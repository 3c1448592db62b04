#pragma once

#include <array>

#include "ionramsey/oscillator.hpp"

namespace ionramsey {

// Motional superposition alpha0|0> + alpha1|1> on the interferometer mode.
// Real non-negative amplitudes; phases live in the interferometer itself.
struct SuperpositionSpec {
  double alpha0 = 0.0;
  double alpha1 = 0.0;

  static SuperpositionSpec from_theta(double theta);              // alpha0 = sin(theta/2)
  static SuperpositionSpec from_ground_population(double p0);     // alpha0 = sqrt(p0)

  void validate() const;  // requires alpha0^2 + alpha1^2 = 1 within 1e-12
};

// Strength of the non-linear self-interaction. kappa() is the energy scale
// epsilon_gamma * e^2/(4 pi eps0) entering every potential integral.
struct NonlinearCoupling {
  double epsilon_gamma = 0.0;

  double kappa() const;
};

enum class RateMethod { closed_form, numeric_secular, numeric_dynamic };

const char* to_string(RateMethod method) noexcept;

struct PhaseRate {
  double rate = 0.0;       // d(phi)/dt between |1> and |0>, rad/s
  RateMethod method = RateMethod::closed_form;
  double tolerance = 0.0;  // estimated numerical uncertainty on rate, rad/s
  bool cross_terms = false;
};

// Per-axis 1-sigma widths of a 3-D Gaussian density.
struct GaussianWidths {
  double sx = 0.0, sy = 0.0, sz = 0.0;
};

// How the spectator (y, z) modes enter the source density and the energy
// integrals: ground-state widths, or thermally broadened ones using the
// trap's nbar values.
enum class TransverseModel { ground, thermal };

// Coulomb self-energy integrals over the {|0>, |1>} pair of the x mode with
// frozen Gaussian transverse densities, in units of 1/m:
//   j00 = <rho_0 | 1/r | rho_0>, j01, j11, and the transition-density term
//   kgg = <g | 1/r | g> with g = psi_0 psi_1. Multiply by kappa for energy.
// All four are evaluated by quadrature (Gauss-Hermite over the outer density,
// adaptive integration of the Gaussian-kernel resolvent), independently of
// any closed-form rate expression.
struct CoulombPairIntegrals {
  double j00 = 0.0;
  double j01 = 0.0;
  double j11 = 0.0;
  double kgg = 0.0;
};

CoulombPairIntegrals coulomb_pair_integrals(double x0, double sigma_y, double sigma_z,
                                            double rel_tol = 1e-8);

// Coulomb potential energy at `point` generated by a unit-weight anisotropic
// Gaussian density centred at `center`, scaled by kappa (J m):
//   V(x) = kappa * Integral d^3x1 rho(x1) / |x1 - x|.
// The isotropic case reduces to kappa * erf(r / (sigma sqrt(2))) / r with the
// finite limit kappa * sqrt(2/pi) / sigma at r = 0.
double nl_potential_at_point(const GaussianWidths& source, const std::array<double, 3>& center,
                             const std::array<double, 3>& point, double kappa);

// Closed-form secular phase rate for the isotropic ground-state ideal:
//   rate = epsilon_gamma (10 alpha0^2 + alpha1^2) / (30 sqrt(2 pi)) * e^2/(4 pi eps0) / (hbar x0).
double phase_rate_closed_form(const SuperpositionSpec& spec, double x0,
                              const NonlinearCoupling& coupling);

// The same rate expressed as coefficients linear in the branch weights:
//   rate(w0, w1) = w0 * per_w0 + w1 * per_w1.
// This is the contract the pulse simulator consumes when it re-evaluates the
// rate piecewise from instantaneous branch weights.
struct PhaseRateCoefficients {
  double per_w0 = 0.0;  // rad/s per unit |0> weight
  double per_w1 = 0.0;  // rad/s per unit |1> weight

  double rate(double w0, double w1) const { return w0 * per_w0 + w1 * per_w1; }
};

PhaseRateCoefficients phase_rate_coefficients_closed_form(double x0,
                                                          const NonlinearCoupling& coupling);

PhaseRateCoefficients phase_rate_coefficients_numeric(const TrapConfig& trap,
                                                      const NonlinearCoupling& coupling,
                                                      TransverseModel transverse,
                                                      double rel_tol = 1e-8);

struct NumericRateOptions {
  TransverseModel transverse = TransverseModel::ground;
  bool cross_terms = false;      // include the nu_x-oscillating source term (dynamic only)
  bool dynamic = true;           // false: static secular matrix, no time integration
  double quad_rel_tol = 1e-8;
  int periods = 12;              // integration window, motional periods (>= 10)
  int steps_per_period = 256;
  double fit_rel_tol = 1e-3;     // max rms residual of the phase-slope fit, relative
};

// First-order numerical evaluation of the same rate: builds the self-potential
// of the instantaneous source density by quadrature, propagates the two-level
// amplitudes in the interaction picture, and extracts the secular phase slope
// from stroboscopic samples over >= 10 motional periods.
PhaseRate phase_rate_numeric(const SuperpositionSpec& spec, const TrapConfig& trap,
                             const NonlinearCoupling& coupling,
                             const NumericRateOptions& options = {});

// Difference of accumulated non-linear phases between two preparations after
// free evolution tau: phi(tau; spec1) - phi(tau; spec2), in rad (not wrapped).
double differential_phase_model(const SuperpositionSpec& spec1, const SuperpositionSpec& spec2,
                                double tau, double x0, const NonlinearCoupling& coupling);

// Ratio of the numeric secular weight-difference coefficient (thermal
// transverse spread, trap anisotropy) to the closed-form isotropic one.
// Multiplies the closed-form denominator when converting a measured phase
// difference into epsilon; <= 1 for thermally broadened spectator modes.
double spread_correction_factor(const TrapConfig& trap, TransverseModel transverse,
                                double rel_tol = 1e-8);

}  // namespace ionramsey
