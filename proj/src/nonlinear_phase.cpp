#include "ionramsey/nonlinear_phase.hpp"

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "ionramsey/errors.hpp"
#include "ionramsey/numerics.hpp"

namespace ionramsey {

namespace {

constexpr double sqrt_pi = 1.7724538509055160273;
constexpr int inner_quad_order = 64;

// (10 w0 + w1) / (30 sqrt(2 pi)) with unit branch weights.
constexpr double ideal_w0_coefficient = 10.0 / 30.0 * 0.3989422804014327;  // /sqrt(2 pi)
constexpr double ideal_w1_coefficient = 1.0 / 30.0 * 0.3989422804014327;

// Per-axis convolutions of the source densities against the resolvent kernel
// exp(-t^2 (u - v)^2), with lengths in units of x0 and w = x0 t:
//   rho_0:        C0 = lam^{-1/2} exp(-k u^2)
//   rho_1:        C1 = lam^{-3/2} (1 + 2 w^4 u^2 / lam) exp(-k u^2)
//   g = psi0psi1: Cg = sqrt(2) w^2 u lam^{-3/2} exp(-k u^2)
// where lam = 1 + w^2 and k = w^2 / lam. The outer integral against the
// measured density is then a pure Gauss-Hermite sum.
struct AxisKernels {
  double lam;
  double k;
  double w2;
};

AxisKernels axis_kernels(double w) noexcept {
  const double w2 = w * w;
  return {1.0 + w2, w2 / (1.0 + w2), w2};
}

// <rho_0 | kernel * rho_0>
double pair_00(double w, const GaussHermiteRule& rule) {
  const AxisKernels a = axis_kernels(w);
  CompensatedSum sum;
  for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
    const double xi2 = rule.nodes[j] * rule.nodes[j];
    sum.add(rule.weights[j] * std::exp(-a.k * xi2));
  }
  return sum.value() / (sqrt_pi * std::sqrt(a.lam));
}

// <rho_0 | kernel * rho_1>
double pair_01(double w, const GaussHermiteRule& rule) {
  const AxisKernels a = axis_kernels(w);
  const double poly = 2.0 * a.w2 * a.w2 / a.lam;
  CompensatedSum sum;
  for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
    const double xi2 = rule.nodes[j] * rule.nodes[j];
    sum.add(rule.weights[j] * (1.0 + poly * xi2) * std::exp(-a.k * xi2));
  }
  return sum.value() / (sqrt_pi * a.lam * std::sqrt(a.lam));
}

// <rho_1 | kernel * rho_1>
double pair_11(double w, const GaussHermiteRule& rule) {
  const AxisKernels a = axis_kernels(w);
  const double poly = 2.0 * a.w2 * a.w2 / a.lam;
  CompensatedSum sum;
  for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
    const double xi2 = rule.nodes[j] * rule.nodes[j];
    sum.add(rule.weights[j] * 2.0 * xi2 * (1.0 + poly * xi2) * std::exp(-a.k * xi2));
  }
  return sum.value() / (sqrt_pi * a.lam * std::sqrt(a.lam));
}

// <g | kernel * g>
double pair_gg(double w, const GaussHermiteRule& rule) {
  const AxisKernels a = axis_kernels(w);
  CompensatedSum sum;
  for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
    const double xi2 = rule.nodes[j] * rule.nodes[j];
    sum.add(rule.weights[j] * xi2 * std::exp(-a.k * xi2));
  }
  return 2.0 * a.w2 * sum.value() / (sqrt_pi * a.lam * std::sqrt(a.lam));
}

// Gaussian-Gaussian transverse factor at 1-sigma width sigma_hat (units of x0).
double pair_gauss(double w, double sigma_hat, const GaussHermiteRule& rule) {
  const double two_s2 = 2.0 * sigma_hat * sigma_hat;
  const double lam = 1.0 + two_s2 * w * w;
  const double k = two_s2 * w * w / lam;
  CompensatedSum sum;
  for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
    const double xi2 = rule.nodes[j] * rule.nodes[j];
    sum.add(rule.weights[j] * std::exp(-k * xi2));
  }
  return sum.value() / (sqrt_pi * std::sqrt(lam));
}

// One Coulomb pair integral in units of 1/x0, via the resolvent
// 1/r = (2/sqrt(pi)) Int_0^inf exp(-t^2 r^2) dt mapped onto w = tan(phi).
template <typename AxialPair>
double resolvent_integral(AxialPair&& axial, double sy_hat, double sz_hat, double rel_tol) {
  const GaussHermiteRule& rule = gauss_hermite(inner_quad_order);
  const auto integrand = [&](double phi) {
    const double w = std::tan(phi);
    const double jac = 1.0 + w * w;  // sec^2(phi)
    return axial(w, rule) * pair_gauss(w, sy_hat, rule) * pair_gauss(w, sz_hat, rule) * jac;
  };
  return (2.0 / sqrt_pi) * integrate_adaptive(integrand, 0.0, 0.5 * pi, rel_tol);
}


struct TransverseWidths {
  double sy;
  double sz;
};

TransverseWidths transverse_widths(const TrapConfig& trap, TransverseModel transverse) {
  const double nbar_y = transverse == TransverseModel::thermal ? trap.nbar_y : 0.0;
  const double nbar_z = transverse == TransverseModel::thermal ? trap.nbar_z : 0.0;
  return {thermal_gaussian_width(trap.x0_y(), nbar_y),
          thermal_gaussian_width(trap.x0_z(), nbar_z)};
}

void validate_numeric_options(const NumericRateOptions& options) {
  ErrorDetails bad;
  if (options.periods < 10) bad.emplace_back("periods", "must be at least 10");
  if (options.steps_per_period < 32) bad.emplace_back("steps_per_period", "must be at least 32");
  if (!(options.quad_rel_tol > 0.0) || options.quad_rel_tol > 1e-2)
    bad.emplace_back("quad_rel_tol", "must lie in (0, 1e-2]");
  if (!(options.fit_rel_tol > 0.0)) bad.emplace_back("fit_rel_tol", "must be positive");
  if (!bad.empty()) throw Error(ErrorKind::validation, "invalid numeric rate options", bad);
}

}  // namespace

SuperpositionSpec SuperpositionSpec::from_theta(double theta) {
  SuperpositionSpec spec;
  spec.alpha0 = std::abs(std::sin(0.5 * theta));
  spec.alpha1 = std::abs(std::cos(0.5 * theta));
  return spec;
}

SuperpositionSpec SuperpositionSpec::from_ground_population(double p0) {
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw_validation("ground population must lie in [0, 1]");
  SuperpositionSpec spec;
  spec.alpha0 = std::sqrt(p0);
  spec.alpha1 = std::sqrt(1.0 - p0);
  return spec;
}

void SuperpositionSpec::validate() const {
  ErrorDetails bad;
  if (!(alpha0 >= 0.0)) bad.emplace_back("alpha0", "must be non-negative");
  if (!(alpha1 >= 0.0)) bad.emplace_back("alpha1", "must be non-negative");
  const double norm = alpha0 * alpha0 + alpha1 * alpha1;
  if (!(std::abs(norm - 1.0) <= 1e-12))
    bad.emplace_back("norm", "alpha0^2 + alpha1^2 must equal 1 within 1e-12, got " +
                                 std::to_string(norm));
  if (!bad.empty()) throw Error(ErrorKind::validation, "invalid motional superposition", bad);
}

double NonlinearCoupling::kappa() const { return epsilon_gamma * constants().coulomb; }

const char* to_string(RateMethod method) noexcept {
  switch (method) {
    case RateMethod::closed_form: return "closed_form";
    case RateMethod::numeric_secular: return "numeric_secular";
    case RateMethod::numeric_dynamic: return "numeric_dynamic";
  }
  return "unknown";
}

CoulombPairIntegrals coulomb_pair_integrals(double x0, double sigma_y, double sigma_z,
                                            double rel_tol) {
  if (!(x0 > 0.0)) throw_validation("length scale must be positive");
  if (!(sigma_y > 0.0 && sigma_z > 0.0)) throw_validation("transverse widths must be positive");
  if (!(rel_tol > 0.0)) throw_validation("relative tolerance must be positive");
  const double sy = sigma_y / x0;
  const double sz = sigma_z / x0;
  CoulombPairIntegrals out;
  out.j00 = resolvent_integral(pair_00, sy, sz, rel_tol) / x0;
  out.j01 = resolvent_integral(pair_01, sy, sz, rel_tol) / x0;
  out.j11 = resolvent_integral(pair_11, sy, sz, rel_tol) / x0;
  out.kgg = resolvent_integral(pair_gg, sy, sz, rel_tol) / x0;
  return out;
}

double nl_potential_at_point(const GaussianWidths& source, const std::array<double, 3>& center,
                             const std::array<double, 3>& point, double kappa) {
  if (!(source.sx > 0.0 && source.sy > 0.0 && source.sz > 0.0))
    throw_validation("source widths must be positive");
  const double scale = std::min(source.sx, std::min(source.sy, source.sz));
  const std::array<double, 3> sig = {source.sx / scale, source.sy / scale, source.sz / scale};
  std::array<double, 3> delta;
  for (int i = 0; i < 3; ++i) delta[i] = (point[i] - center[i]) / scale;
  const auto integrand = [&](double phi) {
    const double g = std::tan(phi);
    const double jac = 1.0 + g * g;
    const double g2 = g * g;
    double value = jac;
    for (int i = 0; i < 3; ++i) {
      const double lam = 1.0 + 2.0 * sig[i] * sig[i] * g2;
      value *= std::exp(-g2 * delta[i] * delta[i] / lam) / std::sqrt(lam);
    }
    return value;
  };
  return kappa * (2.0 / sqrt_pi) / scale * integrate_adaptive(integrand, 0.0, 0.5 * pi, 1e-10);
}

double phase_rate_closed_form(const SuperpositionSpec& spec, double x0,
                              const NonlinearCoupling& coupling) {
  spec.validate();
  const PhaseRateCoefficients coeff = phase_rate_coefficients_closed_form(x0, coupling);
  return coeff.rate(spec.alpha0 * spec.alpha0, spec.alpha1 * spec.alpha1);
}

PhaseRateCoefficients phase_rate_coefficients_closed_form(double x0,
                                                          const NonlinearCoupling& coupling) {
  if (!(x0 > 0.0)) throw_validation("length scale must be positive");
  const double scale = coupling.kappa() / (constants().hbar * x0);
  return {scale * ideal_w0_coefficient, scale * ideal_w1_coefficient};
}

PhaseRateCoefficients phase_rate_coefficients_numeric(const TrapConfig& trap,
                                                      const NonlinearCoupling& coupling,
                                                      TransverseModel transverse,
                                                      double rel_tol) {
  trap.validate();
  const TransverseWidths tw = transverse_widths(trap, transverse);
  const CoulombPairIntegrals j = coulomb_pair_integrals(trap.x0_x(), tw.sy, tw.sz, rel_tol);
  const double scale = coupling.kappa() / constants().hbar;
  return {scale * (j.j00 - j.j01), scale * (j.j01 - j.j11)};
}

PhaseRate phase_rate_numeric(const SuperpositionSpec& spec, const TrapConfig& trap,
                             const NonlinearCoupling& coupling,
                             const NumericRateOptions& options) {
  spec.validate();
  trap.validate();
  validate_numeric_options(options);

  const double w0 = spec.alpha0 * spec.alpha0;
  const double w1 = spec.alpha1 * spec.alpha1;
  const PhaseRateCoefficients coeff =
      phase_rate_coefficients_numeric(trap, coupling, options.transverse, options.quad_rel_tol);

  if (!options.dynamic) {
    const double rate = coeff.rate(w0, w1);
    return {rate, RateMethod::numeric_secular, options.quad_rel_tol * std::abs(rate), false};
  }

  // A branch with no amplitude carries no observable relative phase, and the
  // phase of the populated branch evolves at the secular rate exactly.
  if (spec.alpha0 < 1e-8 || spec.alpha1 < 1e-8) {
    const double rate = coeff.rate(w0, w1);
    return {rate, RateMethod::numeric_secular, options.quad_rel_tol * std::abs(rate), false};
  }

  const TransverseWidths tw = transverse_widths(trap, options.transverse);
  const CoulombPairIntegrals j =
      coulomb_pair_integrals(trap.x0_x(), tw.sy, tw.sz, options.quad_rel_tol);

  // The propagation is linear in the coupling at first order, so it runs at a
  // reduced strength where the step phase is small, then rescales. The target
  // keeps the total accumulated phase near 0.03 rad: far above roundoff, far
  // below any wrap, and deep in the linear-response regime.
  const double period = 2.0 * pi / trap.nu_x;
  const double total_time = options.periods * period;
  const double scale_rate =
      std::abs(phase_rate_coefficients_closed_form(trap.x0_x(), NonlinearCoupling{1.0})
                   .rate(w0, w1));
  const double eps_run = 0.03 / (scale_rate * total_time);
  const double kappa_run = NonlinearCoupling{eps_run}.kappa();
  const double hbar = constants().hbar;
  const double nu = trap.nu_x;

  using cplx = std::complex<double>;
  struct State {
    cplx c0, c1;
  };
  const auto derivative = [&](double t, const State& s) -> State {
    const double p0 = std::norm(s.c0);
    const double p1 = std::norm(s.c1);
    const double v00 = kappa_run * (p0 * j.j00 + p1 * j.j01);
    const double v11 = kappa_run * (p0 * j.j01 + p1 * j.j11);
    cplx h01(0.0, 0.0);
    if (options.cross_terms) {
      const cplx rot(std::cos(nu * t), std::sin(nu * t));
      const double chi = 2.0 * std::real(s.c0 * std::conj(s.c1) * rot);
      h01 = kappa_run * chi * j.kgg * std::conj(rot);
    }
    const cplx minus_i_over_hbar(0.0, -1.0 / hbar);
    return {minus_i_over_hbar * (v00 * s.c0 + h01 * s.c1),
            minus_i_over_hbar * (v11 * s.c1 + std::conj(h01) * s.c0)};
  };

  State state{cplx(spec.alpha0, 0.0), cplx(spec.alpha1, 0.0)};
  const double dt = period / options.steps_per_period;
  std::vector<double> times, phases;
  times.reserve(options.periods + 1);
  phases.reserve(options.periods + 1);

  double previous = 0.0;
  double unwrapped = 0.0;
  const auto record = [&](double t) {
    // Relative phase of |1> against |0>; stroboscopic samples stay far from
    // the wrap at eps_run, so plain increment unwrapping is exact here.
    const double raw = std::arg(state.c1 * std::conj(state.c0));
    unwrapped += wrap_pi(raw - previous);
    previous = raw;
    times.push_back(t);
    phases.push_back(unwrapped);
  };

  record(0.0);
  for (int p = 0; p < options.periods; ++p) {
    for (int step = 0; step < options.steps_per_period; ++step) {
      const double t = (p * options.steps_per_period + step) * dt;
      const State k1 = derivative(t, state);
      const State s2{state.c0 + 0.5 * dt * k1.c0, state.c1 + 0.5 * dt * k1.c1};
      const State k2 = derivative(t + 0.5 * dt, s2);
      const State s3{state.c0 + 0.5 * dt * k2.c0, state.c1 + 0.5 * dt * k2.c1};
      const State k3 = derivative(t + 0.5 * dt, s3);
      const State s4{state.c0 + dt * k3.c0, state.c1 + dt * k3.c1};
      const State k4 = derivative(t + dt, s4);
      state.c0 += dt / 6.0 * (k1.c0 + 2.0 * k2.c0 + 2.0 * k3.c0 + k4.c0);
      state.c1 += dt / 6.0 * (k1.c1 + 2.0 * k2.c1 + 2.0 * k3.c1 + k4.c1);
    }
    const double norm = std::sqrt(std::norm(state.c0) + std::norm(state.c1));
    state.c0 /= norm;
    state.c1 /= norm;
    record((p + 1) * period);
  }

  const LineFit fit = fit_line(times, phases);
  const double span = std::abs(fit.slope) * total_time;
  if (span > 0.0 && fit.rms_residual > options.fit_rel_tol * span) {
    throw Error(ErrorKind::accuracy, "secular phase fit residual exceeds tolerance",
                {{"relative_residual", std::to_string(fit.rms_residual / span)},
                 {"fit_rel_tol", std::to_string(options.fit_rel_tol)}});
  }

  const double rate = fit.slope * (coupling.epsilon_gamma / eps_run);
  const double tolerance =
      std::abs(rate) * std::max(options.quad_rel_tol,
                                span > 0.0 ? fit.rms_residual / span : 0.0);
  return {rate, RateMethod::numeric_dynamic, tolerance, options.cross_terms};
}

double differential_phase_model(const SuperpositionSpec& spec1, const SuperpositionSpec& spec2,
                                double tau, double x0, const NonlinearCoupling& coupling) {
  if (!(tau >= 0.0)) throw_validation("free evolution time must be non-negative");
  return (phase_rate_closed_form(spec1, x0, coupling) -
          phase_rate_closed_form(spec2, x0, coupling)) *
         tau;
}

double spread_correction_factor(const TrapConfig& trap, TransverseModel transverse,
                                double rel_tol) {
  const NonlinearCoupling unit{1.0};
  const PhaseRateCoefficients numeric =
      phase_rate_coefficients_numeric(trap, unit, transverse, rel_tol);
  const PhaseRateCoefficients ideal = phase_rate_coefficients_closed_form(trap.x0_x(), unit);
  return (numeric.per_w0 - numeric.per_w1) / (ideal.per_w0 - ideal.per_w1);
}

}  // namespace ionramsey
