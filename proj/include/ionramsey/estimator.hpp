#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "ionramsey/nonlinear_phase.hpp"

namespace ionramsey {

// Measured excitation fractions at analysis phases xi1, xi1 + pi/2, xi1 + pi,
// with the shot count behind each fraction.
struct RamseyTriple {
  std::array<double, 3> p{};   // P(D) at the three points
  double xi1 = 0.0;
  std::array<int, 3> shots{};  // per-point shot counts

  void validate() const;
};

// Result of inverting one triple against P = B - (A/2) cos(Phi + xi).
struct PhaseEstimate {
  double phi = 0.0;       // wrapped to (-pi, pi]
  double contrast = 0.0;  // A
  double offset = 0.0;    // B
  double sigma_phi = 0.0; // quantum-projection-noise propagation
  // Covariance of (phi, A, B) from the same linearization.
  std::array<std::array<double, 3>, 3> covariance{};
};

// Exact three-point inversion. Contrast below min_contrast carries no usable
// phase and raises a degenerate-contrast error.
PhaseEstimate invert_three_point(const RamseyTriple& triple, double min_contrast = 1e-3);

// sigma_Phi = sqrt(sum_i (dPhi/dP_i)^2 P_i(1-P_i)/N_i), using the measured
// fractions themselves for the binomial variances.
double propagate_phase_uncertainty(const RamseyTriple& triple, double min_contrast = 1e-3);

// Bias phase that minimizes the propagated sigma_Phi: xi1 = pi/2 - phi.
double optimal_bias(double expected_phi) noexcept;

struct DifferentialPhase {
  double delta_phi = 0.0;  // wrapped to (-pi, pi]
  double sigma = 0.0;
};

// Difference of two phase estimates taken back-to-back; anything common to
// both (linear detuning phase, Stark offset) cancels exactly.
DifferentialPhase differential_phase_estimate(const PhaseEstimate& first,
                                              const PhaseEstimate& second);

struct EpsilonEstimate {
  double value = 0.0;
  double sigma = 0.0;
  double delta_phi = 0.0;
  double sigma_delta_phi = 0.0;
  double correction_factor = 1.0;  // in (0, 1]
  double tau = 0.0;
  double x0 = 0.0;
};

// Converts a differential phase into the non-linearity scale:
//   epsilon = delta_phi / (K * coulomb/(hbar x0) * tau * correction_factor),
// K = [(10 a01^2 + a11^2) - (10 a02^2 + a12^2)] / (30 sqrt(2 pi)).
// Identical preparations make the conversion singular and are rejected.
EpsilonEstimate epsilon_from_delta_phase(const DifferentialPhase& dphi,
                                         const SuperpositionSpec& spec1,
                                         const SuperpositionSpec& spec2, double tau, double x0,
                                         double correction_factor = 1.0);

struct GaussianFitResult {
  double mean = 0.0;
  double sigma = 0.0;        // unbiased sample deviation; 0 flags degenerate
  bool degenerate = false;   // all samples equal
  std::size_t count = 0;
  // Least-squares Gaussian refit of the histogram, for plotting parity only;
  // mean/sigma above are the statistics of record.
  double hist_amplitude = 0.0;
  double hist_mean = 0.0;
  double hist_sigma = 0.0;
};

GaussianFitResult fit_gaussian(const std::vector<double>& values, int bins = 0);

// Integration time behind one differential estimate: both theta blocks, all
// three analysis phases, optional per-shot dead time.
double wall_time_per_estimate(double tau, int shots_per_point, double dead_time = 0.0);

struct TauScanPoint {
  double tau = 0.0;
  std::size_t estimates = 0;
  double sample_std = 0.0;          // std of the delta-phi estimates, rad
  double normalized_std = 0.0;      // sample_std * sqrt(wall_time / 1 s), rad
  double normalized_std_rate = 0.0; // normalized_std / tau: per-second-equivalent
  double wall_time = 0.0;           // per estimate, s
  double std_error = 0.0;           // sampling error of sample_std itself
};

// Statistics for one tau grid point. Fewer than two estimates cannot give a
// spread and are rejected (callers skip such points with a warning).
TauScanPoint tau_scan_statistics(double tau, const std::vector<double>& delta_phis,
                                 double wall_time);

}  // namespace ionramsey
