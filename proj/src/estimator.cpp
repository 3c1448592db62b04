#include "ionramsey/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ionramsey/errors.hpp"
#include "ionramsey/numerics.hpp"

namespace ionramsey {

namespace {

constexpr double thirty_sqrt_two_pi = 30.0 * 2.5066282746310002;

struct TripleGeometry {
  double s;  // 2 P2 - P1 - P3 = A sin(Phi + xi1)
  double c;  // P3 - P1       = A cos(Phi + xi1)
  double a;
};

TripleGeometry geometry(const RamseyTriple& triple, double min_contrast) {
  const double s = 2.0 * triple.p[1] - triple.p[0] - triple.p[2];
  const double c = triple.p[2] - triple.p[0];
  const double a = std::hypot(s, c);
  if (!(a >= min_contrast)) {
    throw Error(ErrorKind::degenerate_contrast,
                "fringe contrast too small to carry a phase",
                {{"contrast", std::to_string(a)},
                 {"min_contrast", std::to_string(min_contrast)}});
  }
  return {s, c, a};
}

}  // namespace

void RamseyTriple::validate() const {
  ErrorDetails bad;
  for (int i = 0; i < 3; ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0))
      bad.emplace_back("p" + std::to_string(i + 1), "must lie in [0, 1]");
    if (shots[i] < 1) bad.emplace_back("shots" + std::to_string(i + 1), "must be at least 1");
  }
  if (!std::isfinite(xi1)) bad.emplace_back("xi1", "must be finite");
  if (!bad.empty()) throw Error(ErrorKind::validation, "invalid Ramsey triple", bad);
}

PhaseEstimate invert_three_point(const RamseyTriple& triple, double min_contrast) {
  triple.validate();
  const TripleGeometry g = geometry(triple, min_contrast);

  PhaseEstimate estimate;
  estimate.phi = wrap_pi(std::atan2(g.s, g.c) - triple.xi1);
  estimate.contrast = g.a;
  estimate.offset = 0.5 * (triple.p[0] + triple.p[2]);

  const double a2 = g.a * g.a;
  // Rows: gradients of (phi, A, B) with respect to (P1, P2, P3).
  const double grad[3][3] = {
      {(g.s - g.c) / a2, 2.0 * g.c / a2, -(g.s + g.c) / a2},
      {-(g.s + g.c) / g.a, 2.0 * g.s / g.a, (g.c - g.s) / g.a},
      {0.5, 0.0, 0.5},
  };
  double variance[3];
  for (int i = 0; i < 3; ++i) {
    variance[i] = triple.p[i] * (1.0 - triple.p[i]) / triple.shots[i];
  }
  for (int r = 0; r < 3; ++r) {
    for (int q = 0; q < 3; ++q) {
      double sum = 0.0;
      for (int i = 0; i < 3; ++i) sum += grad[r][i] * grad[q][i] * variance[i];
      estimate.covariance[r][q] = sum;
    }
  }
  estimate.sigma_phi = std::sqrt(estimate.covariance[0][0]);
  return estimate;
}

double propagate_phase_uncertainty(const RamseyTriple& triple, double min_contrast) {
  return invert_three_point(triple, min_contrast).sigma_phi;
}

double optimal_bias(double expected_phi) noexcept { return wrap_pi(0.5 * pi - expected_phi); }

DifferentialPhase differential_phase_estimate(const PhaseEstimate& first,
                                              const PhaseEstimate& second) {
  DifferentialPhase diff;
  diff.delta_phi = wrap_pi(first.phi - second.phi);
  diff.sigma = std::hypot(first.sigma_phi, second.sigma_phi);
  return diff;
}

EpsilonEstimate epsilon_from_delta_phase(const DifferentialPhase& dphi,
                                         const SuperpositionSpec& spec1,
                                         const SuperpositionSpec& spec2, double tau, double x0,
                                         double correction_factor) {
  spec1.validate();
  spec2.validate();
  if (!(tau > 0.0)) throw_validation("free evolution time must be positive");
  if (!(x0 > 0.0)) throw_validation("length scale must be positive");
  if (!(correction_factor > 0.0 && correction_factor <= 1.0 + 1e-6))
    throw_validation("correction factor must lie in (0, 1]");

  const double w01 = spec1.alpha0 * spec1.alpha0;
  const double w02 = spec2.alpha0 * spec2.alpha0;
  if (std::abs(w01 - w02) < 1e-12) {
    throw Error(ErrorKind::validation,
                "identical preparations carry no differential phase",
                {{"ground_population", std::to_string(w01)}});
  }
  const double w11 = spec1.alpha1 * spec1.alpha1;
  const double w12 = spec2.alpha1 * spec2.alpha1;
  const double k = (10.0 * (w01 - w02) + (w11 - w12)) / thirty_sqrt_two_pi;
  const double scale = constants().coulomb / (constants().hbar * x0);
  const double denom = k * scale * tau * correction_factor;

  EpsilonEstimate out;
  out.value = dphi.delta_phi / denom;
  out.sigma = std::abs(dphi.sigma / denom);
  out.delta_phi = dphi.delta_phi;
  out.sigma_delta_phi = dphi.sigma;
  out.correction_factor = correction_factor;
  out.tau = tau;
  out.x0 = x0;
  return out;
}

GaussianFitResult fit_gaussian(const std::vector<double>& values, int bins) {
  if (values.size() < 2) throw_validation("need at least two samples to fit a spread");
  const Moments moments = sample_moments(values);

  GaussianFitResult result;
  result.mean = moments.mean;
  result.sigma = moments.stddev;
  result.degenerate = !(moments.stddev > 0.0);
  result.count = values.size();

  if (result.degenerate) {
    result.hist_amplitude = static_cast<double>(values.size());
    result.hist_mean = moments.mean;
    result.hist_sigma = 0.0;
    return result;
  }

  const int nbins =
      bins > 0 ? bins : std::max(8, static_cast<int>(std::lround(std::sqrt(values.size()))));
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double width = (*hi_it - lo) / nbins;
  std::vector<double> counts(nbins, 0.0);
  for (double v : values) {
    int k = static_cast<int>((v - lo) / width);
    counts[std::clamp(k, 0, nbins - 1)] += 1.0;
  }

  // Count-weighted parabola through ln(counts): linear in the log-Gaussian
  // parameters, stable against empty bins, plotting-grade only.
  double m[3][3] = {};
  double rhs[3] = {};
  for (int k = 0; k < nbins; ++k) {
    const double y = counts[k];
    if (y <= 0.0) continue;
    const double x = lo + (k + 0.5) * width;
    const double w = y * y;
    const double logy = std::log(y);
    const double basis[3] = {1.0, x, x * x};
    for (int r = 0; r < 3; ++r) {
      for (int q = 0; q < 3; ++q) m[r][q] += w * basis[r] * basis[q];
      rhs[r] += w * basis[r] * logy;
    }
  }
  // Gaussian elimination with partial pivoting on the 3x3 system.
  double aug[3][4];
  for (int r = 0; r < 3; ++r) {
    for (int q = 0; q < 3; ++q) aug[r][q] = m[r][q];
    aug[r][3] = rhs[r];
  }
  bool solved = true;
  for (int col = 0; col < 3 && solved; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(aug[r][col]) > std::abs(aug[pivot][col])) pivot = r;
    }
    if (std::abs(aug[pivot][col]) < 1e-30) {
      solved = false;
      break;
    }
    std::swap(aug[col], aug[pivot]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = aug[r][col] / aug[col][col];
      for (int q = col; q < 4; ++q) aug[r][q] -= f * aug[col][q];
    }
  }

  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  if (solved) {
    c0 = aug[0][3] / aug[0][0];
    c1 = aug[1][3] / aug[1][1];
    c2 = aug[2][3] / aug[2][2];
  }
  if (solved && c2 < 0.0) {
    result.hist_sigma = std::sqrt(-0.5 / c2);
    result.hist_mean = -0.5 * c1 / c2;
    result.hist_amplitude = std::exp(c0 - 0.25 * c1 * c1 / c2);
  } else {
    result.hist_mean = moments.mean;
    result.hist_sigma = moments.stddev;
    result.hist_amplitude = *std::max_element(counts.begin(), counts.end());
  }
  return result;
}

double wall_time_per_estimate(double tau, int shots_per_point, double dead_time) {
  if (!(tau >= 0.0)) throw_validation("free evolution time must be non-negative");
  if (shots_per_point < 1) throw_validation("shots per point must be at least 1");
  if (!(dead_time >= 0.0)) throw_validation("dead time must be non-negative");
  return 6.0 * shots_per_point * (tau + dead_time);
}

TauScanPoint tau_scan_statistics(double tau, const std::vector<double>& delta_phis,
                                 double wall_time) {
  if (!(tau > 0.0)) throw_validation("free evolution time must be positive");
  if (!(wall_time > 0.0)) throw_validation("wall time must be positive");
  if (delta_phis.size() < 2) {
    throw Error(ErrorKind::validation, "need at least two estimates to measure a spread",
                {{"estimates", std::to_string(delta_phis.size())}});
  }
  const Moments moments = sample_moments(delta_phis);
  TauScanPoint point;
  point.tau = tau;
  point.estimates = delta_phis.size();
  point.sample_std = moments.stddev;
  point.normalized_std = moments.stddev * std::sqrt(wall_time);
  point.normalized_std_rate = point.normalized_std / tau;
  point.wall_time = wall_time;
  point.std_error = moments.stddev / std::sqrt(2.0 * (delta_phis.size() - 1.0));
  return point;
}

}  // namespace ionramsey
