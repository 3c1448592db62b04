#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace ionramsey {

inline constexpr double pi = 3.14159265358979323846;

// Wrap an angle to (-pi, pi].
double wrap_pi(double angle) noexcept;

// Compensated (Neumaier) accumulator. Using it for every ensemble and
// quadrature reduction keeps sums independent of summation batch size at
// the 1e-12 level, which the reproducibility guarantees rely on.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_total(const std::vector<double>& xs) noexcept;

// Gauss-Hermite rule for integrals of f(x) weighted by exp(-x^2).
// Nodes are symmetric about zero; order up to 128 is supported.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

const GaussHermiteRule& gauss_hermite(int order);

// Adaptive Gauss-Kronrod (G7, K15) integration of f over [a, b].
// Throws an accuracy error when the tolerance cannot be met.
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double rel_tol = 1e-10, double abs_tol = 0.0, int max_depth = 48);

// Ordinary least squares line y = intercept + slope * x.
struct LineFit {
  double slope;
  double intercept;
  double rms_residual;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Mean and unbiased sample standard deviation.
struct Moments {
  double mean;
  double stddev;
  std::size_t count;
};

Moments sample_moments(const std::vector<double>& xs);

}  // namespace ionramsey
