#include "ionramsey/numerics.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "ionramsey/errors.hpp"

namespace ionramsey {

double wrap_pi(double angle) noexcept {
  double w = std::remainder(angle, 2.0 * pi);
  if (w <= -pi) w += 2.0 * pi;
  return w;
}

void CompensatedSum::add(double x) noexcept {
  double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

double compensated_total(const std::vector<double>& xs) noexcept {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

namespace {

// Nodes of H_n by Newton iteration on the scaled recurrence; standard
// construction, largest root first, deflated inward from the asymptotic guess.
GaussHermiteRule build_gauss_hermite(int order) {
  GaussHermiteRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);

  const double pim4 = 0.7511255444649425;  // pi^(-1/4)
  const int half = (order + 1) / 2;
  double z = 0.0;

  for (int i = 0; i < half; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * order + 1.0) - 1.85575 * std::pow(2.0 * order + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(order), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * rule.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * rule.nodes[1];
    } else {
      z = 2.0 * z - rule.nodes[i - 2];
    }

    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 0; j < order; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * order) * p2;
      double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }

    rule.nodes[i] = z;                      // stored descending for i < half
    rule.weights[i] = 2.0 / (pp * pp);
  }

  // Mirror to the full symmetric rule, ascending order.
  std::vector<double> nodes(order), weights(order);
  for (int i = 0; i < half; ++i) {
    nodes[order - 1 - i] = rule.nodes[i];
    weights[order - 1 - i] = rule.weights[i];
    nodes[i] = -rule.nodes[i];
    weights[i] = rule.weights[i];
  }
  if (order % 2 == 1) nodes[half - 1] = 0.0;
  rule.nodes = std::move(nodes);
  rule.weights = std::move(weights);
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int order) {
  if (order < 1 || order > 128) {
    throw Error(ErrorKind::unsupported,
                "Gauss-Hermite order must lie in [1, 128], got " + std::to_string(order));
  }
  static std::map<int, GaussHermiteRule> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) {
    it = cache.emplace(order, build_gauss_hermite(order)).first;
  }
  return it->second;
}

namespace {

// Kronrod 15-point extension of Gauss 7 on [-1, 1].
constexpr double kronrod_nodes[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0,
};
constexpr double kronrod_weights[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728,
};
constexpr double gauss_weights[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469,
};

struct PanelResult {
  double kronrod;
  double error;
};

PanelResult gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double fv[15];
  for (int i = 0; i < 7; ++i) {
    fv[i] = f(c - h * kronrod_nodes[i]);
    fv[14 - i] = f(c + h * kronrod_nodes[i]);
  }
  fv[7] = f(c);

  CompensatedSum gk;
  CompensatedSum g;
  for (int i = 0; i < 8; ++i) {
    double pair = (i == 7) ? fv[7] : fv[i] + fv[14 - i];
    gk.add(kronrod_weights[i] * pair);
    if (i % 2 == 1) g.add(gauss_weights[i / 2] * pair);
  }
  double kron = gk.value() * h;
  double diff = std::abs(kron - g.value() * h);
  // Standard QUADPACK-style sharpened error estimate.
  double err = diff;
  if (diff > 0.0) err = diff * std::min(1.0, std::pow(200.0 * diff / std::max(1e-300, std::abs(kron)), 1.5));
  return {kron, std::max(err, diff * 1e-6)};
}

double integrate_recursive(const std::function<double(double)>& f, double a, double b,
                           double tol, int depth, int max_depth) {
  PanelResult whole = gk15(f, a, b);
  if (whole.error <= tol || depth >= max_depth) {
    if (whole.error > tol) {
      throw Error(ErrorKind::accuracy,
                  "adaptive integration failed to reach tolerance; residual error " +
                      std::to_string(whole.error));
    }
    return whole.kronrod;
  }
  double m = 0.5 * (a + b);
  return integrate_recursive(f, a, m, 0.5 * tol, depth + 1, max_depth) +
         integrate_recursive(f, m, b, 0.5 * tol, depth + 1, max_depth);
}

}  // namespace

double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double rel_tol, double abs_tol, int max_depth) {
  PanelResult probe = gk15(f, a, b);
  double scale = std::abs(probe.kronrod);
  double tol = std::max(abs_tol, rel_tol * std::max(scale, 1e-300));
  if (probe.error <= tol) return probe.kronrod;
  double m = 0.5 * (a + b);
  return integrate_recursive(f, a, m, 0.5 * tol, 1, max_depth) +
         integrate_recursive(f, m, b, 0.5 * tol, 1, max_depth);
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorKind::usage, "line fit needs two equal-length samples of size >= 2");
  }
  const std::size_t n = x.size();
  CompensatedSum sx, sy;
  for (std::size_t i = 0; i < n; ++i) {
    sx.add(x[i]);
    sy.add(y[i]);
  }
  const double mx = sx.value() / static_cast<double>(n);
  const double my = sy.value() / static_cast<double>(n);
  CompensatedSum sxx, sxy;
  for (std::size_t i = 0; i < n; ++i) {
    sxx.add((x[i] - mx) * (x[i] - mx));
    sxy.add((x[i] - mx) * (y[i] - my));
  }
  if (sxx.value() <= 0.0) {
    throw Error(ErrorKind::fit, "line fit abscissae are all identical");
  }
  LineFit fit;
  fit.slope = sxy.value() / sxx.value();
  fit.intercept = my - fit.slope * mx;
  CompensatedSum rss;
  for (std::size_t i = 0; i < n; ++i) {
    double r = y[i] - (fit.intercept + fit.slope * x[i]);
    rss.add(r * r);
  }
  fit.rms_residual = std::sqrt(rss.value() / static_cast<double>(n));
  return fit;
}

Moments sample_moments(const std::vector<double>& xs) {
  if (xs.empty()) {
    throw Error(ErrorKind::usage, "moments of an empty sample are undefined");
  }
  CompensatedSum sum;
  for (double x : xs) sum.add(x);
  const double mean = sum.value() / static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0, 1};
  CompensatedSum ss;
  for (double x : xs) ss.add((x - mean) * (x - mean));
  const double var = ss.value() / static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(std::max(0.0, var)), xs.size()};
}

}  // namespace ionramsey
