#include "ionramsey/pulse_simulator.hpp"

#include <atomic>
#include <cmath>
#include <string>
#include <thread>
#include <utility>

#include "ionramsey/errors.hpp"
#include "ionramsey/numerics.hpp"

namespace ionramsey {

namespace {

using cplx = std::complex<double>;

constexpr double span_leak_tolerance = 1e-12;  // motional weight outside {|0>,|1>}

void check_cutoff_headroom(const SpinPhononState& state, const char* operation) {
  const int top = state.n_max();
  const double pop = std::norm(state.amp(Spin::S, top)) + std::norm(state.amp(Spin::D, top));
  if (pop > 1e-12) {
    throw Error(ErrorKind::truncation, "population pushed against the Fock cutoff",
                {{"operation", operation},
                 {"n_max", std::to_string(top)},
                 {"population", std::to_string(pop)}});
  }
}

// Raising-operator jump: |n> -> sqrt(n+1) |n+1>, then renormalized.
void jump_up(SpinPhononState& state) {
  check_cutoff_headroom(state, "heating jump");
  for (Spin spin : {Spin::S, Spin::D}) {
    for (int n = state.n_max(); n >= 1; --n) {
      state.amp(spin, n) = state.amp(spin, n - 1) * std::sqrt(static_cast<double>(n));
    }
    state.amp(spin, 0) = 0.0;
  }
  state.renormalize();
}

// Lowering-operator jump: |n> -> sqrt(n) |n-1>, then renormalized.
void jump_down(SpinPhononState& state) {
  for (Spin spin : {Spin::S, Spin::D}) {
    for (int n = 0; n < state.n_max(); ++n) {
      state.amp(spin, n) = state.amp(spin, n + 1) * std::sqrt(n + 1.0);
    }
    state.amp(spin, state.n_max()) = 0.0;
  }
  state.renormalize();
}

struct MotionalSplit {
  double p0 = 0.0;
  double p1 = 0.0;
  double outside = 0.0;
};

MotionalSplit motional_split(const SpinPhononState& state) {
  MotionalSplit split;
  split.p0 = state.motional_population(0);
  split.p1 = state.motional_population(1);
  CompensatedSum rest;
  for (int n = 2; n <= state.n_max(); ++n) rest.add(state.motional_population(n));
  split.outside = rest.value();
  return split;
}

bool in_phase_span(const MotionalSplit& split) {
  const double total = split.p0 + split.p1 + split.outside;
  return total > 0.0 && split.outside <= span_leak_tolerance * total;
}

// Phase accrued between |1> and |0> over a span of duration dt with constant
// branch weights, plus the linear detuning phase n * detuning * dt.
void apply_span_phases(SpinPhononState& state, double dt, double detuning, double nl_phase) {
  for (int n = 0; n <= state.n_max(); ++n) {
    const double angle = n * detuning * dt + (n == 1 ? nl_phase : 0.0);
    if (angle == 0.0) continue;
    const cplx factor = std::polar(1.0, angle);
    state.amp(Spin::S, n) *= factor;
    state.amp(Spin::D, n) *= factor;
  }
}

int evolve_uniform_jump(SpinPhononState& state, const FreeEvolution& evolution,
                        const NoiseModel& noise, Philox& rng) {
  int jumps = 0;
  double remaining = evolution.tau;
  while (true) {
    const double wait =
        noise.heating_rate > 0.0 ? rng.exponential(noise.heating_rate) : remaining + 1.0;
    const double span = std::min(wait, remaining);
    if (span > 0.0) {
      const MotionalSplit split = motional_split(state);
      double nl_phase = 0.0;
      if (in_phase_span(split)) {
        const double total = split.p0 + split.p1;
        nl_phase = evolution.nl.rate(split.p0 / total, split.p1 / total) * span;
      }
      apply_span_phases(state, span, evolution.detuning, nl_phase);
    }
    if (wait >= remaining) break;
    jump_up(state);
    ++jumps;
    remaining -= wait;
  }
  return jumps;
}

// Monte-Carlo wave-function span for rate-up n+1, rate-down n bath kinetics:
// amplitude decay exp(-rate (2n+1) t / 2) per level, jump when the squared
// norm crosses a uniform threshold.
int evolve_occupation_scaled(SpinPhononState& state, const FreeEvolution& evolution,
                             const NoiseModel& noise, Philox& rng) {
  const double rate = noise.heating_rate;
  const int top = state.n_max();
  int jumps = 0;
  double remaining = evolution.tau;

  while (remaining > 0.0) {
    std::vector<double> level(top + 1);
    for (int n = 0; n <= top; ++n) {
      level[n] = std::norm(state.amp(Spin::S, n)) + std::norm(state.amp(Spin::D, n));
    }

    const auto squared_norm = [&](double t) {
      CompensatedSum sum;
      for (int n = 0; n <= top; ++n) {
        if (level[n] > 0.0) sum.add(level[n] * std::exp(-rate * (2.0 * n + 1.0) * t));
      }
      return sum.value();
    };

    const double threshold = rng.uniform();
    double span = remaining;
    bool jumping = false;
    if (squared_norm(remaining) < threshold) {
      jumping = true;
      double lo = 0.0, hi = remaining;
      for (int it = 0; it < 200 && (hi - lo) > 1e-15 * remaining; ++it) {
        const double mid = 0.5 * (lo + hi);
        (squared_norm(mid) >= threshold ? lo : hi) = mid;
      }
      span = 0.5 * (lo + hi);
    }

    if (span > 0.0) {
      const MotionalSplit split = motional_split(state);
      double nl_phase = 0.0;
      if (in_phase_span(split)) {
        const double total = split.p0 + split.p1;
        const double p0 = split.p0 / total;
        const double p1 = split.p1 / total;
        // With support on {0,1} the reweighting is analytic:
        // integral of w1(t) dt = ln((p0 + p1) / (p0 + p1 e^{-2 rate T})) / (2 rate).
        const double w1_time =
            rate > 0.0
                ? std::log((p0 + p1) / (p0 + p1 * std::exp(-2.0 * rate * span))) / (2.0 * rate)
                : p1 * span;
        nl_phase = evolution.nl.per_w0 * (span - w1_time) + evolution.nl.per_w1 * w1_time;
      }
      for (int n = 0; n <= top; ++n) {
        const double decay = std::exp(-0.5 * rate * (2.0 * n + 1.0) * span);
        state.amp(Spin::S, n) *= decay;
        state.amp(Spin::D, n) *= decay;
      }
      apply_span_phases(state, span, evolution.detuning, nl_phase);
      state.renormalize();
    }

    remaining -= span;
    if (!jumping) break;

    CompensatedSum up_weight, down_weight;
    for (int n = 0; n <= top; ++n) {
      const double pop = std::norm(state.amp(Spin::S, n)) + std::norm(state.amp(Spin::D, n));
      up_weight.add(pop * (n + 1.0));
      down_weight.add(pop * n);
    }
    const double up = up_weight.value();
    const double total = up + down_weight.value();
    if (rng.uniform() * total < up) {
      jump_up(state);
    } else {
      jump_down(state);
    }
    ++jumps;
  }
  return jumps;
}

struct SequenceResult {
  SpinPhononState state;
  int jumps = 0;
};

// Shared shot core: everything up to (but not including) the readout.
SequenceResult run_sequence(const RamseyExperiment& experiment, const ShotSettings& settings,
                            Philox& rng) {
  experiment.trap.validate();
  experiment.noise.validate();
  if (!(settings.tau >= 0.0)) throw_validation("free evolution time must be non-negative");

  SequenceResult result{SpinPhononState(experiment.n_max), 0};
  const bool contaminated =
      experiment.noise.prep_error > 0.0 && rng.bernoulli(experiment.noise.prep_error);
  result.state = SpinPhononState::basis(Spin::S, contaminated ? 1 : 0, experiment.n_max);

  const double half_stark = 0.5 * settings.stark_phase;
  apply_carrier(result.state, settings.theta, 0.0);
  apply_blue_sideband(result.state, pi, 0.0, 0.0, half_stark);

  FreeEvolution evolution{settings.tau, settings.detuning, experiment.nl_coefficients()};
  result.jumps = free_evolve(result.state, evolution, experiment.noise, rng);

  apply_blue_sideband(result.state, pi, 0.0, 0.0, half_stark);
  apply_carrier(result.state, 0.5 * pi, settings.xi);
  result.state.renormalize();
  return result;
}

double fold_spam(double p, double spam_error) {
  return p * (1.0 - spam_error) + (1.0 - p) * spam_error;
}

}  // namespace

SpinPhononState::SpinPhononState(int n_max) : n_max_(n_max) {
  if (n_max < 2 || n_max > max_fock_order())
    throw_validation("Fock cutoff must lie in [2, " + std::to_string(max_fock_order()) + "]");
  amps_.assign(2 * (n_max_ + 1), cplx(0.0, 0.0));
  amps_[0] = 1.0;
}

SpinPhononState SpinPhononState::basis(Spin spin, int n, int n_max) {
  SpinPhononState state(n_max);
  if (n < 0 || n > n_max) throw_validation("basis index outside the ladder");
  state.amps_[0] = 0.0;
  state.amp(spin, n) = 1.0;
  return state;
}

std::complex<double>& SpinPhononState::amp(Spin spin, int n) {
  return amps_[static_cast<int>(spin) * (n_max_ + 1) + n];
}

const std::complex<double>& SpinPhononState::amp(Spin spin, int n) const {
  return amps_[static_cast<int>(spin) * (n_max_ + 1) + n];
}

double SpinPhononState::norm() const {
  CompensatedSum sum;
  for (const cplx& a : amps_) sum.add(std::norm(a));
  return std::sqrt(sum.value());
}

double SpinPhononState::spin_population(Spin spin) const {
  CompensatedSum sum;
  const int base = static_cast<int>(spin) * (n_max_ + 1);
  for (int n = 0; n <= n_max_; ++n) sum.add(std::norm(amps_[base + n]));
  return sum.value();
}

double SpinPhononState::motional_population(int n) const {
  return std::norm(amp(Spin::S, n)) + std::norm(amp(Spin::D, n));
}

void SpinPhononState::renormalize() {
  const double total = norm();
  if (!(total > 0.0)) throw_validation("cannot renormalize a zero state");
  for (cplx& a : amps_) a /= total;
}

NoiseModel NoiseModel::noiseless() {
  NoiseModel noise;
  noise.heating_rate = 0.0;
  noise.detuning_drift_sigma = 0.0;
  noise.spam_error = 0.0;
  noise.prep_error = 0.0;
  noise.shots_per_point = 1;
  return noise;
}

void NoiseModel::validate() const {
  ErrorDetails bad;
  if (!(heating_rate >= 0.0)) bad.emplace_back("heating_rate", "must be non-negative");
  if (!(detuning_drift_sigma >= 0.0))
    bad.emplace_back("detuning_drift_sigma", "must be non-negative");
  if (!(spam_error >= 0.0 && spam_error < 0.5))
    bad.emplace_back("spam_error", "must lie in [0, 0.5)");
  if (!(prep_error >= 0.0 && prep_error < 0.5))
    bad.emplace_back("prep_error", "must lie in [0, 0.5)");
  if (shots_per_point < 1) bad.emplace_back("shots_per_point", "must be at least 1");
  if (!bad.empty()) throw Error(ErrorKind::validation, "invalid noise model", bad);
}

const char* to_string(NoiseModel::HeatingMode mode) noexcept {
  switch (mode) {
    case NoiseModel::HeatingMode::uniform_jump: return "uniform_jump";
    case NoiseModel::HeatingMode::occupation_scaled: return "occupation_scaled";
  }
  return "unknown";
}

const char* to_string(ThetaLabel label) noexcept {
  switch (label) {
    case ThetaLabel::theta1: return "theta1";
    case ThetaLabel::theta2: return "theta2";
    case ThetaLabel::calibration: return "calibration";
  }
  return "unknown";
}

ThetaLabel theta_label_from_string(const std::string& text) {
  if (text == "theta1") return ThetaLabel::theta1;
  if (text == "theta2") return ThetaLabel::theta2;
  if (text == "calibration") return ThetaLabel::calibration;
  throw Error(ErrorKind::validation, "unknown theta label",
              {{"label", text}, {"expected", "theta1|theta2|calibration"}});
}

void apply_carrier(SpinPhononState& state, double angle, double phase, double detuning,
                   double rabi_reference) {
  double half = 0.5 * angle;
  double axis_z = 0.0;
  double axis_xy = 1.0;
  if (detuning != 0.0) {
    if (!(rabi_reference > 0.0))
      throw_validation("pulse detuning requires a positive Rabi reference");
    const double effective = std::hypot(rabi_reference, detuning);
    half = 0.5 * effective * (angle / rabi_reference);
    axis_z = detuning / effective;
    axis_xy = rabi_reference / effective;
  }
  const double c = std::cos(half);
  const double s = std::sin(half);
  const cplx drive = cplx(0.0, -1.0) * std::polar(axis_xy * s, -phase);
  const cplx diag_s = cplx(c, -axis_z * s);  // detuning tilt, S row
  const cplx diag_d = cplx(c, axis_z * s);
  for (int n = 0; n <= state.n_max(); ++n) {
    const cplx cs = state.amp(Spin::S, n);
    const cplx cd = state.amp(Spin::D, n);
    state.amp(Spin::S, n) = diag_s * cs + drive * cd;
    state.amp(Spin::D, n) = -std::conj(drive) * cs + diag_d * cd;
  }
}

void apply_blue_sideband(SpinPhononState& state, double angle, double phase, double detuning,
                         double stark_phase, double rabi_reference) {
  check_cutoff_headroom(state, "blue sideband");
  if (detuning != 0.0 && !(rabi_reference > 0.0))
    throw_validation("pulse detuning requires a positive Rabi reference");
  for (int n = state.n_max() - 1; n >= 0; --n) {
    const double scale = std::sqrt(n + 1.0);
    double half = 0.5 * angle * scale;
    double axis_z = 0.0;
    double axis_xy = 1.0;
    if (detuning != 0.0) {
      const double rabi_n = rabi_reference * scale;
      const double effective = std::hypot(rabi_n, detuning);
      half = 0.5 * effective * (angle / rabi_reference);
      axis_z = detuning / effective;
      axis_xy = rabi_n / effective;
    }
    const double c = std::cos(half);
    const double s = std::sin(half);
    const cplx drive = cplx(0.0, -1.0) * std::polar(axis_xy * s, -phase);
    const cplx cs = state.amp(Spin::S, n);
    const cplx cd = state.amp(Spin::D, n + 1);
    state.amp(Spin::S, n) = cplx(c, -axis_z * s) * cs + drive * cd;
    state.amp(Spin::D, n + 1) = -std::conj(drive) * cs + cplx(c, axis_z * s) * cd;
  }
  state.amp(Spin::D, 0) *= std::polar(1.0, -stark_phase);
}

void apply_pulse(SpinPhononState& state, const PulseSpec& pulse, double rabi_reference) {
  switch (pulse.kind) {
    case PulseSpec::Kind::carrier:
      apply_carrier(state, pulse.angle, pulse.phase, pulse.detuning, rabi_reference);
      return;
    case PulseSpec::Kind::blue_sideband:
      apply_blue_sideband(state, pulse.angle, pulse.phase, pulse.detuning, pulse.stark_phase,
                          rabi_reference);
      return;
  }
  throw_validation("unknown pulse kind");
}

int free_evolve(SpinPhononState& state, const FreeEvolution& evolution, const NoiseModel& noise,
                Philox& rng) {
  if (!(evolution.tau >= 0.0)) throw_validation("free evolution time must be non-negative");
  noise.validate();
  if (evolution.tau == 0.0) return 0;
  if (noise.heating_rate <= 0.0) {
    const MotionalSplit split = motional_split(state);
    double nl_phase = 0.0;
    if (in_phase_span(split)) {
      const double total = split.p0 + split.p1;
      nl_phase = evolution.nl.rate(split.p0 / total, split.p1 / total) * evolution.tau;
    }
    apply_span_phases(state, evolution.tau, evolution.detuning, nl_phase);
    return 0;
  }
  return noise.heating_mode == NoiseModel::HeatingMode::uniform_jump
             ? evolve_uniform_jump(state, evolution, noise, rng)
             : evolve_occupation_scaled(state, evolution, noise, rng);
}

int measure_shelving(const SpinPhononState& state, double spam_error, Philox& rng) {
  const double norm2 = state.norm() * state.norm();
  const double p = state.spin_population(Spin::D) / norm2;
  return rng.bernoulli(fold_spam(p, spam_error)) ? 1 : 0;
}

PhaseRateCoefficients RamseyExperiment::nl_coefficients() const {
  if (rate_method == RateMethod::closed_form) {
    return phase_rate_coefficients_closed_form(trap.x0_x(), coupling);
  }
  return phase_rate_coefficients_numeric(trap, coupling, transverse);
}

ShotRecord run_shot(const RamseyExperiment& experiment, const ShotSettings& settings,
                    std::uint64_t seed) {
  Philox rng(seed);
  const SequenceResult sequence = run_sequence(experiment, settings, rng);
  ShotRecord record;
  record.tau = settings.tau;
  record.theta_label = settings.label;
  record.xi_index = settings.xi_index;
  record.outcome = measure_shelving(sequence.state, experiment.noise.spam_error, rng);
  record.seed = seed;
  record.jump_count = sequence.jumps;
  return record;
}

double ramsey_probability(const RamseyExperiment& experiment, const ShotSettings& settings,
                          std::uint64_t seed, int* jump_count) {
  Philox rng(seed);
  const SequenceResult sequence = run_sequence(experiment, settings, rng);
  if (jump_count != nullptr) *jump_count = sequence.jumps;
  return fold_spam(sequence.state.spin_population(Spin::D), experiment.noise.spam_error);
}

std::vector<ContrastPoint> contrast_envelope(const RamseyExperiment& experiment,
                                             const std::vector<double>& taus, int trajectories,
                                             std::uint64_t seed, int threads) {
  constexpr int xi_points = 16;
  if (trajectories < 2 * xi_points)
    throw_validation("need at least two trajectories per analysis phase");
  for (double tau : taus) {
    if (!(tau >= 0.0)) throw_validation("free evolution time must be non-negative");
  }
  const int per_xi = trajectories / xi_points;
  const double ideal = (1.0 - 2.0 * experiment.noise.spam_error) *
                       (1.0 - experiment.noise.prep_error);

  std::vector<ContrastPoint> points(taus.size());
  const auto compute_point = [&](std::size_t ti) {
    const double tau = taus[ti];
    double mean_p[xi_points];
    double var_p[xi_points];
    for (int k = 0; k < xi_points; ++k) {
      const double xi = 2.0 * pi * k / xi_points;
      CompensatedSum sum, sum_sq;
      for (int j = 0; j < per_xi; ++j) {
        ShotSettings settings;
        settings.theta = 0.5 * pi;
        settings.xi = xi;
        settings.tau = tau;
        settings.label = ThetaLabel::calibration;
        settings.xi_index = k + 1;
        const double p = ramsey_probability(
            experiment, settings, derive_seed(seed, ti, static_cast<std::uint64_t>(k), j));
        sum.add(p);
        sum_sq.add(p * p);
      }
      mean_p[k] = sum.value() / per_xi;
      const double variance =
          std::max(0.0, (sum_sq.value() - per_xi * mean_p[k] * mean_p[k]) / (per_xi - 1.0));
      var_p[k] = variance / per_xi;  // variance of the mean
    }

    // P(xi) = B - (X/2) cos xi + (Y/2) sin xi on the uniform grid, where
    // X = A cos Phi and Y = A sin Phi; the grid makes the design orthogonal.
    CompensatedSum bsum, xsum, ysum, xvar, yvar;
    for (int k = 0; k < xi_points; ++k) {
      const double xi = 2.0 * pi * k / xi_points;
      const double ck = std::cos(xi);
      const double sk = std::sin(xi);
      bsum.add(mean_p[k]);
      xsum.add(mean_p[k] * ck);
      ysum.add(mean_p[k] * sk);
      xvar.add(var_p[k] * ck * ck);
      yvar.add(var_p[k] * sk * sk);
    }
    const double amp_x = -2.0 * xsum.value() / (0.5 * xi_points);
    const double amp_y = 2.0 * ysum.value() / (0.5 * xi_points);
    const double contrast = std::hypot(amp_x, amp_y);
    const double vx = 4.0 * xvar.value() / (0.25 * xi_points * xi_points);
    const double vy = 4.0 * yvar.value() / (0.25 * xi_points * xi_points);
    double sigma = 0.0;
    if (contrast > 1e-12) {
      const double cx = amp_x / contrast;
      const double cy = amp_y / contrast;
      sigma = std::sqrt(vx * cx * cx + vy * cy * cy);
    } else {
      sigma = std::sqrt(0.5 * (vx + vy));
    }

    ContrastPoint point;
    point.tau = tau;
    point.contrast = contrast;
    point.contrast_stderr = sigma;
    point.offset = bsum.value() / xi_points;
    point.predicted_zero_jump = ideal * std::exp(-experiment.noise.heating_rate * tau);
    points[ti] = point;
  };

  if (threads <= 1 || taus.size() <= 1) {
    for (std::size_t ti = 0; ti < taus.size(); ++ti) compute_point(ti);
  } else {
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
      for (std::size_t ti = next.fetch_add(1); ti < taus.size(); ti = next.fetch_add(1)) {
        compute_point(ti);
      }
    };
    std::vector<std::thread> pool;
    const int count = std::min<int>(threads, static_cast<int>(taus.size()));
    pool.reserve(count);
    for (int i = 0; i < count; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return points;
}

}  // namespace ionramsey
