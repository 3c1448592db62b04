#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "ionramsey/nonlinear_phase.hpp"
#include "ionramsey/numerics.hpp"
#include "ionramsey/oscillator.hpp"
#include "ionramsey/rng.hpp"

namespace ionramsey {

enum class Spin { S = 0, D = 1 };  // ground vs metastable shelf

// Pure state of (qubit x truncated Fock ladder), amplitudes indexed by
// (spin, n) with n = 0..n_max. Operations keep the norm at 1 within 1e-9;
// population pushed against the ladder cutoff raises a truncation error.
class SpinPhononState {
 public:
  explicit SpinPhononState(int n_max = default_n_max());
  static SpinPhononState basis(Spin spin, int n, int n_max = default_n_max());

  static constexpr int default_n_max() { return 20; }

  int n_max() const { return n_max_; }

  std::complex<double>& amp(Spin spin, int n);
  const std::complex<double>& amp(Spin spin, int n) const;

  double norm() const;
  double spin_population(Spin spin) const;
  double motional_population(int n) const;  // traced over spin
  void renormalize();

 private:
  int n_max_;
  std::vector<std::complex<double>> amps_;
};

struct PulseSpec {
  enum class Kind { carrier, blue_sideband };
  Kind kind = Kind::carrier;
  double angle = 0.0;        // resonant Rabi angle (n=0 pair reference), rad
  double phase = 0.0;        // drive phase, rad
  double detuning = 0.0;     // rad/s; tilts the rotation axis
  double stark_phase = 0.0;  // phase bookkeeping on the undriven |D,0>, rad
};

struct NoiseModel {
  enum class HeatingMode { uniform_jump, occupation_scaled };

  double heating_rate = 0.0;          // quanta/s
  HeatingMode heating_mode = HeatingMode::uniform_jump;
  double detuning_drift_sigma = 0.0;  // rad/s random-walk step per block
  double spam_error = 0.0;            // readout flip probability, [0, 0.5)
  double prep_error = 0.01;           // residual |S,1> population after cooling
  int shots_per_point = 1;

  static NoiseModel noiseless();
  void validate() const;
};

const char* to_string(NoiseModel::HeatingMode mode) noexcept;

enum class ThetaLabel { theta1, theta2, calibration };

const char* to_string(ThetaLabel label) noexcept;
ThetaLabel theta_label_from_string(const std::string& text);

struct ShotRecord {
  double tau = 0.0;          // s
  ThetaLabel theta_label = ThetaLabel::calibration;
  int xi_index = 0;          // 1..3 for Ramsey points, 0 for plain carrier shots
  int outcome = 0;           // 1 = shelved (D)
  std::uint64_t seed = 0;    // per-shot stream; replaying it reproduces the shot
  int jump_count = 0;
};

// Carrier rotation: couples (S,n) <-> (D,n) identically for every n, with
// P(D) = sin^2(angle/2) starting from S. A non-zero detuning tilts the
// rotation axis assuming the pulse lasts angle / rabi_reference.
void apply_carrier(SpinPhononState& state, double angle, double phase,
                   double detuning = 0.0, double rabi_reference = 0.0);

// Blue sideband: couples (S,n) <-> (D,n+1) with Rabi angle scaled by
// sqrt(n+1); |D,0> is dark and only collects exp(-i stark_phase).
void apply_blue_sideband(SpinPhononState& state, double angle, double phase,
                         double detuning = 0.0, double stark_phase = 0.0,
                         double rabi_reference = 0.0);

void apply_pulse(SpinPhononState& state, const PulseSpec& pulse, double rabi_reference = 0.0);

// Free evolution parameters. The non-linear phase rate is re-evaluated
// piecewise from the instantaneous branch weights through `nl`; the linear
// detuning adds phase n * detuning * dt on level n.
struct FreeEvolution {
  double tau = 0.0;       // s
  double detuning = 0.0;  // rad/s
  PhaseRateCoefficients nl;
};

// Evolves in place, sampling heating quantum jumps; returns the jump count.
// Trajectories whose motional support leaves span{|0>,|1>} stop accruing
// non-linear phase (and resume if occupation_scaled jumps bring them back).
int free_evolve(SpinPhononState& state, const FreeEvolution& evolution,
                const NoiseModel& noise, Philox& rng);

// Threshold detection with SPAM flip; returns 1 for D.
int measure_shelving(const SpinPhononState& state, double spam_error, Philox& rng);

// Everything about the apparatus that stays fixed while shots are taken.
struct RamseyExperiment {
  TrapConfig trap;
  NonlinearCoupling coupling;
  NoiseModel noise = NoiseModel::noiseless();
  RateMethod rate_method = RateMethod::closed_form;
  TransverseModel transverse = TransverseModel::thermal;  // used by numeric rates
  double rabi_reference = 2 * pi * 50e3;  // rad/s, pulse-detuning bookkeeping only
  int n_max = SpinPhononState::default_n_max();

  // Rate coefficients implied by rate_method (closed form uses x0_x).
  PhaseRateCoefficients nl_coefficients() const;
};

// One cell of the measurement protocol.
struct ShotSettings {
  double theta = 0.0;        // preparation carrier angle, rad
  double xi = 0.0;           // readout analysis phase, rad
  double tau = 0.0;          // free evolution, s
  double detuning = 0.0;     // rad/s during free evolution
  double stark_phase = 0.0;  // total sideband Stark offset entering the fringe
  ThetaLabel label = ThetaLabel::theta1;
  int xi_index = 1;
};

// Full sequence: prepare |S,0> (with prep_error contamination), carrier(theta),
// blue sideband pi, free evolution, blue sideband pi, carrier(pi/2, xi),
// threshold readout. Identical seeds give identical records.
ShotRecord run_shot(const RamseyExperiment& experiment, const ShotSettings& settings,
                    std::uint64_t seed);

// Same sequence, stopping before the readout Bernoulli: returns the exact
// P(D) of the prepared trajectory (the seed only drives prep contamination
// and heating jumps). SPAM mixing is folded in analytically.
double ramsey_probability(const RamseyExperiment& experiment, const ShotSettings& settings,
                          std::uint64_t seed, int* jump_count = nullptr);

struct ContrastPoint {
  double tau = 0.0;
  double contrast = 0.0;        // least-squares fringe amplitude A
  double contrast_stderr = 0.0; // trajectory-sampling error on A
  double offset = 0.0;          // fitted B
  double predicted_zero_jump = 0.0;  // A(0) * exp(-heating_rate * tau)
};

// Fringe contrast vs tau under heating alone (balanced preparation, no QPN:
// trajectory probabilities are averaged, not sampled). `trajectories` is the
// total budget per tau, split evenly over a 16-point xi sweep.
std::vector<ContrastPoint> contrast_envelope(const RamseyExperiment& experiment,
                                             const std::vector<double>& taus, int trajectories,
                                             std::uint64_t seed, int threads = 1);

}  // namespace ionramsey
